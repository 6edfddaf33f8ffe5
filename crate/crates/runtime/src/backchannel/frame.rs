//! Length-prefixed binary framing shared by the backchannel adapters and the
//! socket message transport.
//!
//! Wire layout: a 32-bit unsigned big-endian length, one kind byte, then
//! `length - 1` bytes of body.

use std::io::{self, Read, Write};

/// Upper bound on a frame body; anything larger is treated as corruption.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    PullRequest = 0x01,
    PullResponse = 0x02,
    Status = 0x03,
    AclMessage = 0x04,
    NodeHello = 0x05,
    AgentUp = 0x06,
    AgentDown = 0x07,
    Control = 0x08,
}

impl FrameKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(FrameKind::PullRequest),
            0x02 => Some(FrameKind::PullResponse),
            0x03 => Some(FrameKind::Status),
            0x04 => Some(FrameKind::AclMessage),
            0x05 => Some(FrameKind::NodeHello),
            0x06 => Some(FrameKind::AgentUp),
            0x07 => Some(FrameKind::AgentDown),
            0x08 => Some(FrameKind::Control),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, body: Vec<u8>) -> Self {
        Self { kind, body }
    }

    pub fn encode(&self) -> Vec<u8> {
        let len = (self.body.len() as u32) + 1;
        let mut out = Vec::with_capacity(self.body.len() + 5);
        out.extend_from_slice(&len.to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Frame> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_be_bytes(len_buf);
        if len < 1 || len > MAX_FRAME_LEN {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("invalid frame length {len}"),
            ));
        }
        let mut kind_buf = [0u8; 1];
        r.read_exact(&mut kind_buf)?;
        let kind = FrameKind::from_byte(kind_buf[0]).ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidData, format!("unknown frame kind {:#x}", kind_buf[0]))
        })?;
        let mut body = vec![0u8; (len - 1) as usize];
        r.read_exact(&mut body)?;
        Ok(Frame { kind, body })
    }

    /// Decode a frame from a byte slice, returning it and the bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), String> {
        let mut cursor = io::Cursor::new(bytes);
        let frame = Frame::read_from(&mut cursor).map_err(|e| e.to_string())?;
        Ok((frame, cursor.position() as usize))
    }
}

/// STATUS frame bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Sent by the client right after connecting; announces the channel.
    Hello,
    /// Clean shutdown; carries the number of items lost in flight.
    Closing { in_flight: u32 },
    /// The server-side provider is gone; the channel is unusable.
    Fault,
}

impl Status {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Status::Hello => vec![1],
            Status::Closing { in_flight } => {
                let mut v = vec![2];
                v.extend_from_slice(&in_flight.to_be_bytes());
                v
            }
            Status::Fault => vec![3],
        }
    }

    pub fn decode(body: &[u8]) -> Result<Self, String> {
        match body.first() {
            Some(1) => Ok(Status::Hello),
            Some(2) => {
                let in_flight = body
                    .get(1..5)
                    .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
                    .unwrap_or(0);
                Ok(Status::Closing { in_flight })
            }
            Some(3) => Ok(Status::Fault),
            other => Err(format!("unknown status code {other:?}")),
        }
    }
}
