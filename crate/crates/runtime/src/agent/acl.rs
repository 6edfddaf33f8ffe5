//! A minimal performative message envelope and its wire encoding.
//!
//! Body layout (carried in ACL_MESSAGE frames): one performative byte, then
//! length-prefixed sender, receiver and conversation id, then the content
//! (a tagged belief atom or opaque bytes). Every transport hop encodes and
//! re-parses messages, local or remote — the cost the backchannels avoid.

use super::term::{BeliefAtom, Term};

/// Receiver id that fans a message out to every registered agent but the
/// sender.
pub const BROADCAST: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Performative {
    Inform = 1,
    Request = 2,
    Agree = 3,
    Refuse = 4,
}

impl Performative {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Performative::Inform),
            2 => Some(Performative::Request),
            3 => Some(Performative::Agree),
            4 => Some(Performative::Refuse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageContent {
    Atom(BeliefAtom),
    Bytes(Vec<u8>),
}

impl MessageContent {
    /// Short label used for per-content accounting (the predicate name for
    /// structured content).
    pub fn label(&self) -> String {
        match self {
            MessageContent::Atom(a) => a.predicate.clone(),
            MessageContent::Bytes(_) => "bytes".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AclMessage {
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub content: MessageContent,
    pub conversation_id: String,
}

impl AclMessage {
    pub fn inform(sender: &str, receiver: &str, content: BeliefAtom) -> Self {
        Self {
            performative: Performative::Inform,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            content: MessageContent::Atom(content),
            conversation_id: String::new(),
        }
    }

    pub fn request(sender: &str, receiver: &str, content: BeliefAtom) -> Self {
        Self {
            performative: Performative::Request,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            content: MessageContent::Atom(content),
            conversation_id: String::new(),
        }
    }

    pub fn with_conversation(mut self, id: impl Into<String>) -> Self {
        self.conversation_id = id.into();
        self
    }

    pub fn is_broadcast(&self) -> bool {
        self.receiver == BROADCAST
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.push(self.performative as u8);
        put_str(&mut out, &self.sender);
        put_str(&mut out, &self.receiver);
        put_str(&mut out, &self.conversation_id);
        match &self.content {
            MessageContent::Atom(atom) => {
                out.push(0);
                encode_atom(&mut out, atom);
            }
            MessageContent::Bytes(bytes) => {
                out.push(1);
                put_bytes(&mut out, bytes);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        let performative = Performative::from_byte(r.u8()?)
            .ok_or_else(|| "unknown performative".to_string())?;
        let sender = r.string()?;
        let receiver = r.string()?;
        let conversation_id = r.string()?;
        let content = match r.u8()? {
            0 => MessageContent::Atom(decode_atom(&mut r)?),
            1 => MessageContent::Bytes(r.bytes()?.to_vec()),
            t => return Err(format!("unknown content tag {t}")),
        };
        if r.pos != bytes.len() {
            return Err("trailing bytes in message".to_string());
        }
        Ok(Self { performative, sender, receiver, content, conversation_id })
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_bytes(out, s.as_bytes());
}

fn encode_atom(out: &mut Vec<u8>, atom: &BeliefAtom) {
    put_str(out, &atom.predicate);
    out.extend_from_slice(&(atom.args.len() as u32).to_be_bytes());
    for arg in &atom.args {
        encode_term(out, arg);
    }
}

fn encode_term(out: &mut Vec<u8>, term: &Term) {
    match term {
        Term::Sym(s) => {
            out.push(0);
            put_str(out, s);
        }
        Term::Int(i) => {
            out.push(1);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Term::Float(x) => {
            out.push(2);
            out.extend_from_slice(&x.to_bits().to_be_bytes());
        }
        Term::Bool(b) => {
            out.push(3);
            out.push(u8::from(*b));
        }
        Term::Str(s) => {
            out.push(4);
            put_str(out, s);
        }
        Term::Var(v) => {
            out.push(5);
            put_str(out, v);
        }
        Term::App(f, args) => {
            out.push(6);
            put_str(out, f);
            out.extend_from_slice(&(args.len() as u32).to_be_bytes());
            for a in args {
                encode_term(out, a);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, String> {
        let b = *self.bytes.get(self.pos).ok_or("truncated")?;
        self.pos += 1;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, String> {
        let slice = self.bytes.get(self.pos..self.pos + 4).ok_or("truncated")?;
        self.pos += 4;
        Ok(u32::from_be_bytes(slice.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        let slice = self.bytes.get(self.pos..self.pos + 8).ok_or("truncated")?;
        self.pos += 8;
        Ok(u64::from_be_bytes(slice.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], String> {
        let len = self.u32()? as usize;
        let slice = self.bytes.get(self.pos..self.pos + len).ok_or("truncated")?;
        self.pos += len;
        Ok(slice)
    }

    fn string(&mut self) -> Result<String, String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|e| e.to_string())
    }
}

fn decode_atom(r: &mut Reader) -> Result<BeliefAtom, String> {
    let predicate = r.string()?;
    let argc = r.u32()? as usize;
    if argc > 1 << 16 {
        return Err("implausible arity".to_string());
    }
    let mut args = Vec::with_capacity(argc);
    for _ in 0..argc {
        args.push(decode_term(r)?);
    }
    Ok(BeliefAtom { predicate, args })
}

fn decode_term(r: &mut Reader) -> Result<Term, String> {
    match r.u8()? {
        0 => Ok(Term::Sym(r.string()?)),
        1 => Ok(Term::Int(r.u64()? as i64)),
        2 => Ok(Term::Float(f64::from_bits(r.u64()?))),
        3 => Ok(Term::Bool(r.u8()? != 0)),
        4 => Ok(Term::Str(r.string()?)),
        5 => Ok(Term::Var(r.string()?)),
        6 => {
            let f = r.string()?;
            let argc = r.u32()? as usize;
            if argc > 1 << 16 {
                return Err("implausible arity".to_string());
            }
            let mut args = Vec::with_capacity(argc);
            for _ in 0..argc {
                args.push(decode_term(r)?);
            }
            Ok(Term::App(f, args))
        }
        t => Err(format!("unknown term tag {t}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::term::atom;

    #[test]
    fn message_roundtrip() {
        let msg = AclMessage::inform(
            "g1",
            BROADCAST,
            atom(
                "advertisement",
                vec![
                    Term::sym("g1"),
                    Term::sym("GATHER"),
                    Term::Int(5),
                    Term::Int(0),
                    Term::Int(123),
                ],
            ),
        )
        .with_conversation("conv-1");
        let back = AclMessage::decode(&msg.encode()).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn bytes_content_roundtrip() {
        let mut msg = AclMessage::request("t1", "g1", atom("fetch", vec![Term::Int(3)]));
        msg.content = MessageContent::Bytes(vec![0, 1, 2, 255]);
        let back = AclMessage::decode(&msg.encode()).unwrap();
        assert_eq!(back.content, MessageContent::Bytes(vec![0, 1, 2, 255]));
    }

    #[test]
    fn negative_int_roundtrip() {
        let msg = AclMessage::inform("a", "b", atom("n", vec![Term::Int(-42)]));
        let back = AclMessage::decode(&msg.encode()).unwrap();
        assert_eq!(back.content, MessageContent::Atom(atom("n", vec![Term::Int(-42)])));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(AclMessage::decode(&[]).is_err());
        assert!(AclMessage::decode(&[9, 0, 0, 0, 0]).is_err());
    }
}
