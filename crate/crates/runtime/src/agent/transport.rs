//! ACL message transports: in-process delivery and a socket variant for
//! multi-node runs.
//!
//! Both variants encode every message and re-parse it on delivery, so the
//! cost of the ACL path is paid whether or not a network is involved. A
//! per-transport counter tracks messages sent, and a per-content-label map
//! supports accounting checks.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use super::acl::AclMessage;
use crate::backchannel::frame::{Frame, FrameKind};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unknown receiver `{0}`")]
    UnknownReceiver(String),
    #[error("transport down: {0}")]
    TransportDown(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

pub trait MessageTransport: Send + Sync {
    fn register_agent(&self, id: &str);
    fn deregister_agent(&self, id: &str);
    fn send(&self, msg: &AclMessage) -> Result<(), TransportError>;
    /// Messages sent through this transport (one per `send` call).
    fn sent_total(&self) -> u64;
    /// Per-content-label send counts.
    fn content_counts(&self) -> HashMap<String, u64>;
}

/// Registry of local agent mailboxes.
#[derive(Default)]
pub struct MailboxHub {
    boxes: RwLock<HashMap<String, Arc<Mutex<VecDeque<AclMessage>>>>>,
}

impl MailboxHub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, id: &str) -> Arc<Mutex<VecDeque<AclMessage>>> {
        let mut boxes = self.boxes.write();
        boxes.entry(id.to_string()).or_default().clone()
    }

    pub fn deregister(&self, id: &str) {
        self.boxes.write().remove(id);
    }

    pub fn contains(&self, id: &str) -> bool {
        self.boxes.read().contains_key(id)
    }

    pub fn agent_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.boxes.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn deliver(&self, msg: AclMessage) -> Result<(), TransportError> {
        let mailbox = self
            .boxes
            .read()
            .get(&msg.receiver)
            .cloned()
            .ok_or_else(|| TransportError::UnknownReceiver(msg.receiver.clone()))?;
        mailbox.lock().push_back(msg);
        Ok(())
    }

    /// Deliver to every local agent except the sender.
    pub fn broadcast(&self, msg: &AclMessage) {
        let boxes: Vec<_> = self
            .boxes
            .read()
            .iter()
            .filter(|(id, _)| **id != msg.sender)
            .map(|(id, mb)| (id.clone(), mb.clone()))
            .collect();
        for (id, mailbox) in boxes {
            let mut copy = msg.clone();
            copy.receiver = id;
            mailbox.lock().push_back(copy);
        }
    }
}

fn reencode(msg: &AclMessage) -> Result<AclMessage, TransportError> {
    // The ACL cost contract: serialize on send, parse on receipt.
    AclMessage::decode(&msg.encode()).map_err(TransportError::Malformed)
}

#[derive(Default)]
struct SendStats {
    total: AtomicU64,
    by_label: Mutex<HashMap<String, u64>>,
}

impl SendStats {
    fn count(&self, msg: &AclMessage) {
        self.total.fetch_add(1, Ordering::Relaxed);
        *self.by_label.lock().entry(msg.content.label()).or_insert(0) += 1;
    }
}

/// In-process transport: a thin layer over the mailbox hub.
pub struct LocalTransport {
    hub: Arc<MailboxHub>,
    stats: SendStats,
}

impl LocalTransport {
    pub fn new(hub: Arc<MailboxHub>) -> Arc<Self> {
        Arc::new(Self { hub, stats: SendStats::default() })
    }
}

impl MessageTransport for LocalTransport {
    fn register_agent(&self, id: &str) {
        self.hub.register(id);
    }

    fn deregister_agent(&self, id: &str) {
        self.hub.deregister(id);
    }

    fn send(&self, msg: &AclMessage) -> Result<(), TransportError> {
        let decoded = reencode(msg)?;
        self.stats.count(msg);
        if decoded.is_broadcast() {
            self.hub.broadcast(&decoded);
            Ok(())
        } else {
            self.hub.deliver(decoded)
        }
    }

    fn sent_total(&self) -> u64 {
        self.stats.total.load(Ordering::Relaxed)
    }

    fn content_counts(&self) -> HashMap<String, u64> {
        self.stats.by_label.lock().clone()
    }
}

/// Handler invoked for CONTROL frames; an optional response body is written
/// back on the same connection.
pub type ControlHandler = Box<dyn Fn(&[u8]) -> Option<Vec<u8>> + Send + Sync>;

struct PeerLinks {
    addrs: RwLock<HashMap<u32, String>>,
    links: Mutex<HashMap<u32, TcpStream>>,
    helloed: Mutex<HashSet<u32>>,
}

/// Socket transport: local hub plus framed TCP links to peer nodes.
///
/// Nodes exchange rosters on first contact (NODE_HELLO) and incremental
/// updates (AGENT_UP / AGENT_DOWN) so that unicast sends can be routed to the
/// owning node. Broadcasts fan out to all local agents and one frame per
/// peer node.
pub struct SocketTransport {
    node: u32,
    hub: Arc<MailboxHub>,
    stats: SendStats,
    peers: Arc<PeerLinks>,
    directory: Arc<RwLock<HashMap<String, u32>>>,
    stop: Arc<AtomicBool>,
    accept_thread: Mutex<Option<JoinHandle<()>>>,
    local_addr: SocketAddr,
    control: Arc<Mutex<Option<ControlHandler>>>,
}

impl SocketTransport {
    pub fn new(
        node: u32,
        listen: &str,
        peer_addrs: HashMap<u32, String>,
        hub: Arc<MailboxHub>,
    ) -> std::io::Result<Arc<Self>> {
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;

        let transport = Arc::new(Self {
            node,
            hub,
            stats: SendStats::default(),
            peers: Arc::new(PeerLinks {
                addrs: RwLock::new(peer_addrs),
                links: Mutex::new(HashMap::new()),
                helloed: Mutex::new(HashSet::new()),
            }),
            directory: Arc::new(RwLock::new(HashMap::new())),
            stop: Arc::new(AtomicBool::new(false)),
            accept_thread: Mutex::new(None),
            local_addr,
            control: Arc::new(Mutex::new(None)),
        });

        let weak = Arc::downgrade(&transport);
        let stop = transport.stop.clone();
        let accept = std::thread::Builder::new()
            .name(format!("transport-accept-{node}"))
            .spawn(move || {
                let mut readers: Vec<JoinHandle<()>> = Vec::new();
                loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let weak = weak.clone();
                            let stop = stop.clone();
                            let r = std::thread::Builder::new()
                                .name("transport-reader".to_string())
                                .spawn(move || reader_loop(stream, weak, stop))
                                .expect("spawn transport reader");
                            readers.push(r);
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(5));
                        }
                        Err(_) => break,
                    }
                }
                for r in readers {
                    let _ = r.join();
                }
            })
            .expect("spawn transport accept loop");
        *transport.accept_thread.lock() = Some(accept);
        Ok(transport)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    pub fn set_control_handler(&self, handler: ControlHandler) {
        *self.control.lock() = Some(handler);
    }

    /// Add or replace a peer node's address (used when listeners bind to
    /// OS-assigned ports and addresses are exchanged after construction).
    pub fn add_peer(&self, node: u32, addr: &str) {
        self.peers.addrs.write().insert(node, addr.to_string());
    }

    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.peers.links.lock().clear();
        if let Some(t) = self.accept_thread.lock().take() {
            let _ = t.join();
        }
    }

    fn roster_body(&self) -> Vec<u8> {
        let ids = self.hub.agent_ids();
        let mut body = Vec::new();
        body.extend_from_slice(&self.node.to_be_bytes());
        body.extend_from_slice(&(ids.len() as u32).to_be_bytes());
        for id in ids {
            body.extend_from_slice(&(id.len() as u32).to_be_bytes());
            body.extend_from_slice(id.as_bytes());
        }
        body
    }

    /// Write a frame to a peer, connecting and exchanging rosters first if
    /// needed. Drops the link on write failure so the next send reconnects.
    fn send_to_peer(&self, peer: u32, frame: &Frame) -> Result<(), TransportError> {
        let mut links = self.peers.links.lock();
        if !links.contains_key(&peer) {
            let addr = self
                .peers
                .addrs
                .read()
                .get(&peer)
                .cloned()
                .ok_or_else(|| TransportError::TransportDown(format!("no address for node {peer}")))?;
            let sock_addr: SocketAddr = addr
                .parse()
                .map_err(|e| TransportError::TransportDown(format!("bad peer address {addr}: {e}")))?;
            let mut stream = TcpStream::connect_timeout(&sock_addr, Duration::from_secs(2))
                .map_err(|e| TransportError::TransportDown(format!("connect {addr}: {e}")))?;
            let hello = Frame::new(FrameKind::NodeHello, self.roster_body());
            stream
                .write_all(&hello.encode())
                .map_err(|e| TransportError::TransportDown(e.to_string()))?;
            self.peers.helloed.lock().insert(peer);
            links.insert(peer, stream);
        }
        let stream = links.get_mut(&peer).expect("link just ensured");
        if let Err(e) = stream.write_all(&frame.encode()) {
            links.remove(&peer);
            return Err(TransportError::TransportDown(e.to_string()));
        }
        Ok(())
    }

    fn broadcast_to_peers(&self, frame: &Frame) {
        let peer_ids: Vec<u32> = self.peers.addrs.read().keys().copied().collect();
        for peer in peer_ids {
            if let Err(e) = self.send_to_peer(peer, frame) {
                log::debug!("node {}: broadcast to node {peer} failed: {e}", self.node);
            }
        }
    }
}

impl MessageTransport for SocketTransport {
    fn register_agent(&self, id: &str) {
        self.hub.register(id);
        self.directory.write().insert(id.to_string(), self.node);
        let mut body = self.node.to_be_bytes().to_vec();
        body.extend_from_slice(id.as_bytes());
        self.broadcast_to_peers(&Frame::new(FrameKind::AgentUp, body));
    }

    fn deregister_agent(&self, id: &str) {
        self.hub.deregister(id);
        self.directory.write().remove(id);
        let mut body = self.node.to_be_bytes().to_vec();
        body.extend_from_slice(id.as_bytes());
        self.broadcast_to_peers(&Frame::new(FrameKind::AgentDown, body));
    }

    fn send(&self, msg: &AclMessage) -> Result<(), TransportError> {
        let decoded = reencode(msg)?;
        self.stats.count(msg);
        if decoded.is_broadcast() {
            self.hub.broadcast(&decoded);
            self.broadcast_to_peers(&Frame::new(FrameKind::AclMessage, msg.encode()));
            return Ok(());
        }
        let owner = self
            .directory
            .read()
            .get(&decoded.receiver)
            .copied()
            .ok_or_else(|| TransportError::UnknownReceiver(decoded.receiver.clone()))?;
        if owner == self.node {
            self.hub.deliver(decoded)
        } else {
            self.send_to_peer(owner, &Frame::new(FrameKind::AclMessage, msg.encode()))
        }
    }

    fn sent_total(&self) -> u64 {
        self.stats.total.load(Ordering::Relaxed)
    }

    fn content_counts(&self) -> HashMap<String, u64> {
        self.stats.by_label.lock().clone()
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn reader_loop(mut stream: TcpStream, weak: std::sync::Weak<SocketTransport>, stop: Arc<AtomicBool>) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(100)));
    loop {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let frame = match Frame::read_from(&mut stream) {
            Ok(f) => f,
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(_) => return,
        };
        let Some(transport) = weak.upgrade() else { return };
        match frame.kind {
            FrameKind::AclMessage => match AclMessage::decode(&frame.body) {
                Ok(msg) => {
                    if msg.is_broadcast() {
                        transport.hub.broadcast(&msg);
                    } else if let Err(e) = transport.hub.deliver(msg) {
                        log::debug!("node {}: dropping inbound message: {e}", transport.node);
                    }
                }
                Err(e) => log::warn!("node {}: bad ACL frame: {e}", transport.node),
            },
            FrameKind::NodeHello => {
                if let Some((peer, roster)) = decode_roster(&frame.body) {
                    {
                        let mut dir = transport.directory.write();
                        for id in roster {
                            dir.insert(id, peer);
                        }
                    }
                    // Reply with our roster once so both directories converge
                    // regardless of who connected first.
                    let already = transport.peers.helloed.lock().contains(&peer);
                    if !already {
                        let hello = Frame::new(FrameKind::NodeHello, transport.roster_body());
                        let _ = transport.send_to_peer(peer, &hello);
                        transport.peers.helloed.lock().insert(peer);
                    }
                }
            }
            FrameKind::AgentUp => {
                if let Some((peer, id)) = decode_agent_frame(&frame.body) {
                    transport.directory.write().insert(id, peer);
                }
            }
            FrameKind::AgentDown => {
                if let Some((_, id)) = decode_agent_frame(&frame.body) {
                    transport.directory.write().remove(&id);
                }
            }
            FrameKind::Control => {
                let response = {
                    let guard = transport.control.lock();
                    guard.as_ref().and_then(|h| h(&frame.body))
                };
                if let Some(body) = response {
                    let _ = stream.write_all(&Frame::new(FrameKind::Control, body).encode());
                }
            }
            _ => {}
        }
    }
}

fn decode_roster(body: &[u8]) -> Option<(u32, Vec<String>)> {
    if body.len() < 8 {
        return None;
    }
    let peer = u32::from_be_bytes(body[..4].try_into().unwrap());
    let count = u32::from_be_bytes(body[4..8].try_into().unwrap()) as usize;
    let mut ids = Vec::with_capacity(count);
    let mut pos = 8;
    for _ in 0..count {
        let len = u32::from_be_bytes(body.get(pos..pos + 4)?.try_into().unwrap()) as usize;
        pos += 4;
        let id = std::str::from_utf8(body.get(pos..pos + len)?).ok()?;
        pos += len;
        ids.push(id.to_string());
    }
    Some((peer, ids))
}

fn decode_agent_frame(body: &[u8]) -> Option<(u32, String)> {
    if body.len() < 4 {
        return None;
    }
    let peer = u32::from_be_bytes(body[..4].try_into().unwrap());
    let id = std::str::from_utf8(&body[4..]).ok()?;
    Some((peer, id.to_string()))
}

/// Send one CONTROL frame to a node's transport listener and wait for the
/// response frame, if any. Used by orchestration tooling.
pub fn control_request(
    addr: &str,
    body: Vec<u8>,
    timeout: Duration,
    expect_response: bool,
) -> std::io::Result<Option<Vec<u8>>> {
    let sock_addr: SocketAddr = addr
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{e}")))?;
    let mut stream = TcpStream::connect_timeout(&sock_addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.write_all(&Frame::new(FrameKind::Control, body).encode())?;
    if !expect_response {
        return Ok(None);
    }
    let frame = Frame::read_from(&mut stream)?;
    Ok(Some(frame.body))
}
