//! TCP pull backchannels.
//!
//! A pair of interface-adapter components extends a local DATA pull
//! collaboration across a network boundary: a `TcpPullServer` bound to the
//! component exporting the pull interface, and a `TcpPullClient` bound to the
//! component requiring it. The adapter pair is transparent — items cross
//! unchanged — and the channel lifecycle is reported through container
//! events (`channel_active`, `channel_closed`) on both sides, with no
//! agent-level message involved.

pub mod frame;

use std::collections::HashMap;
use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use crate::collab::data::DataEnvelope;
use crate::collab::events::EventPayload;
use crate::container::{
    CollabStyle, ComponentId, ComponentInstance, ComponentSetup, ComponentType, ContainerError,
    ContextId, Direction, EndpointHandle, IfaceRef, InterfaceDescriptor, LifecycleTarget,
};
use crate::property::{PropertyMap, PropertyValue};
use crate::props;
use crate::Container;

use frame::{Frame, FrameKind, Status};

pub const TCP_PULL_SERVER_TYPE: &str = "TcpPullServer";
pub const TCP_PULL_CLIENT_TYPE: &str = "TcpPullClient";

/// Channel lifecycle event names.
pub mod channel_events {
    pub const CHANNEL_LISTENING: &str = "channel_listening";
    pub const CHANNEL_ACTIVE: &str = "channel_active";
    pub const CHANNEL_CLOSED: &str = "channel_closed";
}

/// Default connect/read timeout for pull clients.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("port unavailable: {0}")]
    PortUnavailable(String),
    #[error("incompatible interfaces: {0}")]
    IncompatibleInterfaces(String),
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("channel closed ({in_flight} items in flight)")]
    ChannelClosed { in_flight: u32 },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Process-wide backchannel byte accounting, reported per node process.
pub mod stats {
    use super::*;

    static BYTES_SENT: AtomicU64 = AtomicU64::new(0);
    static BYTES_RECEIVED: AtomicU64 = AtomicU64::new(0);

    pub(super) fn add_sent(n: usize) {
        BYTES_SENT.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub(super) fn add_received(n: usize) {
        BYTES_RECEIVED.fetch_add(n as u64, Ordering::Relaxed);
    }

    /// (bytes sent, bytes received) since process start.
    pub fn snapshot() -> (u64, u64) {
        (BYTES_SENT.load(Ordering::Relaxed), BYTES_RECEIVED.load(Ordering::Relaxed))
    }
}

fn write_frame(stream: &mut TcpStream, frame: &Frame) -> std::io::Result<()> {
    let bytes = frame.encode();
    stream.write_all(&bytes)?;
    stats::add_sent(bytes.len());
    Ok(())
}

fn read_frame(stream: &mut TcpStream) -> std::io::Result<Frame> {
    let frame = Frame::read_from(stream)?;
    stats::add_received(frame.body.len() + 5);
    Ok(frame)
}

/// Serialize an envelope for the wire: item count, then the item-framed
/// payload bytes verbatim.
pub fn encode_envelope(env: &DataEnvelope) -> Vec<u8> {
    let mut out = Vec::with_capacity(env.payload_bytes().len() + 4);
    out.extend_from_slice(&env.item_count().to_be_bytes());
    out.extend_from_slice(env.payload_bytes());
    out
}

pub fn decode_envelope(bytes: &[u8], payload_type: &str) -> Result<DataEnvelope, String> {
    if bytes.len() < 4 {
        return Err("truncated envelope".to_string());
    }
    let count = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    DataEnvelope::from_payload(payload_type, count, bytes[4..].to_vec())
}

// ---------------------------------------------------------------------------
// Pull server adapter
// ---------------------------------------------------------------------------

struct PullServerShared {
    stop: AtomicBool,
    listener: Mutex<Option<TcpListener>>,
}

struct PullServerInstance {
    setup: ComponentSetup,
    payload_type: String,
    shared: Arc<PullServerShared>,
    accept_thread: Option<JoinHandle<()>>,
}

impl PullServerInstance {
    fn create(setup: ComponentSetup, config: &PropertyMap) -> Result<Self, String> {
        let addr = config
            .get("listen_address")
            .and_then(|v| v.as_str())
            .ok_or_else(|| "missing listen_address".to_string())?;
        let payload_type = config
            .get("payload_type")
            .and_then(|v| v.as_str())
            .ok_or_else(|| "missing payload_type".to_string())?
            .to_string();
        let listener =
            TcpListener::bind(addr).map_err(|e| format!("port unavailable: {addr}: {e}"))?;
        listener.set_nonblocking(true).map_err(|e| e.to_string())?;
        let local_addr = listener.local_addr().map_err(|e| e.to_string())?;
        register_server_addr(&setup.component, local_addr);
        Ok(Self {
            setup,
            payload_type,
            shared: Arc::new(PullServerShared {
                stop: AtomicBool::new(false),
                listener: Mutex::new(Some(listener)),
            }),
            accept_thread: None,
        })
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.listener.lock().take();
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl ComponentInstance for PullServerInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![InterfaceDescriptor::required("upstream", CollabStyle::Data, &self.payload_type)]
    }

    fn on_activate(&mut self) {
        if self.accept_thread.is_some() {
            return;
        }
        let shared = self.shared.clone();
        let setup = self.setup.clone();
        let thread = std::thread::Builder::new()
            .name(format!("pull-server-{}", self.setup.component))
            .spawn(move || accept_loop(shared, setup))
            .expect("spawn pull server accept loop");
        self.accept_thread = Some(thread);
    }

    fn on_deactivate(&mut self) {
        self.stop();
    }

    fn on_unload(&mut self) {
        self.stop();
    }
}

fn accept_loop(shared: Arc<PullServerShared>, setup: ComponentSetup) {
    let mut conn_threads: Vec<JoinHandle<()>> = Vec::new();
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let accepted = {
            let guard = shared.listener.lock();
            match guard.as_ref() {
                Some(l) => l.accept(),
                None => break,
            }
        };
        match accepted {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                let setup = setup.clone();
                let t = std::thread::Builder::new()
                    .name("pull-server-conn".to_string())
                    .spawn(move || serve_connection(stream, peer, shared, setup))
                    .expect("spawn pull server connection");
                conn_threads.push(t);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => break,
        }
    }
    for t in conn_threads {
        let _ = t.join();
    }
}

fn serve_connection(
    mut stream: TcpStream,
    peer: SocketAddr,
    shared: Arc<PullServerShared>,
    setup: ComponentSetup,
) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(100)));
    let upstream = IfaceRef::new(setup.component.clone(), "upstream");
    let mut announced = false;
    loop {
        if shared.stop.load(Ordering::SeqCst) {
            let _ = write_frame(&mut stream, &Frame::new(FrameKind::Status, Status::Closing { in_flight: 0 }.encode()));
            return;
        }
        let frame = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(_) => {
                // Peer vanished without a closing status.
                emit_closed(&setup, 0, &peer);
                return;
            }
        };
        match frame.kind {
            FrameKind::Status => match Status::decode(&frame.body) {
                Ok(Status::Hello) => {
                    if !announced {
                        announced = true;
                        setup.emit(
                            channel_events::CHANNEL_ACTIVE,
                            EventPayload::Scalars(
                                [("remote".to_string(), PropertyValue::Str(peer.to_string()))].into(),
                            ),
                            false,
                        );
                    }
                }
                Ok(Status::Closing { in_flight }) => {
                    emit_closed(&setup, in_flight, &peer);
                    return;
                }
                _ => {}
            },
            FrameKind::PullRequest => {
                let max = frame
                    .body
                    .get(..4)
                    .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
                    .unwrap_or(0);
                let Some(container) = setup.container.upgrade() else { return };
                match container.pull_data(&upstream, max) {
                    Ok(envelope) => {
                        let count = envelope.item_count();
                        let body = encode_envelope(&envelope);
                        if write_frame(&mut stream, &Frame::new(FrameKind::PullResponse, body)).is_err() {
                            // Items were removed from the source but never
                            // made it out: report them as in flight.
                            emit_closed(&setup, count, &peer);
                            return;
                        }
                    }
                    Err(_) => {
                        let _ = write_frame(&mut stream, &Frame::new(FrameKind::Status, Status::Fault.encode()));
                        emit_closed(&setup, 0, &peer);
                        return;
                    }
                }
            }
            _ => {}
        }
    }
}

fn emit_closed(setup: &ComponentSetup, in_flight: u32, peer: &SocketAddr) {
    setup.emit(
        channel_events::CHANNEL_CLOSED,
        EventPayload::Scalars(
            [
                ("in_flight".to_string(), PropertyValue::Int(i64::from(in_flight))),
                ("remote".to_string(), PropertyValue::Str(peer.to_string())),
            ]
            .into(),
        ),
        false,
    );
}

struct PullServerType;

impl ComponentType for PullServerType {
    fn type_id(&self) -> &str {
        TCP_PULL_SERVER_TYPE
    }

    fn create(
        &self,
        setup: ComponentSetup,
        config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        Ok(Box::new(PullServerInstance::create(setup, config)?))
    }
}

// ---------------------------------------------------------------------------
// Pull client adapter
// ---------------------------------------------------------------------------

struct ClientChannel {
    setup: ComponentSetup,
    payload_type: String,
    stream: Mutex<Option<TcpStream>>,
    closed_reported: AtomicBool,
    remote: Mutex<Option<String>>,
    timeout: Duration,
}

impl ClientChannel {
    fn connect(&self, endpoint: &str) -> Result<(), ChannelError> {
        let addr: SocketAddr = endpoint
            .parse()
            .map_err(|e| ChannelError::ConnectionRefused(format!("bad endpoint `{endpoint}`: {e}")))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut {
                ChannelError::Timeout(format!("connect to {endpoint}: {e}"))
            } else {
                ChannelError::ConnectionRefused(format!("{endpoint}: {e}"))
            }
        })?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(|e| ChannelError::ConnectionRefused(e.to_string()))?;
        let mut guard = self.stream.lock();
        let mut stream = stream;
        write_frame(&mut stream, &Frame::new(FrameKind::Status, Status::Hello.encode()))
            .map_err(|e| ChannelError::ConnectionRefused(e.to_string()))?;
        *guard = Some(stream);
        *self.remote.lock() = Some(endpoint.to_string());
        Ok(())
    }

    fn pull(&self, max_items: u32) -> Result<DataEnvelope, ChannelError> {
        enum Outcome {
            Ok(DataEnvelope),
            BadResponse(String),
            Closed,
        }

        let outcome = {
            let mut guard = self.stream.lock();
            let Some(stream) = guard.as_mut() else {
                return Err(ChannelError::ChannelClosed { in_flight: 0 });
            };
            let request = Frame::new(FrameKind::PullRequest, max_items.to_be_bytes().to_vec());
            if write_frame(stream, &request).is_err() {
                Outcome::Closed
            } else {
                loop {
                    match read_frame(stream) {
                        Ok(f) => match f.kind {
                            FrameKind::PullResponse => {
                                break match decode_envelope(&f.body, &self.payload_type) {
                                    Ok(env) => Outcome::Ok(env),
                                    Err(e) => Outcome::BadResponse(e),
                                };
                            }
                            FrameKind::Status => break Outcome::Closed,
                            _ => continue,
                        },
                        Err(_) => break Outcome::Closed,
                    }
                }
            }
        };

        match outcome {
            Outcome::Ok(env) => Ok(env),
            Outcome::BadResponse(e) => {
                Err(ChannelError::ConnectionRefused(format!("bad response: {e}")))
            }
            Outcome::Closed => {
                self.close(false);
                Err(ChannelError::ChannelClosed { in_flight: 0 })
            }
        }
    }

    /// Tear the channel down. `announce` sends a closing status to the server
    /// (clean shutdown); either way a single `channel_closed` event fires.
    fn close(&self, announce: bool) {
        let stream = self.stream.lock().take();
        if let Some(mut stream) = stream {
            if announce {
                let _ = write_frame(
                    &mut stream,
                    &Frame::new(FrameKind::Status, Status::Closing { in_flight: 0 }.encode()),
                );
            }
        }
        if !self.closed_reported.swap(true, Ordering::SeqCst) {
            let remote = self.remote.lock().clone().unwrap_or_default();
            self.setup.emit(
                channel_events::CHANNEL_CLOSED,
                EventPayload::Scalars(
                    [
                        ("in_flight".to_string(), PropertyValue::Int(0)),
                        ("remote".to_string(), PropertyValue::Str(remote)),
                    ]
                    .into(),
                ),
                false,
            );
        }
    }

    fn is_connected(&self) -> bool {
        self.stream.lock().is_some()
    }
}

struct ClientSource {
    channel: Arc<ClientChannel>,
}

impl crate::container::DataSource for ClientSource {
    fn pull(&self, max_items: u32) -> Result<DataEnvelope, String> {
        self.channel.pull(max_items).map_err(|e| e.to_string())
    }
}

struct PullClientInstance {
    channel: Arc<ClientChannel>,
    payload_type: String,
}

impl ComponentInstance for PullClientInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![InterfaceDescriptor::provided_source(
            "pull",
            &self.payload_type,
            Arc::new(ClientSource { channel: self.channel.clone() }),
        )]
    }

    fn configure(&mut self, key: &str, value: &PropertyValue) -> Result<(), String> {
        if key == "server_address" {
            let addr = value.as_str().ok_or("server_address must be a string")?;
            let parsed: SocketAddr = addr.parse().map_err(|e| format!("bad address `{addr}`: {e}"))?;
            if parsed.port() == 0 {
                return Err("port must be non-zero".to_string());
            }
        }
        Ok(())
    }

    fn on_unload(&mut self) {
        self.channel.close(true);
    }
}

struct PullClientType;

impl ComponentType for PullClientType {
    fn type_id(&self) -> &str {
        TCP_PULL_CLIENT_TYPE
    }

    fn create(
        &self,
        setup: ComponentSetup,
        config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        let payload_type = config
            .get("payload_type")
            .and_then(|v| v.as_str())
            .ok_or_else(|| "missing payload_type".to_string())?
            .to_string();
        let timeout_ms = config.get("timeout_ms").and_then(|v| v.as_int()).unwrap_or(0);
        let timeout = if timeout_ms > 0 {
            Duration::from_millis(timeout_ms as u64)
        } else {
            DEFAULT_TIMEOUT
        };
        let channel = Arc::new(ClientChannel {
            setup,
            payload_type: payload_type.clone(),
            stream: Mutex::new(None),
            closed_reported: AtomicBool::new(false),
            remote: Mutex::new(None),
            timeout,
        });
        register_client(&channel);
        Ok(Box::new(PullClientInstance { channel, payload_type }))
    }
}

// Server adapters record their actual bound address here (port 0 support).
static SERVER_ADDRS: Mutex<Option<HashMap<String, SocketAddr>>> = Mutex::new(None);

fn register_server_addr(component: &ComponentId, addr: SocketAddr) {
    SERVER_ADDRS
        .lock()
        .get_or_insert_with(HashMap::new)
        .insert(component.to_string(), addr);
}

fn server_addr_of(component: &str) -> Option<SocketAddr> {
    SERVER_ADDRS.lock().as_ref().and_then(|m| m.get(component).copied())
}

// Client channels are looked up by adapter component id for `remote_pull`.
static CLIENTS: Mutex<Option<HashMap<String, Arc<ClientChannel>>>> = Mutex::new(None);

fn register_client(channel: &Arc<ClientChannel>) {
    CLIENTS
        .lock()
        .get_or_insert_with(HashMap::new)
        .insert(channel.setup.component.to_string(), channel.clone());
}

fn client_of(adapter: &str) -> Option<Arc<ClientChannel>> {
    CLIENTS.lock().as_ref().and_then(|m| m.get(adapter).cloned())
}

fn drop_client(adapter: &str) {
    if let Some(m) = CLIENTS.lock().as_mut() {
        m.remove(adapter);
    }
}

/// Register both adapter component types with a container.
pub fn register_adapter_types(container: &Container) -> Result<(), ContainerError> {
    container.register_component_type(Arc::new(PullServerType))?;
    container.register_component_type(Arc::new(PullClientType))?;
    Ok(())
}

static NEXT_ADAPTER: AtomicU64 = AtomicU64::new(1);

fn next_adapter_id(prefix: &str) -> String {
    format!("{prefix}-{}", NEXT_ADAPTER.fetch_add(1, Ordering::Relaxed))
}

/// Expose `provider` (a PROVIDED DATA pull interface) on a TCP endpoint.
///
/// Loads a server adapter, binds it to the provider and starts listening;
/// dispatches `channel_listening` with the actual bound address (useful with
/// port 0). Returns the adapter component id.
pub fn start_pull_server(
    container: &Arc<Container>,
    ctx: &ContextId,
    provider: &IfaceRef,
    endpoint: &str,
) -> Result<ComponentId, ChannelError> {
    let desc = provider_descriptor(container, provider)?;
    if !matches!(desc.endpoint, EndpointHandle::DataSource(_)) {
        return Err(ChannelError::IncompatibleInterfaces(format!(
            "`{provider}` is not a provided DATA pull interface"
        )));
    }

    let adapter_id = next_adapter_id("tcp-pull-server");
    let record = container
        .load_component(
            ctx,
            &adapter_id,
            TCP_PULL_SERVER_TYPE,
            props! {
                "listen_address" => endpoint,
                "payload_type" => desc.payload_type.as_str(),
            },
        )
        .map_err(|e| match e {
            ContainerError::LoadFailed(msg) if msg.contains("port unavailable") => {
                ChannelError::PortUnavailable(msg)
            }
            other => ChannelError::Container(other),
        })?;

    // Record the address the listener actually bound (resolves port 0).
    let actual = server_addr_of(adapter_id.as_str())
        .map(|a| a.to_string())
        .unwrap_or_else(|| endpoint.to_string());
    container.configure(adapter_id.as_str(), "server_address", PropertyValue::from(actual.as_str()))?;

    container.bind(IfaceRef::new(record.id.clone(), "upstream"), provider.clone())?;
    container.set_lifecycle(ctx, adapter_id.as_str(), LifecycleTarget::Active)?;

    container.emit_event(
        &record.id,
        channel_events::CHANNEL_LISTENING,
        EventPayload::Scalars(
            [("address".to_string(), PropertyValue::Str(actual))].into(),
        ),
        false,
    );
    Ok(record.id)
}

/// The address a server adapter is actually listening on.
pub fn server_address(adapter: &ComponentId) -> Option<String> {
    server_addr_of(adapter.as_str()).map(|a| a.to_string())
}

/// Connect `consumer` (a REQUIRED DATA pull interface) to a remote pull
/// server: load the client adapter, bind it to the consumer, configure the
/// remote address, then connect. On success both sides observe
/// `channel_active`; on failure the consumer is left unbound.
pub fn open_pull_client(
    container: &Arc<Container>,
    ctx: &ContextId,
    consumer: &IfaceRef,
    endpoint: &str,
    timeout: Option<Duration>,
) -> Result<ComponentId, ChannelError> {
    let desc = consumer_descriptor(container, consumer)?;
    if desc.style != CollabStyle::Data {
        return Err(ChannelError::IncompatibleInterfaces(format!(
            "`{consumer}` is not a required DATA interface"
        )));
    }

    let adapter_id = next_adapter_id("tcp-pull-client");
    let timeout_ms = timeout.unwrap_or(DEFAULT_TIMEOUT).as_millis() as i64;
    let record = container.load_component(
        ctx,
        &adapter_id,
        TCP_PULL_CLIENT_TYPE,
        props! {
            "payload_type" => desc.payload_type.as_str(),
            "timeout_ms" => timeout_ms,
        },
    )?;

    let result: Result<(), ChannelError> = (|| {
        container.bind(consumer.clone(), IfaceRef::new(record.id.clone(), "pull"))?;
        container.configure(adapter_id.as_str(), "server_address", PropertyValue::from(endpoint))?;
        let channel = client_of(adapter_id.as_str())
            .ok_or_else(|| ChannelError::ConnectionRefused("adapter vanished".to_string()))?;
        channel.connect(endpoint)?;
        container.set_lifecycle(ctx, adapter_id.as_str(), LifecycleTarget::Active)?;
        Ok(())
    })();

    match result {
        Ok(()) => {
            container.emit_event(
                &record.id,
                channel_events::CHANNEL_ACTIVE,
                EventPayload::Scalars(
                    [("remote".to_string(), PropertyValue::Str(endpoint.to_string()))].into(),
                ),
                false,
            );
            Ok(record.id)
        }
        Err(e) => {
            // Roll back: unloading the adapter also removes the consumer's
            // binding, leaving it unbound as before the call.
            let _ = container.set_lifecycle(ctx, adapter_id.as_str(), LifecycleTarget::Unloaded);
            drop_client(adapter_id.as_str());
            Err(e)
        }
    }
}

/// Pull through a client adapter. Semantics match a local pull, including the
/// empty-source case; a dead channel yields `ChannelClosed`.
pub fn remote_pull(adapter: &ComponentId, max_items: u32) -> Result<DataEnvelope, ChannelError> {
    let channel = client_of(adapter.as_str())
        .ok_or(ChannelError::ChannelClosed { in_flight: 0 })?;
    channel.pull(max_items)
}

/// Close a client adapter's channel cleanly and unload it.
pub fn close_pull_client(
    container: &Arc<Container>,
    ctx: &ContextId,
    adapter: &ComponentId,
) -> Result<(), ChannelError> {
    container.set_lifecycle(ctx, adapter.as_str(), LifecycleTarget::Unloaded)?;
    drop_client(adapter.as_str());
    Ok(())
}

/// Whether a client adapter currently holds a live connection.
pub fn client_connected(adapter: &ComponentId) -> bool {
    client_of(adapter.as_str()).is_some_and(|c| c.is_connected())
}

fn provider_descriptor(
    container: &Container,
    provider: &IfaceRef,
) -> Result<InterfaceDescriptor, ChannelError> {
    container
        .describe_interfaces(provider.component.as_str())?
        .into_iter()
        .find(|d| d.name == provider.interface && d.direction == Direction::Provided)
        .ok_or_else(|| {
            ChannelError::IncompatibleInterfaces(format!("`{provider}` is not provided"))
        })
}

fn consumer_descriptor(
    container: &Container,
    consumer: &IfaceRef,
) -> Result<InterfaceDescriptor, ChannelError> {
    container
        .describe_interfaces(consumer.component.as_str())?
        .into_iter()
        .find(|d| d.name == consumer.interface && d.direction == Direction::Required)
        .ok_or_else(|| {
            ChannelError::IncompatibleInterfaces(format!("`{consumer}` is not required"))
        })
}
