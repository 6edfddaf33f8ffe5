//! Dynamic component container.
//!
//! Components are instances of registered component types, loaded into a tree
//! of contexts rooted at a single root context. The container provides
//! lifecycle control, interface description, brokering (late binding) and
//! explicit/implicit binding, including eager hot-swapping of implicitly
//! bound stateless providers.
//!
//! Locking contract: all topology mutations are serialized behind one write
//! lock, reads are concurrent, and callbacks into component code never run
//! while the container lock is held. Events raised by an operation are
//! dispatched after the lock is released.

mod endpoint;

pub use endpoint::{DataSink, DataSource, EndpointHandle, ServiceProvider};

use std::collections::HashMap;
use std::fmt;
use std::sync::mpsc;
use std::sync::{Arc, Weak};
use std::thread::JoinHandle;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::collab::data::DataEnvelope;
use crate::collab::events::{EventBus, EventPayload};
use crate::property::{PropertyMap, PropertyValue};

/// Framework event names emitted by the container itself.
pub mod event_names {
    pub const COMPONENT_LOADED: &str = "component_loaded";
    pub const COMPONENT_ACTIVATED: &str = "component_activated";
    pub const COMPONENT_DEACTIVATED: &str = "component_deactivated";
    pub const COMPONENT_REMOVED: &str = "component_removed";
    pub const BOUND: &str = "bound";
    pub const UNBOUND: &str = "unbound";
    pub const PROPERTY_CHANGED: &str = "property_changed";
    pub const DELIVERY_FAILED: &str = "delivery_failed";
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId(s.to_string())
    }
}

impl From<String> for ComponentId {
    fn from(s: String) -> Self {
        ComponentId(s)
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextId(String);

impl ContextId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ContextId {
    fn from(s: &str) -> Self {
        ContextId(s.to_string())
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Collaboration style of an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollabStyle {
    Service,
    Data,
    Event,
}

impl fmt::Display for CollabStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollabStyle::Service => f.write_str("SERVICE"),
            CollabStyle::Data => f.write_str("DATA"),
            CollabStyle::Event => f.write_str("EVENT"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Required,
    Provided,
}

/// A component's collaboration endpoint description.
#[derive(Debug, Clone)]
pub struct InterfaceDescriptor {
    pub name: String,
    pub style: CollabStyle,
    /// Opaque payload type identifier; compatibility is exact string equality.
    pub payload_type: String,
    pub direction: Direction,
    pub endpoint: EndpointHandle,
    /// A required interface declared multicast may hold several bindings.
    pub multicast: bool,
}

impl InterfaceDescriptor {
    pub fn provided_service(name: &str, payload_type: &str, provider: Arc<dyn ServiceProvider>) -> Self {
        Self {
            name: name.to_string(),
            style: CollabStyle::Service,
            payload_type: payload_type.to_string(),
            direction: Direction::Provided,
            endpoint: EndpointHandle::ServiceProvider(provider),
            multicast: false,
        }
    }

    /// A provided DATA interface that hands items out (pull-capable).
    pub fn provided_source(name: &str, payload_type: &str, source: Arc<dyn DataSource>) -> Self {
        Self {
            name: name.to_string(),
            style: CollabStyle::Data,
            payload_type: payload_type.to_string(),
            direction: Direction::Provided,
            endpoint: EndpointHandle::DataSource(source),
            multicast: false,
        }
    }

    /// A provided DATA interface that accepts pushed items.
    pub fn provided_sink(name: &str, payload_type: &str, sink: Arc<dyn DataSink>) -> Self {
        Self {
            name: name.to_string(),
            style: CollabStyle::Data,
            payload_type: payload_type.to_string(),
            direction: Direction::Provided,
            endpoint: EndpointHandle::DataSink(sink),
            multicast: false,
        }
    }

    pub fn provided_events(name: &str, payload_type: &str) -> Self {
        Self {
            name: name.to_string(),
            style: CollabStyle::Event,
            payload_type: payload_type.to_string(),
            direction: Direction::Provided,
            endpoint: EndpointHandle::EventSource,
            multicast: false,
        }
    }

    pub fn required(name: &str, style: CollabStyle, payload_type: &str) -> Self {
        let endpoint = match style {
            CollabStyle::Service => EndpointHandle::ServiceClient,
            CollabStyle::Data => EndpointHandle::DataClient,
            CollabStyle::Event => EndpointHandle::EventListener,
        };
        Self {
            name: name.to_string(),
            style,
            payload_type: payload_type.to_string(),
            direction: Direction::Required,
            endpoint,
            multicast: false,
        }
    }

    pub fn multicast(mut self) -> Self {
        self.multicast = true;
        self
    }
}

/// Lifecycle state of a loaded component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentState {
    Loaded,
    Active,
    Deactivated,
    Unloaded,
}

/// Lifecycle transition targets accepted by [`Container::set_lifecycle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleTarget {
    Active,
    Deactivated,
    Unloaded,
}

/// A (component, interface) reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IfaceRef {
    pub component: ComponentId,
    pub interface: String,
}

impl IfaceRef {
    pub fn new(component: impl Into<ComponentId>, interface: impl Into<String>) -> Self {
        Self { component: component.into(), interface: interface.into() }
    }
}

impl fmt::Display for IfaceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.interface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingMode {
    Explicit,
    Implicit,
}

/// A recorded client/server interface binding.
#[derive(Debug, Clone)]
pub struct BindingRecord {
    pub id: u64,
    pub client: IfaceRef,
    pub server: IfaceRef,
    pub mode: BindingMode,
}

/// Snapshot of a loaded component.
#[derive(Debug, Clone)]
pub struct ComponentRecord {
    pub id: ComponentId,
    pub type_id: String,
    pub state: ComponentState,
    pub interfaces: Vec<InterfaceDescriptor>,
    pub context: ContextId,
    pub properties: PropertyMap,
}

/// Handed to a component factory; lets instances reach back into the
/// container (to emit events, push through bindings) without owning it.
#[derive(Clone)]
pub struct ComponentSetup {
    pub container: Weak<Container>,
    pub component: ComponentId,
    pub context: ContextId,
}

impl ComponentSetup {
    /// Emit an event from this component. No-op if the container is gone.
    pub fn emit(&self, name: &str, payload: EventPayload, consumable: bool) {
        if let Some(c) = self.container.upgrade() {
            c.emit_event(&self.component, name, payload, consumable);
        }
    }
}

/// A registered component type: a factory plus type-level attributes.
pub trait ComponentType: Send + Sync {
    fn type_id(&self) -> &str;

    /// Stateless providers are eligible as hot-swap substitutes.
    fn stateless(&self) -> bool {
        false
    }

    fn create(
        &self,
        setup: ComponentSetup,
        config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String>;
}

/// A live component instance. Lifecycle hooks run outside container locks.
pub trait ComponentInstance: Send {
    /// The complete, stable interface description for this instance.
    fn interfaces(&self) -> Vec<InterfaceDescriptor>;

    /// Validate and apply a property change. `Err` maps to `RejectedValue`.
    fn configure(&mut self, _key: &str, _value: &PropertyValue) -> Result<(), String> {
        Ok(())
    }

    fn on_activate(&mut self) {}
    fn on_deactivate(&mut self) {}
    fn on_unload(&mut self) {}
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("component type `{0}` is already registered")]
    DuplicateType(String),
    #[error("component type `{0}` is not registered")]
    UnknownType(String),
    #[error("component id `{0}` is already in use")]
    DuplicateId(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("illegal lifecycle transition {from:?} -> {to:?} for `{id}`")]
    IllegalTransition { id: String, from: ComponentState, to: ComponentState },
    #[error("incompatible interfaces: {0}")]
    IncompatibleInterfaces(String),
    #[error("required interface `{0}` is already bound")]
    AlreadyBound(String),
    #[error("rejected value for `{key}`: {reason}")]
    RejectedValue { key: String, reason: String },
    #[error("component factory failed: {0}")]
    LoadFailed(String),
}

struct Slot {
    type_id: String,
    state: ComponentState,
    context: ContextId,
    properties: PropertyMap,
    interfaces: Vec<InterfaceDescriptor>,
    instance: Arc<Mutex<Box<dyn ComponentInstance>>>,
    stateless: bool,
}

struct ContextState {
    parent: Option<ContextId>,
    /// Component ids in registration (load) order.
    members: Vec<ComponentId>,
    bindings: Vec<BindingRecord>,
}

struct State {
    types: HashMap<String, Arc<dyn ComponentType>>,
    contexts: HashMap<ContextId, ContextState>,
    components: HashMap<ComponentId, Slot>,
    next_binding: u64,
}

enum AsyncJob {
    Push { client: IfaceRef, envelope: DataEnvelope, multicast: bool },
}

/// Queue depth for asynchronous push delivery; producers block when full.
const ASYNC_QUEUE_DEPTH: usize = 1024;

pub struct Container {
    state: RwLock<State>,
    bus: EventBus,
    root: ContextId,
    async_tx: Mutex<Option<mpsc::SyncSender<AsyncJob>>>,
    async_worker: Mutex<Option<JoinHandle<()>>>,
}

/// Deferred event, dispatched after the state lock is dropped.
struct PendingEvent {
    source: ComponentId,
    name: &'static str,
    payload: EventPayload,
}

impl PendingEvent {
    fn new(source: &ComponentId, name: &'static str, payload: EventPayload) -> Self {
        Self { source: source.clone(), name, payload }
    }
}

impl Container {
    /// Create a container with a root context named `root`.
    pub fn new() -> Arc<Self> {
        let mut contexts = HashMap::new();
        contexts.insert(
            ContextId::from("root"),
            ContextState { parent: None, members: Vec::new(), bindings: Vec::new() },
        );
        let container = Arc::new(Self {
            state: RwLock::new(State {
                types: HashMap::new(),
                contexts,
                components: HashMap::new(),
                next_binding: 1,
            }),
            bus: EventBus::new(),
            root: ContextId::from("root"),
            async_tx: Mutex::new(None),
            async_worker: Mutex::new(None),
        });

        let (tx, rx) = mpsc::sync_channel::<AsyncJob>(ASYNC_QUEUE_DEPTH);
        let weak = Arc::downgrade(&container);
        let worker = std::thread::Builder::new()
            .name("container-async".into())
            .spawn(move || {
                while let Ok(job) = rx.recv() {
                    let Some(container) = weak.upgrade() else { break };
                    container.run_async_job(job);
                }
            })
            .expect("spawn async delivery worker");
        *container.async_tx.lock() = Some(tx);
        *container.async_worker.lock() = Some(worker);
        container
    }

    pub fn root(&self) -> ContextId {
        self.root.clone()
    }

    pub fn events(&self) -> &EventBus {
        &self.bus
    }

    /// Emit an event from `source` and dispatch it synchronously.
    pub fn emit_event(
        &self,
        source: &ComponentId,
        name: &str,
        payload: EventPayload,
        consumable: bool,
    ) -> crate::collab::events::DispatchReport {
        self.bus.emit(source, name, payload, consumable)
    }

    fn dispatch_pending(&self, pending: Vec<PendingEvent>) {
        for ev in pending {
            self.bus.emit(&ev.source, ev.name, ev.payload, false);
        }
    }

    // ---- types ---------------------------------------------------------

    pub fn register_component_type(&self, ty: Arc<dyn ComponentType>) -> Result<(), ContainerError> {
        let mut state = self.state.write();
        let id = ty.type_id().to_string();
        if state.types.contains_key(&id) {
            return Err(ContainerError::DuplicateType(id));
        }
        state.types.insert(id, ty);
        Ok(())
    }

    pub fn has_type(&self, type_id: &str) -> bool {
        self.state.read().types.contains_key(type_id)
    }

    // ---- contexts ------------------------------------------------------

    /// Create a child context under `parent`. Composite components use this
    /// to organise their inner structure.
    pub fn create_context(&self, parent: &ContextId, id: &str) -> Result<ContextId, ContainerError> {
        let mut state = self.state.write();
        if !state.contexts.contains_key(parent) {
            return Err(ContainerError::UnknownContext(parent.to_string()));
        }
        let cid = ContextId::from(id);
        if state.contexts.contains_key(&cid) {
            return Err(ContainerError::UnknownContext(format!("context id `{id}` already exists")));
        }
        state.contexts.insert(
            cid.clone(),
            ContextState { parent: Some(parent.clone()), members: Vec::new(), bindings: Vec::new() },
        );
        Ok(cid)
    }

    /// Components in a context, in registration order; `recursive` includes
    /// all descendant contexts depth-first.
    pub fn components(&self, ctx: &ContextId, recursive: bool) -> Vec<ComponentRecord> {
        let state = self.state.read();
        let mut out = Vec::new();
        let mut stack = vec![ctx.clone()];
        while let Some(c) = stack.pop() {
            if let Some(cs) = state.contexts.get(&c) {
                for id in &cs.members {
                    if let Some(slot) = state.components.get(id) {
                        out.push(record_of(id, slot));
                    }
                }
                if recursive {
                    let mut kids: Vec<ContextId> = state
                        .contexts
                        .iter()
                        .filter(|(_, v)| v.parent.as_ref() == Some(&c))
                        .map(|(k, _)| k.clone())
                        .collect();
                    kids.sort();
                    for k in kids.into_iter().rev() {
                        stack.push(k);
                    }
                }
            }
        }
        out
    }

    // ---- loading and lifecycle -----------------------------------------

    pub fn load_component(
        self: &Arc<Self>,
        ctx: &ContextId,
        id: &str,
        type_id: &str,
        config: PropertyMap,
    ) -> Result<ComponentRecord, ContainerError> {
        let cid = ComponentId::from(id);
        let ty = {
            let state = self.state.read();
            if !state.contexts.contains_key(ctx) {
                return Err(ContainerError::UnknownContext(ctx.to_string()));
            }
            if state.components.contains_key(&cid) {
                return Err(ContainerError::DuplicateId(id.to_string()));
            }
            state
                .types
                .get(type_id)
                .cloned()
                .ok_or_else(|| ContainerError::UnknownType(type_id.to_string()))?
        };

        // Instantiate outside the lock: factories may spawn worker threads.
        let setup = ComponentSetup {
            container: Arc::downgrade(self),
            component: cid.clone(),
            context: ctx.clone(),
        };
        let instance = ty.create(setup, &config).map_err(ContainerError::LoadFailed)?;
        let interfaces = instance.interfaces();
        for (i, a) in interfaces.iter().enumerate() {
            for b in interfaces.iter().skip(i + 1) {
                if a.name == b.name && a.direction == b.direction {
                    return Err(ContainerError::LoadFailed(format!(
                        "duplicate interface ({}, {:?}) on `{id}`",
                        a.name, a.direction
                    )));
                }
            }
        }

        let record = {
            let mut state = self.state.write();
            if state.components.contains_key(&cid) {
                return Err(ContainerError::DuplicateId(id.to_string()));
            }
            let slot = Slot {
                type_id: type_id.to_string(),
                state: ComponentState::Loaded,
                context: ctx.clone(),
                properties: config,
                interfaces,
                instance: Arc::new(Mutex::new(instance)),
                stateless: ty.stateless(),
            };
            let rec = record_of(&cid, &slot);
            state.components.insert(cid.clone(), slot);
            state.contexts.get_mut(ctx).expect("context checked above").members.push(cid.clone());
            rec
        };

        self.dispatch_pending(vec![PendingEvent::new(
            &record.id,
            event_names::COMPONENT_LOADED,
            EventPayload::Scalars(
                [("type".to_string(), PropertyValue::Str(type_id.to_string()))].into(),
            ),
        )]);
        Ok(record)
    }

    pub fn set_lifecycle(
        &self,
        ctx: &ContextId,
        id: &str,
        target: LifecycleTarget,
    ) -> Result<ComponentRecord, ContainerError> {
        let cid = ComponentId::from(id);
        match target {
            LifecycleTarget::Active | LifecycleTarget::Deactivated => {
                let (record, changed, instance) = {
                    let mut state = self.state.write();
                    let slot = state
                        .components
                        .get_mut(&cid)
                        .filter(|s| s.context == *ctx)
                        .ok_or_else(|| ContainerError::UnknownComponent(id.to_string()))?;
                    let from = slot.state;
                    let to = match target {
                        LifecycleTarget::Active => ComponentState::Active,
                        _ => ComponentState::Deactivated,
                    };
                    if from == to {
                        // Idempotent: activating an active component is a no-op.
                        return Ok(record_of(&cid, slot));
                    }
                    let legal = matches!(
                        (from, to),
                        (ComponentState::Loaded, ComponentState::Active)
                            | (ComponentState::Deactivated, ComponentState::Active)
                            | (ComponentState::Active, ComponentState::Deactivated)
                    );
                    if !legal {
                        return Err(ContainerError::IllegalTransition { id: id.to_string(), from, to });
                    }
                    slot.state = to;
                    (record_of(&cid, slot), to, slot.instance.clone())
                };

                {
                    let mut inst = instance.lock();
                    match changed {
                        ComponentState::Active => inst.on_activate(),
                        ComponentState::Deactivated => inst.on_deactivate(),
                        _ => unreachable!(),
                    }
                }
                let name = match changed {
                    ComponentState::Active => event_names::COMPONENT_ACTIVATED,
                    _ => event_names::COMPONENT_DEACTIVATED,
                };
                self.dispatch_pending(vec![PendingEvent::new(&cid, name, EventPayload::Empty)]);
                Ok(record)
            }
            LifecycleTarget::Unloaded => self.unload(ctx, &cid),
        }
    }

    fn unload(&self, ctx: &ContextId, cid: &ComponentId) -> Result<ComponentRecord, ContainerError> {
        let (record, instance, pending) = {
            let mut state = self.state.write();
            let slot = state
                .components
                .get(cid)
                .filter(|s| s.context == *ctx)
                .ok_or_else(|| ContainerError::UnknownComponent(cid.to_string()))?;
            let mut record = record_of(cid, slot);
            record.state = ComponentState::Unloaded;
            let instance = slot.instance.clone();
            let removed_ctx = slot.context.clone();

            let mut pending = Vec::new();

            // Drop every binding touching the component. Implicit clients of
            // this provider are eagerly re-bound to a compatible stateless
            // provider when one remains (hot swap).
            let mut rebinds: Vec<(IfaceRef, BindingMode)> = Vec::new();
            for ctx_state in state.contexts.values_mut() {
                ctx_state.bindings.retain(|b| {
                    let touches = b.client.component == *cid || b.server.component == *cid;
                    if touches {
                        if b.server.component == *cid && b.client.component != *cid {
                            rebinds.push((b.client.clone(), b.mode));
                        }
                        pending.push(PendingEvent::new(
                            &b.client.component,
                            event_names::UNBOUND,
                            binding_payload(b),
                        ));
                    }
                    !touches
                });
            }

            // Remove the component before searching for substitutes so it can
            // never be offered as its own replacement.
            state.components.remove(cid);
            if let Some(cs) = state.contexts.get_mut(&removed_ctx) {
                cs.members.retain(|m| m != cid);
            }

            for (client, mode) in rebinds {
                if mode != BindingMode::Implicit {
                    continue;
                }
                if let Some(binding) = implicit_rebind(&mut state, &client) {
                    pending.push(PendingEvent::new(
                        &binding.client.component,
                        event_names::BOUND,
                        binding_payload(&binding),
                    ));
                }
            }

            pending.push(PendingEvent::new(cid, event_names::COMPONENT_REMOVED, EventPayload::Empty));
            (record, instance, pending)
        };

        instance.lock().on_unload();
        self.dispatch_pending(pending);
        Ok(record)
    }

    // ---- inspection ------------------------------------------------------

    pub fn record(&self, id: &str) -> Result<ComponentRecord, ContainerError> {
        let state = self.state.read();
        let cid = ComponentId::from(id);
        state
            .components
            .get(&cid)
            .map(|s| record_of(&cid, s))
            .ok_or_else(|| ContainerError::UnknownComponent(id.to_string()))
    }

    pub fn describe_interfaces(&self, id: &str) -> Result<Vec<InterfaceDescriptor>, ContainerError> {
        Ok(self.record(id)?.interfaces)
    }

    // ---- brokering -------------------------------------------------------

    /// Locate provided interfaces matching `(style, payload_type)`.
    ///
    /// The search starts in `ctx`; when nothing matches there it is retried in
    /// the parent context, recursively up to the root. Results are ordered by
    /// component registration order within the matched context.
    pub fn broker(&self, ctx: &ContextId, style: CollabStyle, payload_type: &str) -> Vec<IfaceRef> {
        let state = self.state.read();
        broker_in(&state, ctx, style, payload_type, None)
    }

    // ---- binding ---------------------------------------------------------

    /// Bind a required client interface to an explicitly named provider.
    pub fn bind(&self, client: IfaceRef, server: IfaceRef) -> Result<BindingRecord, ContainerError> {
        self.bind_inner(client, Some(server), BindingMode::Explicit)
    }

    /// Bind a required client interface to the first compatible provider in
    /// broker order (nearest context first, registration order within it).
    pub fn bind_implicit(&self, client: IfaceRef) -> Result<BindingRecord, ContainerError> {
        self.bind_inner(client, None, BindingMode::Implicit)
    }

    fn bind_inner(
        &self,
        client: IfaceRef,
        server: Option<IfaceRef>,
        mode: BindingMode,
    ) -> Result<BindingRecord, ContainerError> {
        let (binding, pending) = {
            let mut state = self.state.write();
            let client_slot = state
                .components
                .get(&client.component)
                .ok_or_else(|| ContainerError::UnknownComponent(client.component.to_string()))?;
            let client_desc = client_slot
                .interfaces
                .iter()
                .find(|d| d.name == client.interface && d.direction == Direction::Required)
                .ok_or_else(|| {
                    ContainerError::IncompatibleInterfaces(format!(
                        "`{client}` is not a required interface"
                    ))
                })?
                .clone();
            let client_ctx = client_slot.context.clone();

            let server = match server {
                Some(server) => {
                    let server_slot = state
                        .components
                        .get(&server.component)
                        .ok_or_else(|| ContainerError::UnknownComponent(server.component.to_string()))?;
                    let server_desc = server_slot
                        .interfaces
                        .iter()
                        .find(|d| d.name == server.interface && d.direction == Direction::Provided)
                        .ok_or_else(|| {
                            ContainerError::IncompatibleInterfaces(format!(
                                "`{server}` is not a provided interface"
                            ))
                        })?;
                    if server_desc.style != client_desc.style {
                        return Err(ContainerError::IncompatibleInterfaces(format!(
                            "style mismatch: {} vs {}",
                            client_desc.style, server_desc.style
                        )));
                    }
                    if server_desc.payload_type != client_desc.payload_type {
                        return Err(ContainerError::IncompatibleInterfaces(format!(
                            "payload type mismatch: `{}` vs `{}`",
                            client_desc.payload_type, server_desc.payload_type
                        )));
                    }
                    server
                }
                None => broker_in(
                    &state,
                    &client_ctx,
                    client_desc.style,
                    &client_desc.payload_type,
                    Some(&client.component),
                )
                .into_iter()
                .next()
                .ok_or_else(|| {
                    ContainerError::IncompatibleInterfaces(format!(
                        "no compatible provider for `{client}`"
                    ))
                })?,
            };

            if !client_desc.multicast {
                let already = state
                    .contexts
                    .values()
                    .flat_map(|c| c.bindings.iter())
                    .any(|b| b.client == client);
                if already {
                    return Err(ContainerError::AlreadyBound(client.to_string()));
                }
            }

            let id = state.next_binding;
            state.next_binding += 1;
            let binding = BindingRecord { id, client: client.clone(), server, mode };
            state
                .contexts
                .get_mut(&client_ctx)
                .expect("client context exists")
                .bindings
                .push(binding.clone());
            let pending = vec![PendingEvent::new(
                &client.component,
                event_names::BOUND,
                binding_payload(&binding),
            )];
            (binding, pending)
        };
        self.dispatch_pending(pending);
        Ok(binding)
    }

    /// Remove every binding of `client`. Used when a consumer switches
    /// providers; unloading a component also removes its bindings.
    pub fn unbind(&self, client: &IfaceRef) -> Result<usize, ContainerError> {
        let (removed, pending) = {
            let mut state = self.state.write();
            if !state.components.contains_key(&client.component) {
                return Err(ContainerError::UnknownComponent(client.component.to_string()));
            }
            let mut pending = Vec::new();
            let mut removed = 0;
            for ctx_state in state.contexts.values_mut() {
                ctx_state.bindings.retain(|b| {
                    if b.client == *client {
                        pending.push(PendingEvent::new(
                            &b.client.component,
                            event_names::UNBOUND,
                            binding_payload(b),
                        ));
                        removed += 1;
                        false
                    } else {
                        true
                    }
                });
            }
            (removed, pending)
        };
        self.dispatch_pending(pending);
        Ok(removed)
    }

    /// All bindings whose client side is `client`, in binding order.
    pub fn bindings_of(&self, client: &IfaceRef) -> Vec<BindingRecord> {
        let state = self.state.read();
        let mut out: Vec<BindingRecord> = state
            .contexts
            .values()
            .flat_map(|c| c.bindings.iter())
            .filter(|b| b.client == *client)
            .cloned()
            .collect();
        out.sort_by_key(|b| b.id);
        out
    }

    /// All bindings recorded in `ctx`.
    pub fn context_bindings(&self, ctx: &ContextId) -> Vec<BindingRecord> {
        self.state
            .read()
            .contexts
            .get(ctx)
            .map(|c| c.bindings.clone())
            .unwrap_or_default()
    }

    // ---- configuration ---------------------------------------------------

    pub fn configure(&self, id: &str, key: &str, value: PropertyValue) -> Result<(), ContainerError> {
        let cid = ComponentId::from(id);
        let instance = {
            let state = self.state.read();
            state
                .components
                .get(&cid)
                .map(|s| s.instance.clone())
                .ok_or_else(|| ContainerError::UnknownComponent(id.to_string()))?
        };

        instance
            .lock()
            .configure(key, &value)
            .map_err(|reason| ContainerError::RejectedValue { key: key.to_string(), reason })?;

        {
            let mut state = self.state.write();
            let slot = state
                .components
                .get_mut(&cid)
                .ok_or_else(|| ContainerError::UnknownComponent(id.to_string()))?;
            slot.properties.insert(key.to_string(), value.clone());
        }

        self.dispatch_pending(vec![PendingEvent::new(
            &cid,
            event_names::PROPERTY_CHANGED,
            EventPayload::Scalars(
                [
                    ("key".to_string(), PropertyValue::Str(key.to_string())),
                    ("value".to_string(), value),
                ]
                .into(),
            ),
        )]);
        Ok(())
    }

    // ---- collaboration plumbing (used by crate::collab) -------------------

    pub(crate) fn resolve_endpoint(
        &self,
        provider: &IfaceRef,
    ) -> Result<(EndpointHandle, ComponentState), ContainerError> {
        let state = self.state.read();
        let slot = state
            .components
            .get(&provider.component)
            .ok_or_else(|| ContainerError::UnknownComponent(provider.component.to_string()))?;
        let desc = slot
            .interfaces
            .iter()
            .find(|d| d.name == provider.interface && d.direction == Direction::Provided)
            .ok_or_else(|| {
                ContainerError::IncompatibleInterfaces(format!("`{provider}` is not provided"))
            })?;
        Ok((desc.endpoint.clone(), slot.state))
    }

    pub(crate) fn enqueue_async(&self, client: IfaceRef, envelope: DataEnvelope, multicast: bool) {
        let tx = self.async_tx.lock().clone();
        if let Some(tx) = tx {
            // Bounded queue: this blocks when full (backpressure).
            let _ = tx.send(AsyncJob::Push { client, envelope, multicast });
        }
    }

    fn run_async_job(&self, job: AsyncJob) {
        match job {
            AsyncJob::Push { client, envelope, multicast } => {
                let routing = if multicast {
                    crate::collab::data::Routing::Multicast
                } else {
                    crate::collab::data::Routing::Unicast
                };
                if let Err(err) = self.push_now(&client, envelope, routing) {
                    self.emit_event(
                        &client.component,
                        event_names::DELIVERY_FAILED,
                        EventPayload::Scalars(
                            [("error".to_string(), PropertyValue::Str(err.to_string()))].into(),
                        ),
                        false,
                    );
                }
            }
        }
    }
}

impl Drop for Container {
    fn drop(&mut self) {
        self.async_tx.lock().take();
        if let Some(worker) = self.async_worker.lock().take() {
            let _ = worker.join();
        }
    }
}

fn record_of(id: &ComponentId, slot: &Slot) -> ComponentRecord {
    ComponentRecord {
        id: id.clone(),
        type_id: slot.type_id.clone(),
        state: slot.state,
        interfaces: slot.interfaces.clone(),
        context: slot.context.clone(),
        properties: slot.properties.clone(),
    }
}

fn binding_payload(b: &BindingRecord) -> EventPayload {
    EventPayload::Scalars(
        [
            ("client".to_string(), PropertyValue::Str(b.client.component.to_string())),
            ("client_interface".to_string(), PropertyValue::Str(b.client.interface.clone())),
            ("server".to_string(), PropertyValue::Str(b.server.component.to_string())),
            ("server_interface".to_string(), PropertyValue::Str(b.server.interface.clone())),
        ]
        .into(),
    )
}

/// Broker search over the ancestor chain: the first context level with any
/// match wins; matches are ordered by member registration order, then
/// descriptor order within a component.
fn broker_in(
    state: &State,
    ctx: &ContextId,
    style: CollabStyle,
    payload_type: &str,
    exclude: Option<&ComponentId>,
) -> Vec<IfaceRef> {
    let mut current = Some(ctx.clone());
    while let Some(c) = current {
        let Some(ctx_state) = state.contexts.get(&c) else { break };
        let mut found = Vec::new();
        for member in &ctx_state.members {
            if exclude == Some(member) {
                continue;
            }
            if let Some(slot) = state.components.get(member) {
                for d in &slot.interfaces {
                    if d.direction == Direction::Provided
                        && d.style == style
                        && d.payload_type == payload_type
                    {
                        found.push(IfaceRef::new(member.clone(), d.name.clone()));
                    }
                }
            }
        }
        if !found.is_empty() {
            return found;
        }
        current = ctx_state.parent.clone();
    }
    Vec::new()
}

/// Pick a hot-swap substitute for `client` and record the new binding.
/// Only stateless providers are eligible.
fn implicit_rebind(state: &mut State, client: &IfaceRef) -> Option<BindingRecord> {
    let client_slot = state.components.get(&client.component)?;
    let client_desc = client_slot
        .interfaces
        .iter()
        .find(|d| d.name == client.interface && d.direction == Direction::Required)?
        .clone();
    let client_ctx = client_slot.context.clone();

    let candidates = broker_in(
        state,
        &client_ctx,
        client_desc.style,
        &client_desc.payload_type,
        Some(&client.component),
    );
    let server = candidates
        .into_iter()
        .find(|c| state.components.get(&c.component).is_some_and(|s| s.stateless))?;

    let id = state.next_binding;
    state.next_binding += 1;
    let binding = BindingRecord {
        id,
        client: client.clone(),
        server,
        mode: BindingMode::Implicit,
    };
    state.contexts.get_mut(&client_ctx)?.bindings.push(binding.clone());
    Some(binding)
}
