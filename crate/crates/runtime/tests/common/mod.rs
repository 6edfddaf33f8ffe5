//! Test component types shared by the runtime integration tests.
//!
//! Each integration test binary compiles this module independently and uses
//! a different subset of it.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use runtime::collab::data::DataEnvelope;
use runtime::collab::events::EventPayload;
use runtime::container::{
    CollabStyle, ComponentInstance, ComponentSetup, ComponentType, DataSink, DataSource,
    InterfaceDescriptor, ServiceProvider,
};
use runtime::property::{PropertyMap, PropertyValue};

pub const ITEMS: &str = "test_items";

// ---------------------------------------------------------------------------
// TestQueue: provided sink "input" + provided source "pull", with a
// queue_grew event on the empty->non-empty transition.
// ---------------------------------------------------------------------------

struct QueueInner {
    items: Mutex<VecDeque<Vec<u8>>>,
    setup: ComponentSetup,
    payload_type: String,
}

impl QueueInner {
    fn push_items(&self, envelope: DataEnvelope) {
        let items = envelope.into_items().expect("well-framed envelope");
        let grew_to = {
            let mut q = self.items.lock().unwrap();
            let was_empty = q.is_empty();
            q.extend(items);
            if was_empty && !q.is_empty() {
                Some(q.len())
            } else {
                None
            }
        };
        if let Some(len) = grew_to {
            self.setup.emit(
                "queue_grew",
                EventPayload::Scalars(
                    [("len".to_string(), PropertyValue::Int(len as i64))].into(),
                ),
                false,
            );
        }
    }
}

impl DataSink for QueueInner {
    fn push(&self, envelope: DataEnvelope) {
        self.push_items(envelope);
    }
}

impl DataSource for QueueInner {
    fn pull(&self, max_items: u32) -> Result<DataEnvelope, String> {
        let mut q = self.items.lock().unwrap();
        let n = (max_items as usize).min(q.len());
        let items: Vec<Vec<u8>> = q.drain(..n).collect();
        Ok(DataEnvelope::from_items(&self.payload_type, items))
    }

    fn available(&self) -> u32 {
        self.items.lock().unwrap().len() as u32
    }
}

struct QueueInstance {
    inner: Arc<QueueInner>,
}

impl ComponentInstance for QueueInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![
            InterfaceDescriptor::provided_sink("input", &self.inner.payload_type, self.inner.clone()),
            InterfaceDescriptor::provided_source("pull", &self.inner.payload_type, self.inner.clone()),
        ]
    }
}

pub struct QueueType;

impl ComponentType for QueueType {
    fn type_id(&self) -> &str {
        "TestQueue"
    }

    fn create(
        &self,
        setup: ComponentSetup,
        config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        let payload_type = config
            .get("payload_type")
            .and_then(|v| v.as_str())
            .unwrap_or(ITEMS)
            .to_string();
        Ok(Box::new(QueueInstance {
            inner: Arc::new(QueueInner {
                items: Mutex::new(VecDeque::new()),
                setup,
                payload_type,
            }),
        }))
    }
}

// ---------------------------------------------------------------------------
// EchoService: stateless provided service "svc" echoing the request.
// ---------------------------------------------------------------------------

struct Echo;

impl ServiceProvider for Echo {
    fn call(&self, request: DataEnvelope) -> Result<DataEnvelope, String> {
        Ok(request)
    }
}

struct EchoInstance;

impl ComponentInstance for EchoInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![InterfaceDescriptor::provided_service("svc", ITEMS, Arc::new(Echo))]
    }

    fn configure(&mut self, key: &str, value: &PropertyValue) -> Result<(), String> {
        // Validation example used by the configure tests.
        if key == "port" {
            match value {
                PropertyValue::Int(p) if *p > 0 && *p <= 65535 => Ok(()),
                _ => Err("port must be in 1..=65535".to_string()),
            }
        } else {
            Ok(())
        }
    }
}

pub struct EchoType;

impl ComponentType for EchoType {
    fn type_id(&self) -> &str {
        "EchoService"
    }

    fn stateless(&self) -> bool {
        true
    }

    fn create(
        &self,
        _setup: ComponentSetup,
        _config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        Ok(Box::new(EchoInstance))
    }
}

// ---------------------------------------------------------------------------
// FailingService: provided service "svc" that always faults.
// ---------------------------------------------------------------------------

struct Failing;

impl ServiceProvider for Failing {
    fn call(&self, _request: DataEnvelope) -> Result<DataEnvelope, String> {
        Err("provider exploded".to_string())
    }
}

struct FailingInstance;

impl ComponentInstance for FailingInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![InterfaceDescriptor::provided_service("svc", ITEMS, Arc::new(Failing))]
    }
}

pub struct FailingType;

impl ComponentType for FailingType {
    fn type_id(&self) -> &str {
        "FailingService"
    }

    fn create(
        &self,
        _setup: ComponentSetup,
        _config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        Ok(Box::new(FailingInstance))
    }
}

// ---------------------------------------------------------------------------
// Collector: provided sink "input"; received envelopes are inspectable.
// ---------------------------------------------------------------------------

type Buffers = Arc<Mutex<HashMap<String, Arc<Mutex<Vec<DataEnvelope>>>>>>;

struct CollectorSink {
    buffer: Arc<Mutex<Vec<DataEnvelope>>>,
}

impl DataSink for CollectorSink {
    fn push(&self, envelope: DataEnvelope) {
        self.buffer.lock().unwrap().push(envelope);
    }
}

struct CollectorInstance {
    buffer: Arc<Mutex<Vec<DataEnvelope>>>,
}

impl ComponentInstance for CollectorInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        vec![InterfaceDescriptor::provided_sink(
            "input",
            ITEMS,
            Arc::new(CollectorSink { buffer: self.buffer.clone() }),
        )]
    }
}

#[derive(Default)]
pub struct CollectorType {
    buffers: Buffers,
}

impl CollectorType {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn received(&self, component: &str) -> Vec<DataEnvelope> {
        self.buffers
            .lock()
            .unwrap()
            .get(component)
            .map(|b| b.lock().unwrap().clone())
            .unwrap_or_default()
    }
}

impl ComponentType for CollectorType {
    fn type_id(&self) -> &str {
        "Collector"
    }

    fn create(
        &self,
        setup: ComponentSetup,
        _config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        let buffer = Arc::new(Mutex::new(Vec::new()));
        self.buffers
            .lock()
            .unwrap()
            .insert(setup.component.to_string(), buffer.clone());
        Ok(Box::new(CollectorInstance { buffer }))
    }
}

// ---------------------------------------------------------------------------
// Client: one required interface per collaboration need. The interface set
// comes from config so tests can shape clients freely.
// ---------------------------------------------------------------------------

struct ClientInstance {
    interfaces: Vec<InterfaceDescriptor>,
}

impl ComponentInstance for ClientInstance {
    fn interfaces(&self) -> Vec<InterfaceDescriptor> {
        self.interfaces.clone()
    }
}

/// Config keys: `needs` is a `;`-separated list of `name:style[:multicast]`
/// entries, e.g. `"source:data;svc:service"`. Payload type defaults to
/// [`ITEMS`] or comes from `payload_type`.
pub struct ClientType;

impl ComponentType for ClientType {
    fn type_id(&self) -> &str {
        "Client"
    }

    fn create(
        &self,
        _setup: ComponentSetup,
        config: &PropertyMap,
    ) -> Result<Box<dyn ComponentInstance>, String> {
        let payload = config
            .get("payload_type")
            .and_then(|v| v.as_str())
            .unwrap_or(ITEMS)
            .to_string();
        let needs = config
            .get("needs")
            .and_then(|v| v.as_str())
            .unwrap_or("source:data")
            .to_string();
        let mut interfaces = Vec::new();
        for entry in needs.split(';').filter(|s| !s.is_empty()) {
            let mut parts = entry.split(':');
            let name = parts.next().ok_or("missing interface name")?;
            let style = match parts.next() {
                Some("data") => CollabStyle::Data,
                Some("service") => CollabStyle::Service,
                Some("event") => CollabStyle::Event,
                other => return Err(format!("bad style {other:?}")),
            };
            let mut desc = InterfaceDescriptor::required(name, style, &payload);
            if parts.next() == Some("multicast") {
                desc = desc.multicast();
            }
            interfaces.push(desc);
        }
        Ok(Box::new(ClientInstance { interfaces }))
    }
}

/// A container with every test type registered.
pub fn test_container() -> (std::sync::Arc<runtime::Container>, Arc<CollectorType>) {
    let container = runtime::Container::new();
    let collectors = CollectorType::new();
    container.register_component_type(Arc::new(QueueType)).unwrap();
    container.register_component_type(Arc::new(EchoType)).unwrap();
    container.register_component_type(Arc::new(FailingType)).unwrap();
    container.register_component_type(collectors.clone()).unwrap();
    container.register_component_type(Arc::new(ClientType)).unwrap();
    (container, collectors)
}

/// Push raw items into a queue component through its provided sink.
pub fn fill_queue(container: &runtime::Container, queue: &str, items: &[&[u8]]) {
    let env = DataEnvelope::from_items(ITEMS, items.iter().copied());
    container
        .push_to(&runtime::container::IfaceRef::new(queue, "input"), env)
        .expect("queue accepts pushes");
}
