//! Prioritized dispatch of consumable events.
//!
//! Handlers are invoked in strictly non-increasing priority order, ties broken
//! by registration order. A handler that consumes a consumable event cancels
//! further dispatching. Agent-origin registrations are offset so that they
//! always outrank framework-origin ones, letting the intentional layer
//! override low-level handlers by consuming their events.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, ReentrantMutex, RwLock};

use crate::container::ComponentId;
use crate::property::PropertyValue;

/// A named, consumable notification emitted by a component.
#[derive(Debug, Clone)]
pub struct Event {
    pub source: ComponentId,
    pub name: String,
    pub payload: EventPayload,
    pub consumable: bool,
    /// Monotone per-source counter, assigned at emission.
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventPayload {
    Empty,
    Bytes(Vec<u8>),
    Scalars(BTreeMap<String, PropertyValue>),
}

impl EventPayload {
    pub fn scalar(&self, key: &str) -> Option<&PropertyValue> {
        match self {
            EventPayload::Scalars(m) => m.get(key),
            _ => None,
        }
    }
}

/// What a handler did with the event it was given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandlerOutcome {
    Continue,
    /// Declare the event consumed; cancels dispatch of consumable events.
    Consume,
}

/// Where a registration came from. Agent registrations always outrank
/// framework ones regardless of the requested priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandlerOrigin {
    Framework,
    Agent,
}

/// Offset applied to agent-origin priorities. Any `i32` framework priority is
/// strictly below `AGENT_OFFSET + i32::MIN`.
const AGENT_OFFSET: i64 = 1 << 32;

pub type HandlerId = u64;
pub type HandlerFn = dyn Fn(&Event) -> HandlerOutcome + Send + Sync;

/// Match target of a registration; `None` is a wildcard.
#[derive(Debug, Clone, Default)]
pub struct EventTarget {
    pub source: Option<ComponentId>,
    pub name: Option<String>,
}

impl EventTarget {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn source(component: impl Into<ComponentId>) -> Self {
        Self { source: Some(component.into()), name: None }
    }

    pub fn named(name: impl Into<String>) -> Self {
        Self { source: None, name: Some(name.into()) }
    }

    pub fn exact(component: impl Into<ComponentId>, name: impl Into<String>) -> Self {
        Self { source: Some(component.into()), name: Some(name.into()) }
    }

    fn matches(&self, event: &Event) -> bool {
        self.source.as_ref().map_or(true, |s| *s == event.source)
            && self.name.as_ref().map_or(true, |n| *n == event.name)
    }
}

struct Registration {
    id: HandlerId,
    target: EventTarget,
    effective_priority: i64,
    origin: HandlerOrigin,
    handler: Arc<HandlerFn>,
}

/// Per-dispatch record: which handlers ran, at what effective priority, and
/// who (if anyone) consumed the event.
#[derive(Debug, Clone, Default)]
pub struct DispatchReport {
    pub sequence: u64,
    pub invoked: Vec<(HandlerId, i64)>,
    pub consumed_by: Option<HandlerId>,
}

#[derive(Default)]
struct SourceState {
    sequence: u64,
}

/// The event-dispatching framework service.
///
/// Dispatch of a single event is sequential; events from distinct sources may
/// dispatch concurrently, while events from one source are serialized.
pub struct EventBus {
    registrations: RwLock<Vec<Registration>>,
    next_id: AtomicU64,
    sources: Mutex<HashMap<ComponentId, (Arc<ReentrantMutex<()>>, Arc<Mutex<SourceState>>)>>,
}

impl Default for EventBus {
    fn default() -> Self {
        Self::new()
    }
}

impl EventBus {
    pub fn new() -> Self {
        Self {
            registrations: RwLock::new(Vec::new()),
            next_id: AtomicU64::new(1),
            sources: Mutex::new(HashMap::new()),
        }
    }

    /// Register a handler. Returns the id used for deregistration.
    pub fn register(
        &self,
        target: EventTarget,
        priority: i32,
        origin: HandlerOrigin,
        handler: Arc<HandlerFn>,
    ) -> HandlerId {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let effective_priority = match origin {
            HandlerOrigin::Framework => i64::from(priority),
            HandlerOrigin::Agent => AGENT_OFFSET + i64::from(priority),
        };
        self.registrations.write().push(Registration {
            id,
            target,
            effective_priority,
            origin,
            handler,
        });
        id
    }

    pub fn deregister(&self, id: HandlerId) {
        self.registrations.write().retain(|r| r.id != id);
    }

    pub fn origin_of(&self, id: HandlerId) -> Option<HandlerOrigin> {
        self.registrations.read().iter().find(|r| r.id == id).map(|r| r.origin)
    }

    /// Emit an event and run matching handlers to completion.
    ///
    /// Handlers run outside all bus locks except the per-source dispatch lock,
    /// which is reentrant so a handler may emit follow-up events from the same
    /// source. Handler panics are caught and logged; dispatch continues.
    pub fn emit(
        &self,
        source: &ComponentId,
        name: &str,
        payload: EventPayload,
        consumable: bool,
    ) -> DispatchReport {
        let (dispatch_lock, state) = {
            let mut sources = self.sources.lock();
            let entry = sources.entry(source.clone()).or_insert_with(|| {
                (Arc::new(ReentrantMutex::new(())), Arc::new(Mutex::new(SourceState::default())))
            });
            (entry.0.clone(), entry.1.clone())
        };

        let _serialized = dispatch_lock.lock();
        let sequence = {
            let mut st = state.lock();
            st.sequence += 1;
            st.sequence
        };

        let event = Event {
            source: source.clone(),
            name: name.to_string(),
            payload,
            consumable,
            sequence,
        };

        // Snapshot matching handlers ordered by (priority desc, registration asc);
        // the registration vector is already in registration order.
        let mut matching: Vec<(HandlerId, i64, Arc<HandlerFn>)> = self
            .registrations
            .read()
            .iter()
            .filter(|r| r.target.matches(&event))
            .map(|r| (r.id, r.effective_priority, r.handler.clone()))
            .collect();
        matching.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut report = DispatchReport { sequence, ..Default::default() };
        for (id, priority, handler) in matching {
            let outcome = catch_unwind(AssertUnwindSafe(|| handler(&event)));
            report.invoked.push((id, priority));
            match outcome {
                Ok(HandlerOutcome::Consume) if event.consumable => {
                    report.consumed_by = Some(id);
                    break;
                }
                Ok(_) => {}
                Err(_) => {
                    log::warn!("event handler {id} panicked while handling `{}`", event.name);
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn recorder(log: &Arc<Mutex<Vec<&'static str>>>, tag: &'static str, outcome: HandlerOutcome) -> Arc<HandlerFn> {
        let log = log.clone();
        Arc::new(move |_e: &Event| {
            log.lock().push(tag);
            outcome
        })
    }

    #[test]
    fn agent_consumer_blocks_framework_handler() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::any(), 0, HandlerOrigin::Framework, recorder(&log, "fw", HandlerOutcome::Continue));
        bus.register(EventTarget::any(), 10, HandlerOrigin::Agent, recorder(&log, "agent", HandlerOutcome::Consume));

        let report = bus.emit(&ComponentId::from("c1"), "tick", EventPayload::Empty, true);
        assert_eq!(*log.lock(), vec!["agent"]);
        assert!(report.consumed_by.is_some());
    }

    #[test]
    fn non_consumed_event_reaches_all_in_priority_order() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::any(), 0, HandlerOrigin::Framework, recorder(&log, "low", HandlerOutcome::Continue));
        bus.register(EventTarget::any(), 10, HandlerOrigin::Agent, recorder(&log, "high", HandlerOutcome::Continue));

        let report = bus.emit(&ComponentId::from("c1"), "tick", EventPayload::Empty, true);
        assert_eq!(*log.lock(), vec!["high", "low"]);
        assert_eq!(report.invoked.len(), 2);
        assert!(report.consumed_by.is_none());
    }

    #[test]
    fn equal_priority_dispatches_in_registration_order() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::any(), 5, HandlerOrigin::Framework, recorder(&log, "first", HandlerOutcome::Continue));
        bus.register(EventTarget::any(), 5, HandlerOrigin::Framework, recorder(&log, "second", HandlerOutcome::Continue));
        bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, false);
        assert_eq!(*log.lock(), vec!["first", "second"]);

        // Registering in the opposite order flips the invocation order.
        let bus = EventBus::new();
        let log2 = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::any(), 5, HandlerOrigin::Framework, recorder(&log2, "second", HandlerOutcome::Continue));
        bus.register(EventTarget::any(), 5, HandlerOrigin::Framework, recorder(&log2, "first", HandlerOutcome::Continue));
        bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, false);
        assert_eq!(*log2.lock(), vec!["second", "first"]);
    }

    #[test]
    fn agent_priority_always_exceeds_framework_priority() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::any(), i32::MAX, HandlerOrigin::Framework, recorder(&log, "fw", HandlerOutcome::Continue));
        bus.register(EventTarget::any(), 0, HandlerOrigin::Agent, recorder(&log, "agent", HandlerOutcome::Continue));
        bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, false);
        assert_eq!(*log.lock(), vec!["agent", "fw"]);
    }

    #[test]
    fn deregistered_handler_sees_only_prior_events() {
        let bus = EventBus::new();
        let count = Arc::new(AtomicUsize::new(0));
        let c = count.clone();
        let id = bus.register(
            EventTarget::any(),
            0,
            HandlerOrigin::Framework,
            Arc::new(move |_| {
                c.fetch_add(1, Ordering::SeqCst);
                HandlerOutcome::Continue
            }),
        );
        bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, false);
        bus.deregister(id);
        bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, false);
        assert_eq!(count.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn sequence_is_monotone_per_source() {
        let bus = EventBus::new();
        let a = ComponentId::from("a");
        let b = ComponentId::from("b");
        let s1 = bus.emit(&a, "e", EventPayload::Empty, false).sequence;
        let s2 = bus.emit(&a, "e", EventPayload::Empty, false).sequence;
        let s3 = bus.emit(&b, "e", EventPayload::Empty, false).sequence;
        assert!(s2 > s1);
        assert_eq!(s3, 1);
    }

    #[test]
    fn panicking_handler_does_not_abort_dispatch() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(
            EventTarget::any(),
            10,
            HandlerOrigin::Framework,
            Arc::new(|_| panic!("boom")),
        );
        bus.register(EventTarget::any(), 0, HandlerOrigin::Framework, recorder(&log, "after", HandlerOutcome::Continue));
        let report = bus.emit(&ComponentId::from("c"), "e", EventPayload::Empty, true);
        assert_eq!(*log.lock(), vec!["after"]);
        assert_eq!(report.invoked.len(), 2);
    }

    #[test]
    fn wildcard_and_exact_targets() {
        let bus = EventBus::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        bus.register(EventTarget::exact("c1", "go"), 0, HandlerOrigin::Framework, recorder(&log, "exact", HandlerOutcome::Continue));
        bus.register(EventTarget::named("go"), 0, HandlerOrigin::Framework, recorder(&log, "by-name", HandlerOutcome::Continue));
        bus.register(EventTarget::source("c2"), 0, HandlerOrigin::Framework, recorder(&log, "by-source", HandlerOutcome::Continue));

        bus.emit(&ComponentId::from("c1"), "go", EventPayload::Empty, false);
        assert_eq!(*log.lock(), vec!["exact", "by-name"]);
        log.lock().clear();
        bus.emit(&ComponentId::from("c2"), "stop", EventPayload::Empty, false);
        assert_eq!(*log.lock(), vec!["by-source"]);
    }
}
