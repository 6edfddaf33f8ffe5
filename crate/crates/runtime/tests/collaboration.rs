//! Service calls, push/pull data transfer and the event-dispatch properties.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{fill_queue, test_container, ITEMS};
use proptest::prelude::*;
use runtime::collab::data::{CollabError, DataEnvelope, DeliveryMode, Routing};
use runtime::collab::events::{EventBus, EventPayload, EventTarget, HandlerOrigin, HandlerOutcome};
use runtime::container::{ComponentId, IfaceRef, LifecycleTarget};
use runtime::props;

fn activate(c: &runtime::Container, id: &str) {
    c.set_lifecycle(&c.root(), id, LifecycleTarget::Active).unwrap();
}

#[test]
fn service_echo_roundtrip() {
    let (c, _) = test_container();
    let root = c.root();
    c.load_component(&root, "echo", "EchoService", props! {}).unwrap();
    c.load_component(&root, "client", "Client", props! {"needs" => "svc:service"}).unwrap();
    c.bind(IfaceRef::new("client", "svc"), IfaceRef::new("echo", "svc")).unwrap();
    activate(&c, "echo");

    let req = DataEnvelope::from_items(ITEMS, [b"x".as_ref()]);
    let resp = c.invoke_service(&IfaceRef::new("client", "svc"), req.clone()).unwrap();
    assert_eq!(resp, req);
}

#[test]
fn service_call_on_deactivated_provider_fails() {
    let (c, _) = test_container();
    let root = c.root();
    c.load_component(&root, "echo", "EchoService", props! {}).unwrap();
    c.load_component(&root, "client", "Client", props! {"needs" => "svc:service"}).unwrap();
    c.bind(IfaceRef::new("client", "svc"), IfaceRef::new("echo", "svc")).unwrap();
    activate(&c, "echo");
    c.set_lifecycle(&root, "echo", LifecycleTarget::Deactivated).unwrap();

    let err = c
        .invoke_service(&IfaceRef::new("client", "svc"), DataEnvelope::empty(ITEMS))
        .unwrap_err();
    assert!(matches!(err, CollabError::ProviderInactive(_)));
}

#[test]
fn provider_fault_carries_error_text() {
    let (c, _) = test_container();
    let root = c.root();
    c.load_component(&root, "bad", "FailingService", props! {}).unwrap();
    c.load_component(&root, "client", "Client", props! {"needs" => "svc:service"}).unwrap();
    c.bind(IfaceRef::new("client", "svc"), IfaceRef::new("bad", "svc")).unwrap();
    activate(&c, "bad");

    let err = c
        .invoke_service(&IfaceRef::new("client", "svc"), DataEnvelope::empty(ITEMS))
        .unwrap_err();
    match err {
        CollabError::ProviderFault(msg) => assert!(msg.contains("provider exploded")),
        other => panic!("expected ProviderFault, got {other:?}"),
    }
}

#[test]
fn pull_drains_queue_in_batches() {
    let (c, _) = test_container();
    let root = c.root();
    c.load_component(&root, "q", "TestQueue", props! {}).unwrap();
    c.load_component(&root, "client", "Client", props! {"needs" => "source:data"}).unwrap();
    c.bind(IfaceRef::new("client", "source"), IfaceRef::new("q", "pull")).unwrap();
    activate(&c, "q");
    fill_queue(&c, "q", &[b"a", b"b", b"c"]);

    let client = IfaceRef::new("client", "source");
    let first = c.pull_data(&client, 2).unwrap();
    assert_eq!(first.item_count(), 2);
    assert_eq!(first.items().unwrap(), vec![b"a".as_ref(), b"b".as_ref()]);
    let second = c.pull_data(&client, 2).unwrap();
    assert_eq!(second.item_count(), 1);
    let third = c.pull_data(&client, 2).unwrap();
    assert_eq!(third.item_count(), 0);
    assert!(third.is_empty());
}

#[test]
fn pull_after_provider_unload_without_substitute_fails() {
    let (c, _) = test_container();
    let root = c.root();
    c.load_component(&root, "q", "TestQueue", props! {}).unwrap();
    c.load_component(&root, "client", "Client", props! {"needs" => "source:data"}).unwrap();
    c.bind(IfaceRef::new("client", "source"), IfaceRef::new("q", "pull")).unwrap();
    activate(&c, "q");
    c.set_lifecycle(&root, "q", LifecycleTarget::Unloaded).unwrap();

    // The binding disappeared with the provider (queues are stateful, so no
    // hot swap happens); the client is left with nothing to pull from.
    let err = c.pull_data(&IfaceRef::new("client", "source"), 1).unwrap_err();
    assert!(matches!(err, CollabError::NoBinding(_)));
}

#[test]
fn multicast_push_reaches_every_bound_provider_identically() {
    let (c, collectors) = test_container();
    let root = c.root();
    for id in ["s1", "s2", "s3"] {
        c.load_component(&root, id, "Collector", props! {}).unwrap();
        activate(&c, id);
    }
    c.load_component(&root, "client", "Client", props! {"needs" => "output:data:multicast"})
        .unwrap();
    let client = IfaceRef::new("client", "output");
    for id in ["s1", "s2", "s3"] {
        c.bind(client.clone(), IfaceRef::new(id, "input")).unwrap();
    }

    let env = DataEnvelope::from_items(ITEMS, [b"payload".as_ref()]);
    c.push_data(&client, env.clone(), DeliveryMode::Sync, Routing::Multicast).unwrap();

    for id in ["s1", "s2", "s3"] {
        let got = collectors.received(id);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload_bytes(), env.payload_bytes(), "byte-identical payloads");
    }
}

#[test]
fn unicast_push_without_binding_is_no_binding() {
    let (c, _) = test_container();
    c.load_component(&c.root(), "client", "Client", props! {"needs" => "output:data"}).unwrap();
    let err = c
        .push_data(
            &IfaceRef::new("client", "output"),
            DataEnvelope::empty(ITEMS),
            DeliveryMode::Sync,
            Routing::Unicast,
        )
        .unwrap_err();
    assert!(matches!(err, CollabError::NoBinding(_)));
}

#[test]
fn async_push_is_eventually_delivered() {
    let (c, collectors) = test_container();
    let root = c.root();
    c.load_component(&root, "s1", "Collector", props! {}).unwrap();
    activate(&c, "s1");
    c.load_component(&root, "client", "Client", props! {"needs" => "output:data"}).unwrap();
    c.bind(IfaceRef::new("client", "output"), IfaceRef::new("s1", "input")).unwrap();

    let env = DataEnvelope::from_items(ITEMS, [b"later".as_ref()]);
    c.push_data(&IfaceRef::new("client", "output"), env, DeliveryMode::Async, Routing::Unicast)
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        if collectors.received("s1").len() == 1 {
            break;
        }
        assert!(Instant::now() < deadline, "async push never arrived");
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn sync_pushes_from_many_threads_lose_nothing() {
    let (c, collectors) = test_container();
    let root = c.root();
    c.load_component(&root, "sink", "Collector", props! {}).unwrap();
    activate(&c, "sink");
    c.load_component(&root, "client", "Client", props! {"needs" => "output:data"}).unwrap();
    c.bind(IfaceRef::new("client", "output"), IfaceRef::new("sink", "input")).unwrap();

    let threads: Vec<_> = (0..4)
        .map(|t| {
            let c = c.clone();
            std::thread::spawn(move || {
                for i in 0..50 {
                    let env = DataEnvelope::from_items(ITEMS, [format!("{t}-{i}").into_bytes()]);
                    c.push_data(
                        &IfaceRef::new("client", "output"),
                        env,
                        DeliveryMode::Sync,
                        Routing::Unicast,
                    )
                    .unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }

    let received = collectors.received("sink");
    let total: u32 = received.iter().map(|e| e.item_count()).sum();
    assert_eq!(total, 200, "item counts pushed == item counts received");
}

// ---------------------------------------------------------------------------
// Event dispatch properties over randomized handler sets.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct HandlerPlan {
    priority: i16,
    agent: bool,
    consumes: bool,
}

fn handler_plan() -> impl Strategy<Value = HandlerPlan> {
    (any::<i16>(), any::<bool>(), any::<bool>())
        .prop_map(|(priority, agent, consumes)| HandlerPlan { priority, agent, consumes })
}

/// Registers the handlers, emits one event and validates the ordering,
/// prefix and agent-override properties of the dispatch report. The
/// acceptance suite runs the same checks at 10^4 cases.
fn check_dispatch_properties(handlers: &[HandlerPlan], consumable: bool) -> Result<(), String> {
    let bus = EventBus::new();
    let mut ids = Vec::new();
    for h in handlers {
        let outcome = if h.consumes { HandlerOutcome::Consume } else { HandlerOutcome::Continue };
        let origin = if h.agent { HandlerOrigin::Agent } else { HandlerOrigin::Framework };
        let id = bus.register(
            EventTarget::any(),
            i32::from(h.priority),
            origin,
            Arc::new(move |_e| outcome),
        );
        ids.push(id);
    }

    let report = bus.emit(&ComponentId::from("src"), "evt", EventPayload::Empty, consumable);

    // Priority order non-increasing.
    let priorities: Vec<i64> = report.invoked.iter().map(|(_, p)| *p).collect();
    if priorities.windows(2).any(|w| w[0] < w[1]) {
        return Err(format!("priority order violated: {priorities:?}"));
    }

    // The invoked set is a prefix of the full priority-ordered matching list.
    let mut expected: Vec<(u64, i64, bool, bool)> = handlers
        .iter()
        .zip(&ids)
        .map(|(h, id)| {
            let eff = if h.agent {
                (1i64 << 32) + i64::from(h.priority)
            } else {
                i64::from(h.priority)
            };
            (*id, eff, h.consumes, h.agent)
        })
        .collect();
    expected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let invoked_ids: Vec<u64> = report.invoked.iter().map(|(id, _)| *id).collect();
    let prefix: Vec<u64> = expected.iter().take(invoked_ids.len()).map(|e| e.0).collect();
    if invoked_ids != prefix {
        return Err(format!("invoked set {invoked_ids:?} is not the prefix {prefix:?}"));
    }

    // Consumption semantics: the first consuming handler ends dispatch of a
    // consumable event; otherwise everyone runs.
    let cut = expected.iter().position(|e| e.2);
    let expected_len = match (consumable, cut) {
        (true, Some(i)) => i + 1,
        _ => expected.len(),
    };
    if invoked_ids.len() != expected_len {
        return Err(format!("expected {expected_len} invocations, got {}", invoked_ids.len()));
    }

    // Agent override: when a consuming agent handler exists and the event is
    // consumable, no framework handler may run, because every agent handler
    // outranks every framework handler.
    if consumable && handlers.iter().any(|h| h.agent && h.consumes) {
        let framework_ran = report.invoked.iter().any(|(id, _)| {
            expected.iter().any(|(eid, _, _, agent)| eid == id && !agent)
        });
        if framework_ran {
            return Err("framework handler ran past a consuming agent handler".to_string());
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]
    #[test]
    fn dispatch_properties_hold(handlers in proptest::collection::vec(handler_plan(), 0..12),
                                consumable in any::<bool>()) {
        if let Err(e) = check_dispatch_properties(&handlers, consumable) {
            prop_assert!(false, "{}", e);
        }
    }
}
