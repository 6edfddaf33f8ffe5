//! Agent kernel behaviour: perceptor, actuators, plan execution over the
//! container, and local/socket message transports.

mod common;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{test_container, ITEMS};
use runtime::agent::{
    atom, ontology, AclMessage, AgentBehavior, AgentCtx, AgentError, AgentSpec, AgentSystem,
    Directive, LocalTransport, MailboxHub, MessageContent, Plan, PlanStatus,
    SocketTransport, Term, TransportError, BROADCAST,
};
use runtime::collab::events::EventPayload;
use runtime::container::IfaceRef;
use runtime::property::PropertyValue;

fn local_system() -> Arc<AgentSystem> {
    let (container, _) = test_container();
    let hub = MailboxHub::new();
    let transport = LocalTransport::new(hub.clone());
    AgentSystem::new(0, container, transport, hub)
}

fn spawn_plain(sys: &AgentSystem, id: &str) {
    sys.spawn(AgentSpec::new(id)).unwrap();
}

#[test]
fn create_directive_loads_component_and_asserts_ontology() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("g1", "TestQueue")).unwrap();
    })
    .unwrap();

    assert_eq!(sys.container().record("g1").unwrap().type_id, "TestQueue");
    sys.with_agent("a1", |state| {
        assert!(state.beliefs.holds(&atom(ontology::CREATED, vec![Term::sym("g1")])));
        assert!(state.beliefs.holds(&atom(ontology::COMPONENT, vec![Term::sym("g1")])));
    })
    .unwrap();
}

#[test]
fn failed_bind_asserts_nothing() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    let err = sys
        .with_agent("a1", |state| {
            let mut cx = AgentCtx { sys: &sys, state };
            cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
            cx.execute(&Directive::create("echo1", "EchoService")).unwrap();
            cx.execute(&Directive::create("cl", "Client")).unwrap();
            // DATA client against SERVICE provider: incompatible.
            cx.execute(&Directive::bind("cl", "source", "echo1", "svc"))
        })
        .unwrap();
    assert!(matches!(err, Err(AgentError::ActionFailed(_))));
    sys.with_agent("a1", |state| {
        assert!(!state
            .beliefs
            .holds(&atom(ontology::BOUND, vec![Term::var("a"), Term::var("b")])));
    })
    .unwrap();
}

#[test]
fn lookup_asserts_interface_beliefs() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
        cx.execute(&Directive::Lookup { id: Term::sym("q1") }).unwrap();
    })
    .unwrap();

    sys.with_agent("a1", |state| {
        // The queue's pull-out interface shows up as a server interface with
        // its style and payload class.
        assert!(state.beliefs.holds(&atom(
            ontology::SERVER_INTERFACE,
            vec![Term::sym("q1"), Term::sym("pull"), Term::sym("DATA"), Term::sym(ITEMS)],
        )));
        assert!(state.beliefs.holds(&atom(
            ontology::SERVER_INTERFACE,
            vec![Term::sym("q1"), Term::sym("input"), Term::sym("DATA"), Term::sym(ITEMS)],
        )));
    })
    .unwrap();
}

#[test]
fn focused_component_events_become_beliefs_unfocused_do_not() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
        cx.execute(&Directive::create("q2", "TestQueue")).unwrap();
        cx.execute(&Directive::focus("q1")).unwrap();
    })
    .unwrap();

    // q1 is focused, q2 is not.
    sys.container().emit_event(
        &"q1".into(),
        "queue_grew",
        EventPayload::Scalars([("len".to_string(), PropertyValue::Int(5))].into()),
        false,
    );
    sys.container().emit_event(
        &"q2".into(),
        "queue_grew",
        EventPayload::Scalars([("len".to_string(), PropertyValue::Int(9))].into()),
        false,
    );
    sys.step_agent("a1").unwrap();

    sys.with_agent("a1", |state| {
        assert!(state.beliefs.holds(&atom(
            ontology::EVENT,
            vec![Term::sym("q1"), Term::app("queue_grew", vec![Term::Int(5)])],
        )));
        assert!(!state
            .beliefs
            .holds(&atom(ontology::EVENT, vec![Term::sym("q2"), Term::var("d")])));
    })
    .unwrap();
}

#[test]
fn property_changes_replace_prior_triples() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
        cx.execute(&Directive::focus("q1")).unwrap();
    })
    .unwrap();

    sys.container().configure("q1", "batch", PropertyValue::Int(4)).unwrap();
    sys.step_agent("a1").unwrap();
    sys.container().configure("q1", "batch", PropertyValue::Int(9)).unwrap();
    sys.step_agent("a1").unwrap();

    sys.with_agent("a1", |state| {
        let subs = state.beliefs.query(&atom(
            ontology::PROPERTY,
            vec![Term::sym("q1"), Term::sym("batch"), Term::var("v")],
        ));
        assert_eq!(subs.len(), 1, "last-write-wins triple");
        assert_eq!(subs[0].get("v"), Some(&Term::Int(9)));
    })
    .unwrap();
}

#[test]
fn activation_beliefs_are_mutually_exclusive() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
        cx.execute(&Directive::activate("q1")).unwrap();
        cx.execute(&Directive::Deactivate { id: Term::sym("q1") }).unwrap();
        cx.execute(&Directive::activate("q1")).unwrap();
    })
    .unwrap();

    sys.with_agent("a1", |state| {
        assert!(state.beliefs.holds(&atom(ontology::ACTIVATED, vec![Term::sym("q1")])));
        assert!(!state.beliefs.holds(&atom(ontology::DEACTIVATED, vec![Term::sym("q1")])));
    })
    .unwrap();
}

/// A pusher worker with one required push-out interface; the plan test wires
/// it to a queue the way the worked creation plan does.
struct PusherType;

impl runtime::container::ComponentType for PusherType {
    fn type_id(&self) -> &str {
        "Pusher"
    }

    fn create(
        &self,
        _setup: runtime::container::ComponentSetup,
        _config: &runtime::property::PropertyMap,
    ) -> Result<Box<dyn runtime::container::ComponentInstance>, String> {
        struct Inst;
        impl runtime::container::ComponentInstance for Inst {
            fn interfaces(&self) -> Vec<runtime::container::InterfaceDescriptor> {
                vec![runtime::container::InterfaceDescriptor::required(
                    "output",
                    runtime::container::CollabStyle::Data,
                    ITEMS,
                )]
            }
        }
        Ok(Box::new(Inst))
    }
}

/// The component-creation plan shape from the worked example: create the
/// worker in parallel with announcing the queue name, plus a guarded branch
/// that, once the name is believed, creates the queue, binds output to input
/// and focuses both components.
#[test]
fn queue_creation_plan_ends_bound_and_focused() {
    let sys = local_system();
    sys.container().register_component_type(Arc::new(PusherType)).unwrap();
    sys.register_action("specify_queue_name", |_sys, _state, args| {
        let name = args[0].as_name().unwrap_or("g1").to_string();
        Ok(vec![atom("dataQueueName", vec![Term::sym(format!("{name}_q"))])])
    });

    spawn_plain(&sys, "a1");
    let plan = Plan::par(vec![
        Plan::act(Directive::create("g1", "Pusher")),
        Plan::act(Directive::App {
            name: "specify_queue_name".into(),
            args: vec![Term::sym("g1")],
        }),
        Plan::do_when(
            atom("dataQueueName", vec![Term::var("qName")]),
            Plan::seq(vec![
                Plan::act(Directive::Create {
                    id: Term::var("qName"),
                    type_id: Term::sym("TestQueue"),
                }),
                Plan::par(vec![
                    Plan::act(Directive::Bind {
                        client: Term::sym("g1"),
                        client_iface: Term::sym("output"),
                        server: Term::var("qName"),
                        server_iface: Term::sym("input"),
                    }),
                    Plan::act(Directive::focus("g1")),
                    Plan::act(Directive::Focus { id: Term::var("qName") }),
                ]),
            ]),
        ),
    ]);

    let status = sys.run_plan("a1", &plan, 20).unwrap();
    assert_eq!(status, PlanStatus::Done);

    sys.with_agent("a1", |state| {
        assert!(state
            .beliefs
            .holds(&atom(ontology::BOUND, vec![Term::sym("output"), Term::sym("input")])));
        assert!(state
            .beliefs
            .holds(&atom(ontology::FOCUSING_ON, vec![Term::sym("g1"), Term::var("t")])));
        assert!(state
            .beliefs
            .holds(&atom(ontology::FOCUSING_ON, vec![Term::sym("g1_q"), Term::var("t")])));
    })
    .unwrap();
    assert_eq!(sys.container().bindings_of(&IfaceRef::new("g1", "output")).len(), 1);
}

#[test]
fn do_when_with_false_trigger_stays_pending_without_side_effects() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    let plan = Plan::do_when(
        atom("never", vec![Term::var("x")]),
        Plan::act(Directive::create("ghost", "TestQueue")),
    );
    let status = sys.run_plan("a1", &plan, 10).unwrap();
    assert_eq!(status, PlanStatus::Running);
    assert!(sys.container().record("ghost").is_err(), "no side effects while pending");
}

// ---------------------------------------------------------------------------
// Messaging
// ---------------------------------------------------------------------------

/// Records delivered message contents in arrival order.
struct Recorder {
    log: Arc<Mutex<Vec<String>>>,
}

impl AgentBehavior for Recorder {
    fn on_message(&mut self, _cx: &mut AgentCtx<'_>, msg: &AclMessage) -> bool {
        if let MessageContent::Atom(a) = &msg.content {
            self.log.lock().unwrap().push(format!("{}:{a}", msg.sender));
        }
        true
    }
}

fn spawn_recorder(sys: &AgentSystem, id: &str) -> Arc<Mutex<Vec<String>>> {
    let log = Arc::new(Mutex::new(Vec::new()));
    sys.spawn(AgentSpec::new(id).with_behavior(Box::new(Recorder { log: log.clone() })))
        .unwrap();
    log
}

#[test]
fn broadcast_reaches_everyone_but_the_sender() {
    let sys = local_system();
    let g1 = spawn_recorder(&sys, "g1");
    let t1 = spawn_recorder(&sys, "t1");
    let t2 = spawn_recorder(&sys, "t2");

    sys.with_agent("g1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.send(AclMessage::inform("g1", BROADCAST, atom("hello", vec![]))).unwrap();
    })
    .unwrap();
    sys.step_all();

    assert!(g1.lock().unwrap().is_empty());
    assert_eq!(t1.lock().unwrap().len(), 1);
    assert_eq!(t2.lock().unwrap().len(), 1);
}

#[test]
fn send_to_unknown_agent_is_an_error() {
    let sys = local_system();
    spawn_plain(&sys, "g1");
    let err = sys
        .with_agent("g1", |state| {
            let mut cx = AgentCtx { sys: &sys, state };
            cx.send(AclMessage::inform("g1", "nobody", atom("hello", vec![])))
        })
        .unwrap();
    assert!(matches!(err, Err(AgentError::Transport(TransportError::UnknownReceiver(_)))));
}

#[test]
fn per_pair_delivery_is_fifo() {
    let sys = local_system();
    spawn_plain(&sys, "g1");
    let t1 = spawn_recorder(&sys, "t1");

    sys.with_agent("g1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        for i in 0..5 {
            cx.send(AclMessage::inform("g1", "t1", atom("seq", vec![Term::Int(i)]))).unwrap();
        }
    })
    .unwrap();
    sys.step_all();

    let got = t1.lock().unwrap().clone();
    let expected: Vec<String> = (0..5).map(|i| format!("g1:seq({i})")).collect();
    assert_eq!(got, expected);
}

#[test]
fn unhandled_inform_content_is_asserted_as_belief() {
    let sys = local_system();
    spawn_plain(&sys, "g1");
    spawn_plain(&sys, "t1");
    sys.with_agent("g1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.send(AclMessage::inform("g1", "t1", atom("fact", vec![Term::Int(7)]))).unwrap();
    })
    .unwrap();
    sys.step_all();
    sys.with_agent("t1", |state| {
        assert!(state.beliefs.holds(&atom("fact", vec![Term::Int(7)])));
    })
    .unwrap();
}

#[test]
fn transport_counter_counts_sends() {
    let sys = local_system();
    spawn_plain(&sys, "g1");
    spawn_plain(&sys, "t1");
    let before = sys.transport().sent_total();
    sys.with_agent("g1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.send(AclMessage::inform("g1", "t1", atom("one", vec![]))).unwrap();
        cx.send(AclMessage::inform("g1", BROADCAST, atom("two", vec![]))).unwrap();
    })
    .unwrap();
    assert_eq!(sys.transport().sent_total() - before, 2, "one increment per send call");
    let counts = sys.transport().content_counts();
    assert_eq!(counts.get("one"), Some(&1));
    assert_eq!(counts.get("two"), Some(&1));
}

// ---------------------------------------------------------------------------
// Socket transport between two in-process nodes
// ---------------------------------------------------------------------------

fn socket_pair() -> (Arc<AgentSystem>, Arc<AgentSystem>) {
    let (c0, _) = test_container();
    let (c1, _) = test_container();
    let hub0 = MailboxHub::new();
    let hub1 = MailboxHub::new();

    // Bind both listeners on OS-assigned ports, then cross-wire.
    let t0 = SocketTransport::new(0, "127.0.0.1:0", HashMap::new(), hub0.clone()).unwrap();
    let t1 = SocketTransport::new(1, "127.0.0.1:0", HashMap::new(), hub1.clone()).unwrap();
    t0.add_peer(1, &t1.local_addr().to_string());
    t1.add_peer(0, &t0.local_addr().to_string());

    let sys0 = AgentSystem::new(0, c0, t0, hub0);
    let sys1 = AgentSystem::new(1, c1, t1, hub1);
    (sys0, sys1)
}

#[test]
fn socket_transport_routes_unicast_and_broadcast() {
    let (sys0, sys1) = socket_pair();
    let g1 = spawn_recorder(&sys0, "g1");
    let t1 = spawn_recorder(&sys1, "t1");

    // Node 0 speaks first; its hello carries the roster, after which node 1
    // can route unicast replies.
    sys0.with_agent("g1", |state| {
        let mut cx = AgentCtx { sys: &sys0, state };
        cx.send(AclMessage::inform("g1", BROADCAST, atom("ad", vec![Term::Int(1)]))).unwrap();
    })
    .unwrap();

    let deadline = Instant::now() + Duration::from_secs(3);
    loop {
        sys1.step_all();
        if t1.lock().unwrap().len() == 1 {
            break;
        }
        assert!(Instant::now() < deadline, "broadcast never crossed the socket");
        std::thread::sleep(Duration::from_millis(10));
    }

    // Reply unicast across nodes; the directory was filled by the hello.
    let deadline = Instant::now() + Duration::from_secs(3);
    loop {
        let sent = sys1
            .with_agent("t1", |state| {
                let mut cx = AgentCtx { sys: &sys1, state };
                cx.send(AclMessage::request("t1", "g1", atom("fetch", vec![Term::Int(2)])))
                    .is_ok()
            })
            .unwrap();
        if sent {
            break;
        }
        assert!(Instant::now() < deadline, "directory never learned g1");
        std::thread::sleep(Duration::from_millis(10));
    }

    let deadline = Instant::now() + Duration::from_secs(3);
    loop {
        sys0.step_all();
        if !g1.lock().unwrap().is_empty() {
            break;
        }
        assert!(Instant::now() < deadline, "unicast reply never arrived");
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(g1.lock().unwrap()[0], "t1:fetch(2)");
}

#[test]
fn deregistered_agent_is_unreachable() {
    let sys = local_system();
    spawn_plain(&sys, "g1");
    spawn_plain(&sys, "t1");
    sys.remove_agent("t1").unwrap();
    let err = sys
        .with_agent("g1", |state| {
            let mut cx = AgentCtx { sys: &sys, state };
            cx.send(AclMessage::inform("g1", "t1", atom("hello", vec![])))
        })
        .unwrap();
    assert!(matches!(err, Err(AgentError::Transport(TransportError::UnknownReceiver(_)))));
}

// ---------------------------------------------------------------------------
// Perceptor soundness & completeness against an emission log
// ---------------------------------------------------------------------------

#[test]
fn perceptor_is_sound_and_complete_for_focused_events() {
    let sys = local_system();
    spawn_plain(&sys, "a1");
    sys.with_agent("a1", |state| {
        let mut cx = AgentCtx { sys: &sys, state };
        cx.execute(&Directive::create("q1", "TestQueue")).unwrap();
        cx.execute(&Directive::focus("q1")).unwrap();
    })
    .unwrap();

    let mut emitted = Vec::new();
    for i in 0..20 {
        let name = format!("evt_{}", i % 3);
        sys.container().emit_event(
            &"q1".into(),
            &name,
            EventPayload::Scalars([("i".to_string(), PropertyValue::Int(i))].into()),
            false,
        );
        emitted.push(Term::app(name, vec![Term::Int(i)]));
    }
    sys.step_agent("a1").unwrap();

    sys.with_agent("a1", |state| {
        let believed: Vec<Term> = state
            .beliefs
            .query(&atom(ontology::EVENT, vec![Term::sym("q1"), Term::var("d")]))
            .into_iter()
            .map(|b| b.get("d").cloned().unwrap())
            .collect();
        // Completeness: every emitted event became a belief within one cycle.
        for e in &emitted {
            assert!(believed.contains(e), "missing belief for {e}");
        }
        // Soundness: nothing believed that was not emitted.
        for b in &believed {
            assert!(emitted.contains(b), "spurious belief {b}");
        }
    })
    .unwrap();
}
