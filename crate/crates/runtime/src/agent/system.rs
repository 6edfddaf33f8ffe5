//! Agent records, the deliberation cycle, actuators and the perceptor.
//!
//! Each agent holds a belief store, a mailbox, commitments and pending plans.
//! A deliberation cycle runs in a fixed order: perceive (focused component
//! events become beliefs), deliver mailbox, evaluate commitment triggers,
//! advance pending plans, then the agent's behavior hook. Agents interact
//! with the component layer only through the actuator directives and the
//! perceptor; cross-agent interaction is message passing.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};

use super::acl::{AclMessage, MessageContent, Performative};
use super::beliefs::BeliefStore;
use super::plan::{Directive, Plan, PlanContext, PlanExec, PlanStatus};
use super::term::{atom, BeliefAtom, Bindings, Term};
use super::transport::{MailboxHub, MessageTransport};
use super::AgentError;
use crate::collab::events::{Event, EventPayload, EventTarget, HandlerId, HandlerOrigin, HandlerOutcome};
use crate::container::{
    event_names, ComponentId, ContextId, Direction, IfaceRef, LifecycleTarget,
};
use crate::property::PropertyValue;
use crate::Container;

/// The belief ontology bridged by the perceptor and the actuators.
pub mod ontology {
    pub const ACTIVATED: &str = "activated";
    pub const DEACTIVATED: &str = "deactivated";
    pub const FOCUSING_ON: &str = "focusingOn";
    pub const PROPERTY: &str = "property";
    pub const EVENT: &str = "event";
    pub const CREATED: &str = "created";
    pub const REMOVED: &str = "removed";
    pub const COMPONENT: &str = "component";
    pub const BOUND: &str = "bound";
    pub const CLIENT_INTERFACE: &str = "clientInterface";
    pub const SERVER_INTERFACE: &str = "serverInterface";
}

/// Reusable per-agent logic plugged into the deliberation cycle.
pub trait AgentBehavior: Send {
    /// Runs at the end of every deliberation cycle.
    fn on_cycle(&mut self, _cx: &mut AgentCtx<'_>) {}

    /// Handle one delivered message; return `true` when handled. Unhandled
    /// INFORM atoms are asserted as beliefs.
    fn on_message(&mut self, _cx: &mut AgentCtx<'_>, _msg: &AclMessage) -> bool {
        false
    }
}

struct Commitment {
    trigger: BeliefAtom,
    plan: Plan,
    fired: bool,
}

/// Outcome of a settled plan.
#[derive(Debug, Clone)]
pub struct PlanReport {
    pub plan: u64,
    pub status: PlanStatus,
}

struct FocusEntry {
    handler: HandlerId,
}

pub struct AgentState {
    pub id: String,
    pub node: u32,
    pub beliefs: BeliefStore,
    context: ContextId,
    commitments: Vec<Commitment>,
    plans: Vec<(u64, PlanExec)>,
    reports: Vec<PlanReport>,
    focused: HashMap<ComponentId, FocusEntry>,
    percepts: Arc<Mutex<Vec<Event>>>,
    behavior: Option<Box<dyn AgentBehavior>>,
    sent_count: u64,
    next_plan: u64,
    terminated: bool,
}

pub struct AgentCell {
    state: Mutex<AgentState>,
    mailbox: Arc<Mutex<VecDequeMsg>>,
}

type VecDequeMsg = std::collections::VecDeque<AclMessage>;

/// Everything an agent needs during one deliberation step: its own state and
/// the system services (container, transport).
pub struct AgentCtx<'a> {
    pub sys: &'a AgentSystem,
    pub state: &'a mut AgentState,
}

impl AgentCtx<'_> {
    pub fn agent_id(&self) -> &str {
        &self.state.id
    }

    pub fn node(&self) -> u32 {
        self.state.node
    }

    pub fn beliefs(&mut self) -> &mut BeliefStore {
        &mut self.state.beliefs
    }

    pub fn container(&self) -> &Arc<Container> {
        &self.sys.container
    }

    pub fn now_ms(&self) -> u64 {
        self.sys.now_ms()
    }

    /// Send a message from this agent, bumping its send counter.
    pub fn send(&mut self, mut msg: AclMessage) -> Result<(), AgentError> {
        msg.sender = self.state.id.clone();
        self.state.sent_count += 1;
        self.sys.transport.send(&msg).map_err(AgentError::Transport)
    }

    pub fn adopt_plan(&mut self, plan: &Plan) -> u64 {
        let id = self.state.next_plan;
        self.state.next_plan += 1;
        self.state.plans.push((id, PlanExec::new(plan)));
        id
    }

    pub fn plan_reports(&self) -> &[PlanReport] {
        &self.state.reports
    }

    /// Mark this agent for removal once the current cycle completes.
    pub fn request_termination(&mut self) {
        self.state.terminated = true;
    }

    /// Execute one actuator directive against the container, updating the
    /// ontology beliefs on success. Failures assert nothing.
    pub fn execute(&mut self, directive: &Directive) -> Result<(), AgentError> {
        execute_directive(self, directive)
    }
}

impl PlanContext for AgentCtx<'_> {
    fn execute(&mut self, directive: &Directive) -> Result<(), String> {
        execute_directive(self, directive).map_err(|e| e.to_string())
    }

    fn query_first(&self, query: &BeliefAtom) -> Option<Bindings> {
        self.state.beliefs.first_match(query)
    }
}

type AppAction =
    dyn Fn(&AgentSystem, &mut AgentState, &[Term]) -> Result<Vec<BeliefAtom>, String> + Send + Sync;

/// One node's population of agents plus their shared services.
pub struct AgentSystem {
    node: u32,
    container: Arc<Container>,
    transport: Arc<dyn MessageTransport>,
    hub: Arc<MailboxHub>,
    agents: RwLock<BTreeMap<String, Arc<AgentCell>>>,
    actions: RwLock<HashMap<String, Arc<AppAction>>>,
    started: Instant,
}

/// Declarative description of an agent to spawn.
pub struct AgentSpec {
    pub id: String,
    pub behavior: Option<Box<dyn AgentBehavior>>,
    /// Plans adopted at start (the paper's always-true commitments).
    pub initial_plans: Vec<Plan>,
    /// (trigger, plan) pairs; each fires once, when its trigger first holds.
    pub commitments: Vec<(BeliefAtom, Plan)>,
    pub context: Option<ContextId>,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            behavior: None,
            initial_plans: Vec::new(),
            commitments: Vec::new(),
            context: None,
        }
    }

    pub fn with_behavior(mut self, b: Box<dyn AgentBehavior>) -> Self {
        self.behavior = Some(b);
        self
    }

    pub fn with_plan(mut self, plan: Plan) -> Self {
        self.initial_plans.push(plan);
        self
    }

    pub fn with_commitment(mut self, trigger: BeliefAtom, plan: Plan) -> Self {
        self.commitments.push((trigger, plan));
        self
    }
}

impl AgentSystem {
    pub fn new(
        node: u32,
        container: Arc<Container>,
        transport: Arc<dyn MessageTransport>,
        hub: Arc<MailboxHub>,
    ) -> Arc<Self> {
        Arc::new(Self {
            node,
            container,
            transport,
            hub,
            agents: RwLock::new(BTreeMap::new()),
            actions: RwLock::new(HashMap::new()),
            started: Instant::now(),
        })
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    pub fn container(&self) -> &Arc<Container> {
        &self.container
    }

    pub fn transport(&self) -> &Arc<dyn MessageTransport> {
        &self.transport
    }

    pub fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    /// Register an application action available to every agent's directives.
    pub fn register_action<F>(&self, name: &str, action: F)
    where
        F: Fn(&AgentSystem, &mut AgentState, &[Term]) -> Result<Vec<BeliefAtom>, String>
            + Send
            + Sync
            + 'static,
    {
        self.actions.write().insert(name.to_string(), Arc::new(action));
    }

    pub fn spawn(&self, spec: AgentSpec) -> Result<(), AgentError> {
        let mut agents = self.agents.write();
        if agents.contains_key(&spec.id) {
            return Err(AgentError::DuplicateAgent(spec.id));
        }
        let mailbox = self.hub.register(&spec.id);
        self.transport.register_agent(&spec.id);
        let mut state = AgentState {
            id: spec.id.clone(),
            node: self.node,
            beliefs: BeliefStore::new(),
            context: spec.context.unwrap_or_else(|| self.container.root()),
            commitments: spec
                .commitments
                .into_iter()
                .map(|(trigger, plan)| Commitment { trigger, plan, fired: false })
                .collect(),
            plans: Vec::new(),
            reports: Vec::new(),
            focused: HashMap::new(),
            percepts: Arc::new(Mutex::new(Vec::new())),
            behavior: spec.behavior,
            sent_count: 0,
            next_plan: 1,
            terminated: false,
        };
        for plan in &spec.initial_plans {
            let id = state.next_plan;
            state.next_plan += 1;
            state.plans.push((id, PlanExec::new(plan)));
        }
        agents.insert(spec.id, Arc::new(AgentCell { state: Mutex::new(state), mailbox }));
        Ok(())
    }

    pub fn remove_agent(&self, id: &str) -> Result<(), AgentError> {
        let cell = self
            .agents
            .write()
            .remove(id)
            .ok_or_else(|| AgentError::UnknownAgent(id.to_string()))?;
        {
            let state = cell.state.lock();
            for entry in state.focused.values() {
                self.container.events().deregister(entry.handler);
            }
        }
        self.transport.deregister_agent(id);
        Ok(())
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.read().keys().cloned().collect()
    }

    pub fn has_agent(&self, id: &str) -> bool {
        self.agents.read().contains_key(id)
    }

    /// Inspect an agent's state under its lock.
    pub fn with_agent<T>(&self, id: &str, f: impl FnOnce(&mut AgentState) -> T) -> Result<T, AgentError> {
        let cell = self
            .agents
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| AgentError::UnknownAgent(id.to_string()))?;
        let mut state = cell.state.lock();
        Ok(f(&mut state))
    }

    /// Queue a message without going through a transport (test support).
    pub fn inject_message(&self, msg: AclMessage) -> Result<(), AgentError> {
        self.hub.deliver(msg).map_err(AgentError::Transport)
    }

    /// Run one deliberation cycle for `id`.
    pub fn step_agent(&self, id: &str) -> Result<(), AgentError> {
        let cell = self
            .agents
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| AgentError::UnknownAgent(id.to_string()))?;

        let terminated = {
            let mut guard = cell.state.lock();
            let state: &mut AgentState = &mut guard;

            // 1. Perceive: focused component activity becomes beliefs.
            let events: Vec<Event> = std::mem::take(&mut *state.percepts.lock());
            for event in events {
                self.percept_to_beliefs(state, &event);
            }

            // 2. Deliver mailbox, FIFO.
            let msgs: Vec<AclMessage> = cell.mailbox.lock().drain(..).collect();
            for msg in msgs {
                let mut behavior = state.behavior.take();
                let handled = match behavior.as_mut() {
                    Some(b) => {
                        let mut cx = AgentCtx { sys: self, state: &mut *state };
                        b.on_message(&mut cx, &msg)
                    }
                    None => false,
                };
                state.behavior = behavior;
                if !handled {
                    if let (Performative::Inform, MessageContent::Atom(a)) =
                        (msg.performative, &msg.content)
                    {
                        let _ = state.beliefs.assert_fact(a.clone());
                    }
                }
            }

            // 3. Commitment triggers.
            let mut due: Vec<Plan> = Vec::new();
            for i in 0..state.commitments.len() {
                if state.commitments[i].fired {
                    continue;
                }
                let trigger = state.commitments[i].trigger.clone();
                if let Some(bindings) = state.beliefs.first_match(&trigger) {
                    state.commitments[i].fired = true;
                    due.push(state.commitments[i].plan.substitute(&bindings));
                }
            }
            for plan in due {
                let id = state.next_plan;
                state.next_plan += 1;
                state.plans.push((id, PlanExec::new(&plan)));
            }

            // 4. Advance pending plans, one step each.
            let mut plans = std::mem::take(&mut state.plans);
            for (plan_id, exec) in plans.iter_mut() {
                let status = {
                    let mut cx = AgentCtx { sys: self, state: &mut *state };
                    exec.step(&mut cx)
                };
                if status.settled() {
                    state.reports.push(PlanReport { plan: *plan_id, status });
                }
            }
            plans.retain(|(_, e)| !e.status().settled());
            // Plans adopted during this step land in state.plans; keep both.
            plans.extend(state.plans.drain(..));
            state.plans = plans;

            // 5. Behavior hook.
            let mut behavior = state.behavior.take();
            if let Some(b) = behavior.as_mut() {
                let mut cx = AgentCtx { sys: self, state: &mut *state };
                b.on_cycle(&mut cx);
            }
            state.behavior = behavior;

            state.terminated
        };

        if terminated {
            self.remove_agent(id)?;
        }
        Ok(())
    }

    /// One cycle for every agent, in id order.
    pub fn step_all(&self) {
        for id in self.agent_ids() {
            if let Err(e) = self.step_agent(&id) {
                log::warn!("cycle for agent {id} failed: {e}");
            }
        }
    }

    /// Adopt a plan and drive this agent's cycles until the plan settles or
    /// `max_cycles` elapse.
    pub fn run_plan(&self, id: &str, plan: &Plan, max_cycles: usize) -> Result<PlanStatus, AgentError> {
        let plan_id = self.with_agent(id, |state| {
            let pid = state.next_plan;
            state.next_plan += 1;
            state.plans.push((pid, PlanExec::new(plan)));
            pid
        })?;
        for _ in 0..max_cycles {
            self.step_agent(id)?;
            let status = self.plan_status(id, plan_id)?;
            if let Some(status) = status {
                if status.settled() {
                    return Ok(status);
                }
            }
        }
        Ok(self.plan_status(id, plan_id)?.unwrap_or(PlanStatus::Running))
    }

    fn plan_status(&self, id: &str, plan_id: u64) -> Result<Option<PlanStatus>, AgentError> {
        self.with_agent(id, |state| {
            if let Some((_, exec)) = state.plans.iter().find(|(pid, _)| *pid == plan_id) {
                return Some(exec.status());
            }
            state
                .reports
                .iter()
                .find(|r| r.plan == plan_id)
                .map(|r| r.status.clone())
        })
    }

    /// Spawn a background thread stepping all agents every `period`.
    pub fn start_cycles(self: &Arc<Self>, period: Duration) -> CycleDriver {
        let stop = Arc::new(AtomicBool::new(false));
        let sys = self.clone();
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name(format!("agent-cycles-{}", self.node))
            .spawn(move || {
                while !flag.load(Ordering::SeqCst) {
                    sys.step_all();
                    std::thread::sleep(period);
                }
            })
            .expect("spawn agent cycle driver");
        CycleDriver { stop, handle: Some(handle) }
    }

    // ---- perceptor -------------------------------------------------------

    fn percept_to_beliefs(&self, state: &mut AgentState, event: &Event) {
        let c = Term::sym(event.source.to_string());
        let beliefs = &mut state.beliefs;
        match event.name.as_str() {
            event_names::PROPERTY_CHANGED => {
                let (Some(key), Some(value)) =
                    (event.payload.scalar("key"), event.payload.scalar("value"))
                else {
                    return;
                };
                let key = Term::sym(key.to_string());
                beliefs.retract(&atom(
                    ontology::PROPERTY,
                    vec![c.clone(), key.clone(), Term::var("v")],
                ));
                let _ = beliefs.assert_fact(atom(
                    ontology::PROPERTY,
                    vec![c, key, Term::from(value)],
                ));
            }
            event_names::COMPONENT_ACTIVATED => {
                let _ = beliefs
                    .assert_exclusive(atom(ontology::ACTIVATED, vec![c]), ontology::DEACTIVATED);
            }
            event_names::COMPONENT_DEACTIVATED => {
                let _ = beliefs
                    .assert_exclusive(atom(ontology::DEACTIVATED, vec![c]), ontology::ACTIVATED);
            }
            event_names::COMPONENT_LOADED => {
                let _ = beliefs
                    .assert_exclusive(atom(ontology::CREATED, vec![c.clone()]), ontology::REMOVED);
                let _ = beliefs.assert_fact(atom(ontology::COMPONENT, vec![c]));
            }
            event_names::COMPONENT_REMOVED => {
                let _ = beliefs
                    .assert_exclusive(atom(ontology::REMOVED, vec![c.clone()]), ontology::CREATED);
                for p in [ontology::COMPONENT, ontology::ACTIVATED, ontology::DEACTIVATED] {
                    beliefs.retract(&atom(p, vec![c.clone()]));
                }
                beliefs.retract(&atom(ontology::FOCUSING_ON, vec![c.clone(), Term::var("t")]));
                if let Some(entry) = state.focused.remove(&event.source) {
                    self.container.events().deregister(entry.handler);
                }
            }
            event_names::BOUND | event_names::UNBOUND => {
                let (Some(ci), Some(si)) = (
                    event.payload.scalar("client_interface"),
                    event.payload.scalar("server_interface"),
                ) else {
                    return;
                };
                let fact = atom(
                    ontology::BOUND,
                    vec![Term::sym(ci.to_string()), Term::sym(si.to_string())],
                );
                if event.name == event_names::BOUND {
                    let _ = beliefs.assert_fact(fact);
                } else {
                    beliefs.retract(&fact);
                }
            }
            name => {
                let details = match &event.payload {
                    EventPayload::Scalars(map) => {
                        Term::app(name, map.values().map(Term::from).collect())
                    }
                    _ => Term::app(name, vec![]),
                };
                let _ = beliefs.assert_fact(atom(ontology::EVENT, vec![c, details]));
            }
        }
    }
}

/// Stops the cycle thread when dropped.
pub struct CycleDriver {
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl CycleDriver {
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

impl Drop for CycleDriver {
    fn drop(&mut self) {
        self.stop();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

// ---------------------------------------------------------------------------
// Actuators
// ---------------------------------------------------------------------------

fn ground_name(term: &Term) -> Result<String, AgentError> {
    term.as_name()
        .map(str::to_string)
        .ok_or_else(|| AgentError::ActionFailed(format!("expected identifier, got `{term}`")))
}

fn term_to_value(term: &Term) -> Result<PropertyValue, AgentError> {
    match term {
        Term::Sym(s) | Term::Str(s) => Ok(PropertyValue::Str(s.clone())),
        Term::Int(i) => Ok(PropertyValue::Int(*i)),
        Term::Float(x) => Ok(PropertyValue::Float(*x)),
        Term::Bool(b) => Ok(PropertyValue::Bool(*b)),
        other => Err(AgentError::ActionFailed(format!("`{other}` is not a scalar"))),
    }
}

fn execute_directive(cx: &mut AgentCtx<'_>, directive: &Directive) -> Result<(), AgentError> {
    let container = cx.sys.container.clone();
    let fail = |e: String| AgentError::ActionFailed(format!("{}: {e}", directive.describe()));

    match directive {
        Directive::Create { id, type_id } => {
            let id = ground_name(id)?;
            let type_id = ground_name(type_id)?;
            container
                .load_component(&cx.state.context, &id, &type_id, Default::default())
                .map_err(|e| fail(e.to_string()))?;
            let c = Term::sym(&id);
            let _ = cx
                .state
                .beliefs
                .assert_exclusive(atom(ontology::CREATED, vec![c.clone()]), ontology::REMOVED);
            let _ = cx.state.beliefs.assert_fact(atom(ontology::COMPONENT, vec![c]));
            Ok(())
        }
        Directive::Remove { id } => {
            let id = ground_name(id)?;
            let record = container.record(&id).map_err(|e| fail(e.to_string()))?;
            container
                .set_lifecycle(&record.context, &id, LifecycleTarget::Unloaded)
                .map_err(|e| fail(e.to_string()))?;
            let c = Term::sym(&id);
            let _ = cx
                .state
                .beliefs
                .assert_exclusive(atom(ontology::REMOVED, vec![c.clone()]), ontology::CREATED);
            for p in [ontology::COMPONENT, ontology::ACTIVATED, ontology::DEACTIVATED] {
                cx.state.beliefs.retract(&atom(p, vec![c.clone()]));
            }
            cx.state.beliefs.retract(&atom(ontology::FOCUSING_ON, vec![c, Term::var("t")]));
            if let Some(entry) = cx.state.focused.remove(&ComponentId::from(id.as_str())) {
                container.events().deregister(entry.handler);
            }
            Ok(())
        }
        Directive::Bind { client, client_iface, server, server_iface } => {
            let (c, ci) = (ground_name(client)?, ground_name(client_iface)?);
            let (s, si) = (ground_name(server)?, ground_name(server_iface)?);
            container
                .bind(IfaceRef::new(c.as_str(), ci.as_str()), IfaceRef::new(s.as_str(), si.as_str()))
                .map_err(|e| fail(e.to_string()))?;
            let _ = cx
                .state
                .beliefs
                .assert_fact(atom(ontology::BOUND, vec![Term::sym(ci), Term::sym(si)]));
            Ok(())
        }
        Directive::BindImplicit { component, interface } => {
            let (c, i) = (ground_name(component)?, ground_name(interface)?);
            let binding = container
                .bind_implicit(IfaceRef::new(c.as_str(), i.as_str()))
                .map_err(|e| fail(e.to_string()))?;
            let _ = cx.state.beliefs.assert_fact(atom(
                ontology::BOUND,
                vec![Term::sym(i), Term::sym(binding.server.interface)],
            ));
            Ok(())
        }
        Directive::Configure { id, key, value } => {
            let id = ground_name(id)?;
            let key = ground_name(key)?;
            let value = term_to_value(value)?;
            container
                .configure(&id, &key, value.clone())
                .map_err(|e| fail(e.to_string()))?;
            let c = Term::sym(&id);
            let k = Term::sym(&key);
            cx.state.beliefs.retract(&atom(
                ontology::PROPERTY,
                vec![c.clone(), k.clone(), Term::var("v")],
            ));
            let _ = cx
                .state
                .beliefs
                .assert_fact(atom(ontology::PROPERTY, vec![c, k, Term::from(value)]));
            Ok(())
        }
        Directive::Activate { id } => {
            let id = ground_name(id)?;
            let record = container.record(&id).map_err(|e| fail(e.to_string()))?;
            container
                .set_lifecycle(&record.context, &id, LifecycleTarget::Active)
                .map_err(|e| fail(e.to_string()))?;
            let _ = cx.state.beliefs.assert_exclusive(
                atom(ontology::ACTIVATED, vec![Term::sym(id)]),
                ontology::DEACTIVATED,
            );
            Ok(())
        }
        Directive::Deactivate { id } => {
            let id = ground_name(id)?;
            let record = container.record(&id).map_err(|e| fail(e.to_string()))?;
            container
                .set_lifecycle(&record.context, &id, LifecycleTarget::Deactivated)
                .map_err(|e| fail(e.to_string()))?;
            let _ = cx.state.beliefs.assert_exclusive(
                atom(ontology::DEACTIVATED, vec![Term::sym(id)]),
                ontology::ACTIVATED,
            );
            Ok(())
        }
        Directive::Focus { id } => {
            let id = ground_name(id)?;
            let record = container.record(&id).map_err(|e| fail(e.to_string()))?;
            let cid = ComponentId::from(id.as_str());
            if !cx.state.focused.contains_key(&cid) {
                let percepts = cx.state.percepts.clone();
                let handler = container.events().register(
                    EventTarget::source(cid.clone()),
                    0,
                    HandlerOrigin::Agent,
                    Arc::new(move |event: &Event| {
                        percepts.lock().push(event.clone());
                        HandlerOutcome::Continue
                    }),
                );
                cx.state
                    .focused
                    .insert(cid, FocusEntry { handler });
            }
            let _ = cx.state.beliefs.assert_fact(atom(
                ontology::FOCUSING_ON,
                vec![Term::sym(id), Term::sym(record.type_id)],
            ));
            Ok(())
        }
        Directive::Lookup { id } => {
            let id = ground_name(id)?;
            let descriptors = container.describe_interfaces(&id).map_err(|e| fail(e.to_string()))?;
            let c = Term::sym(&id);
            for d in descriptors {
                let style = Term::sym(d.style.to_string());
                let class = Term::sym(d.payload_type.clone());
                let iface = Term::sym(d.name.clone());
                let fact = match d.direction {
                    Direction::Provided => atom(
                        ontology::SERVER_INTERFACE,
                        vec![c.clone(), iface, style, class],
                    ),
                    Direction::Required => {
                        let bound = !container
                            .bindings_of(&IfaceRef::new(id.as_str(), d.name.as_str()))
                            .is_empty();
                        atom(
                            ontology::CLIENT_INTERFACE,
                            vec![c.clone(), iface, style, class, Term::Bool(bound)],
                        )
                    }
                };
                let _ = cx.state.beliefs.assert_fact(fact);
            }
            Ok(())
        }
        Directive::App { name, args } => {
            let action = cx
                .sys
                .actions
                .read()
                .get(name)
                .cloned()
                .ok_or_else(|| fail(format!("unknown action `{name}`")))?;
            let facts = action(cx.sys, cx.state, args).map_err(fail)?;
            for f in facts {
                cx.state.beliefs.assert_fact(f)?;
            }
            Ok(())
        }
    }
}
