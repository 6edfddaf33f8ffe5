//! Plan operators and resumable plan execution.
//!
//! A plan is a tree of ACT / SEQ / PAR / DO_WHEN nodes. Execution is stepped
//! once per deliberation cycle: SEQ advances at most one directive per cycle,
//! PAR advances each branch by at most one directive per cycle (logical
//! concurrency by interleaving), and DO_WHEN stays dormant until its trigger
//! query succeeds, binding the trigger's variables into its body.

use super::term::{BeliefAtom, Bindings, Term};
use crate::property::PropertyValue;

/// An actuator invocation. Arguments are terms so that plan templates can
/// carry variables bound by an enclosing DO_WHEN.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Create { id: Term, type_id: Term },
    Remove { id: Term },
    Bind { client: Term, client_iface: Term, server: Term, server_iface: Term },
    /// Bind a required interface to the first compatible provider in broker
    /// order (the implicit-binding actuator).
    BindImplicit { component: Term, interface: Term },
    Configure { id: Term, key: Term, value: Term },
    Activate { id: Term },
    Deactivate { id: Term },
    Focus { id: Term },
    Lookup { id: Term },
    /// An application-defined action dispatched by name.
    App { name: String, args: Vec<Term> },
}

impl Directive {
    pub fn create(id: &str, type_id: &str) -> Self {
        Directive::Create { id: Term::sym(id), type_id: Term::sym(type_id) }
    }

    pub fn configure(id: &str, key: &str, value: impl Into<PropertyValue>) -> Self {
        Directive::Configure {
            id: Term::sym(id),
            key: Term::sym(key),
            value: Term::from(value.into()),
        }
    }

    pub fn activate(id: &str) -> Self {
        Directive::Activate { id: Term::sym(id) }
    }

    pub fn focus(id: &str) -> Self {
        Directive::Focus { id: Term::sym(id) }
    }

    pub fn bind(client: &str, client_iface: &str, server: &str, server_iface: &str) -> Self {
        Directive::Bind {
            client: Term::sym(client),
            client_iface: Term::sym(client_iface),
            server: Term::sym(server),
            server_iface: Term::sym(server_iface),
        }
    }

    pub fn substitute(&self, b: &Bindings) -> Directive {
        let s = |t: &Term| t.apply(b);
        match self {
            Directive::Create { id, type_id } => {
                Directive::Create { id: s(id), type_id: s(type_id) }
            }
            Directive::Remove { id } => Directive::Remove { id: s(id) },
            Directive::Bind { client, client_iface, server, server_iface } => Directive::Bind {
                client: s(client),
                client_iface: s(client_iface),
                server: s(server),
                server_iface: s(server_iface),
            },
            Directive::BindImplicit { component, interface } => {
                Directive::BindImplicit { component: s(component), interface: s(interface) }
            }
            Directive::Configure { id, key, value } => {
                Directive::Configure { id: s(id), key: s(key), value: s(value) }
            }
            Directive::Activate { id } => Directive::Activate { id: s(id) },
            Directive::Deactivate { id } => Directive::Deactivate { id: s(id) },
            Directive::Focus { id } => Directive::Focus { id: s(id) },
            Directive::Lookup { id } => Directive::Lookup { id: s(id) },
            Directive::App { name, args } => {
                Directive::App { name: name.clone(), args: args.iter().map(s).collect() }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Directive::Create { id, type_id } => format!("create({id}, {type_id})"),
            Directive::Remove { id } => format!("remove({id})"),
            Directive::Bind { client, client_iface, server, server_iface } => {
                format!("bind({client}, {client_iface}, {server}, {server_iface})")
            }
            Directive::BindImplicit { component, interface } => {
                format!("bind_implicit({component}, {interface})")
            }
            Directive::Configure { id, key, value } => format!("configure({id}, {key}, {value})"),
            Directive::Activate { id } => format!("activate({id})"),
            Directive::Deactivate { id } => format!("deactivate({id})"),
            Directive::Focus { id } => format!("focus({id})"),
            Directive::Lookup { id } => format!("lookup({id})"),
            Directive::App { name, args } => {
                format!("{}({})", name, args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Act(Directive),
    Seq(Vec<Plan>),
    Par(Vec<Plan>),
    DoWhen { trigger: BeliefAtom, body: Box<Plan> },
}

impl Plan {
    pub fn act(d: Directive) -> Plan {
        Plan::Act(d)
    }

    pub fn seq(children: Vec<Plan>) -> Plan {
        Plan::Seq(children)
    }

    pub fn par(children: Vec<Plan>) -> Plan {
        Plan::Par(children)
    }

    pub fn do_when(trigger: BeliefAtom, body: Plan) -> Plan {
        Plan::DoWhen { trigger, body: Box::new(body) }
    }

    pub fn substitute(&self, b: &Bindings) -> Plan {
        match self {
            Plan::Act(d) => Plan::Act(d.substitute(b)),
            Plan::Seq(cs) => Plan::Seq(cs.iter().map(|c| c.substitute(b)).collect()),
            Plan::Par(cs) => Plan::Par(cs.iter().map(|c| c.substitute(b)).collect()),
            Plan::DoWhen { trigger, body } => Plan::DoWhen {
                trigger: trigger.apply(b),
                body: Box::new(body.substitute(b)),
            },
        }
    }
}

/// Where plan execution stands.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanStatus {
    Running,
    Done,
    /// Carries a description of the failing leaf.
    Failed(String),
}

impl PlanStatus {
    pub fn settled(&self) -> bool {
        !matches!(self, PlanStatus::Running)
    }
}

/// The environment a plan steps against: directive execution plus belief
/// queries for DO_WHEN triggers.
pub trait PlanContext {
    fn execute(&mut self, directive: &Directive) -> Result<(), String>;
    fn query_first(&self, query: &BeliefAtom) -> Option<Bindings>;
}

#[derive(Debug)]
enum ExecNode {
    Act { directive: Directive, result: Option<Result<(), String>> },
    Seq { children: Vec<ExecNode>, index: usize },
    Par { children: Vec<ExecNode> },
    DoWhen { trigger: BeliefAtom, body: Plan, started: Option<Box<ExecNode>> },
}

impl ExecNode {
    fn from_plan(plan: &Plan) -> ExecNode {
        match plan {
            Plan::Act(d) => ExecNode::Act { directive: d.clone(), result: None },
            Plan::Seq(cs) => {
                ExecNode::Seq { children: cs.iter().map(ExecNode::from_plan).collect(), index: 0 }
            }
            Plan::Par(cs) => ExecNode::Par { children: cs.iter().map(ExecNode::from_plan).collect() },
            Plan::DoWhen { trigger, body } => ExecNode::DoWhen {
                trigger: trigger.clone(),
                body: (**body).clone(),
                started: None,
            },
        }
    }

    fn status(&self) -> PlanStatus {
        match self {
            ExecNode::Act { directive, result } => match result {
                None => PlanStatus::Running,
                Some(Ok(())) => PlanStatus::Done,
                Some(Err(e)) => PlanStatus::Failed(format!("{}: {e}", directive.describe())),
            },
            ExecNode::Seq { children, index } => {
                if let Some(f) = children.iter().find_map(|c| match c.status() {
                    PlanStatus::Failed(e) => Some(e),
                    _ => None,
                }) {
                    PlanStatus::Failed(f)
                } else if *index >= children.len() {
                    PlanStatus::Done
                } else {
                    PlanStatus::Running
                }
            }
            ExecNode::Par { children } => {
                if children.iter().any(|c| !c.status().settled()) {
                    PlanStatus::Running
                } else if let Some(f) = children.iter().find_map(|c| match c.status() {
                    PlanStatus::Failed(e) => Some(e),
                    _ => None,
                }) {
                    PlanStatus::Failed(f)
                } else {
                    PlanStatus::Done
                }
            }
            ExecNode::DoWhen { started, .. } => match started {
                Some(inner) => inner.status(),
                None => PlanStatus::Running,
            },
        }
    }

    /// Advance by at most one directive per parallel branch. Returns whether
    /// any directive ran this step.
    fn step(&mut self, cx: &mut dyn PlanContext) -> bool {
        match self {
            ExecNode::Act { directive, result } => {
                if result.is_some() {
                    return false;
                }
                *result = Some(cx.execute(directive));
                true
            }
            ExecNode::Seq { children, index } => {
                // Advance through already-settled children without spending
                // the cycle on them; run at most one directive.
                while *index < children.len() {
                    let child = &mut children[*index];
                    match child.status() {
                        PlanStatus::Done => {
                            *index += 1;
                            continue;
                        }
                        PlanStatus::Failed(_) => return false,
                        PlanStatus::Running => {
                            let progressed = child.step(cx);
                            match child.status() {
                                PlanStatus::Done if !progressed => {
                                    // e.g. an empty PAR: settle and keep going.
                                    *index += 1;
                                    continue;
                                }
                                PlanStatus::Done => {
                                    *index += 1;
                                    return true;
                                }
                                PlanStatus::Failed(_) => return progressed,
                                PlanStatus::Running => return progressed,
                            }
                        }
                    }
                }
                false
            }
            ExecNode::Par { children } => {
                let mut progressed = false;
                for child in children.iter_mut() {
                    if !child.status().settled() {
                        progressed |= child.step(cx);
                    }
                }
                progressed
            }
            ExecNode::DoWhen { trigger, body, started } => {
                if let Some(inner) = started {
                    return inner.step(cx);
                }
                match cx.query_first(trigger) {
                    Some(bindings) => {
                        let mut inner = ExecNode::from_plan(&body.substitute(&bindings));
                        let progressed = inner.step(cx);
                        *started = Some(Box::new(inner));
                        progressed
                    }
                    None => false,
                }
            }
        }
    }
}

/// A plan instance being executed across deliberation cycles.
#[derive(Debug)]
pub struct PlanExec {
    root: ExecNode,
}

impl PlanExec {
    pub fn new(plan: &Plan) -> Self {
        Self { root: ExecNode::from_plan(plan) }
    }

    pub fn status(&self) -> PlanStatus {
        self.root.status()
    }

    /// One deliberation-cycle step. Returns the status afterwards.
    pub fn step(&mut self, cx: &mut dyn PlanContext) -> PlanStatus {
        if !self.root.status().settled() {
            self.root.step(cx);
        }
        self.root.status()
    }
}
