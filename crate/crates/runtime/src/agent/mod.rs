//! The intentional layer: beliefs, plans, actuators, perceptor and ACL
//! messaging.

pub mod acl;
pub mod beliefs;
pub mod plan;
pub mod system;
pub mod term;
pub mod transport;

pub use acl::{AclMessage, MessageContent, Performative, BROADCAST};
pub use beliefs::BeliefStore;
pub use plan::{Directive, Plan, PlanContext, PlanExec, PlanStatus};
pub use system::{ontology, AgentBehavior, AgentCtx, AgentSpec, AgentState, AgentSystem, CycleDriver};
pub use term::{atom, match_atom, BeliefAtom, Bindings, Term};
pub use transport::{
    control_request, ControlHandler, LocalTransport, MailboxHub, MessageTransport, SocketTransport,
    TransportError,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot assert non-ground atom `{0}`")]
    NonGroundAssert(String),
    #[error("action failed: {0}")]
    ActionFailed(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}` already exists")]
    DuplicateAgent(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}
