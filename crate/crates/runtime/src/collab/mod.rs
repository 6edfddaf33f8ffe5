//! Inter-component collaboration styles.
//!
//! - [`data`]: service calls and push/pull data transfer over bindings, in
//!   sync/async and unicast/multicast modes.
//! - [`events`]: prioritized dispatch of consumable events.

pub mod data;
pub mod events;

pub use data::{CollabError, DataEnvelope, DeliveryMode, Routing};
pub use events::{
    DispatchReport, Event, EventBus, EventPayload, EventTarget, HandlerId, HandlerOrigin,
    HandlerOutcome,
};
