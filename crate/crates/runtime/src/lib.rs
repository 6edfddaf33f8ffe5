//! A hybrid agent/component runtime.
//!
//! The crate is split into four layers:
//!
//! - [`container`] — a dynamic component container with recursive contexts,
//!   lifecycle control, interface brokering and explicit/implicit binding.
//! - [`collab`] — the three inter-component collaboration styles: service
//!   calls, push/pull data transfer and prioritized consumable event dispatch.
//! - [`backchannel`] — interface adapters that stretch a local pull
//!   collaboration across a TCP connection, bypassing agent messaging.
//! - [`agent`] — a minimal intentional layer: belief store, plan execution,
//!   perceptors/actuators over the container, and an ACL message transport.

pub mod agent;
pub mod backchannel;
pub mod collab;
pub mod container;
pub mod property;

pub use container::Container;
pub use property::{PropertyMap, PropertyValue};
