//! Interface endpoints: the objects behind provided interfaces and the
//! client-side markers behind required ones.

use std::fmt;
use std::sync::Arc;

use crate::collab::data::DataEnvelope;

/// Server side of a connection-driven SERVICE collaboration.
pub trait ServiceProvider: Send + Sync {
    /// Handle one request. `Err` surfaces to the caller as a provider fault.
    fn call(&self, request: DataEnvelope) -> Result<DataEnvelope, String>;
}

/// A provided DATA interface accepting pushed envelopes.
pub trait DataSink: Send + Sync {
    fn push(&self, envelope: DataEnvelope);
}

/// A provided DATA interface handing out items on demand.
///
/// `pull` is non-blocking: an empty source returns an envelope with
/// `item_count == 0`. Only sources backed by a transport (backchannel
/// adapters) ever fail.
pub trait DataSource: Send + Sync {
    fn pull(&self, max_items: u32) -> Result<DataEnvelope, String>;

    /// Number of items currently available, when knowable. Queues report
    /// their length here; it feeds queue-length advertisements.
    fn available(&self) -> u32 {
        0
    }
}

/// The implementation handle carried by every interface descriptor.
///
/// Provided SERVICE/DATA interfaces carry the actual server-side object;
/// required interfaces carry a client-side marker that is wired to a provider
/// endpoint at bind time. EVENT interfaces route through the container's
/// event dispatcher rather than a direct object.
#[derive(Clone)]
pub enum EndpointHandle {
    ServiceProvider(Arc<dyn ServiceProvider>),
    DataSink(Arc<dyn DataSink>),
    DataSource(Arc<dyn DataSource>),
    EventSource,
    ServiceClient,
    DataClient,
    EventListener,
}

impl EndpointHandle {
    pub fn is_client_side(&self) -> bool {
        matches!(
            self,
            EndpointHandle::ServiceClient | EndpointHandle::DataClient | EndpointHandle::EventListener
        )
    }

    pub fn as_source(&self) -> Option<&Arc<dyn DataSource>> {
        match self {
            EndpointHandle::DataSource(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_sink(&self) -> Option<&Arc<dyn DataSink>> {
        match self {
            EndpointHandle::DataSink(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_service(&self) -> Option<&Arc<dyn ServiceProvider>> {
        match self {
            EndpointHandle::ServiceProvider(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Debug for EndpointHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EndpointHandle::ServiceProvider(_) => "ServiceProvider",
            EndpointHandle::DataSink(_) => "DataSink",
            EndpointHandle::DataSource(_) => "DataSource",
            EndpointHandle::EventSource => "EventSource",
            EndpointHandle::ServiceClient => "ServiceClient",
            EndpointHandle::DataClient => "DataClient",
            EndpointHandle::EventListener => "EventListener",
        };
        f.write_str(name)
    }
}
