//! Connection- and data-driven collaboration over bindings.
//!
//! Service invocation is a synchronous call with a guaranteed result: either
//! the provider's response or an error, never silent loss. Data transfer
//! moves `DataEnvelope`s, either pushed towards sinks (sync or async, unicast
//! or multicast) or pulled from sources.

use thiserror::Error;

use crate::container::{ComponentState, Container, ContainerError, IfaceRef};

/// A batch of logical items plus their payload type.
///
/// The payload encodes `item_count` items, each as a 4-byte big-endian length
/// followed by raw bytes. This layout is also the wire format used by the
/// backchannel (prefixed with the item count).
#[derive(Debug, Clone, PartialEq)]
pub struct DataEnvelope {
    payload: Vec<u8>,
    payload_type: String,
    item_count: u32,
}

impl DataEnvelope {
    pub fn empty(payload_type: &str) -> Self {
        Self { payload: Vec::new(), payload_type: payload_type.to_string(), item_count: 0 }
    }

    pub fn from_items<I, B>(payload_type: &str, items: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: AsRef<[u8]>,
    {
        let mut payload = Vec::new();
        let mut count = 0u32;
        for item in items {
            let bytes = item.as_ref();
            payload.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            payload.extend_from_slice(bytes);
            count += 1;
        }
        Self { payload, payload_type: payload_type.to_string(), item_count: count }
    }

    /// Rebuild an envelope from raw item-framed bytes, validating that the
    /// framing matches `item_count`.
    pub fn from_payload(payload_type: &str, item_count: u32, payload: Vec<u8>) -> Result<Self, String> {
        let env = Self { payload, payload_type: payload_type.to_string(), item_count };
        env.items()?;
        Ok(env)
    }

    pub fn payload_type(&self) -> &str {
        &self.payload_type
    }

    pub fn item_count(&self) -> u32 {
        self.item_count
    }

    pub fn is_empty(&self) -> bool {
        self.item_count == 0
    }

    pub fn payload_bytes(&self) -> &[u8] {
        &self.payload
    }

    /// Decode the framed items. Fails if the framing is inconsistent with
    /// `item_count`.
    pub fn items(&self) -> Result<Vec<&[u8]>, String> {
        let mut out = Vec::with_capacity(self.item_count as usize);
        let mut rest = self.payload.as_slice();
        for _ in 0..self.item_count {
            if rest.len() < 4 {
                return Err("truncated item length".to_string());
            }
            let (len_bytes, tail) = rest.split_at(4);
            let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
            if tail.len() < len {
                return Err("truncated item body".to_string());
            }
            let (item, tail) = tail.split_at(len);
            out.push(item);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err("trailing bytes after last item".to_string());
        }
        Ok(out)
    }

    pub fn into_items(self) -> Result<Vec<Vec<u8>>, String> {
        Ok(self.items()?.into_iter().map(|s| s.to_vec()).collect())
    }

    /// Concatenate envelopes of the same payload type.
    pub fn extend(&mut self, other: DataEnvelope) {
        debug_assert_eq!(self.payload_type, other.payload_type);
        self.payload.extend_from_slice(&other.payload);
        self.item_count += other.item_count;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryMode {
    Sync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    Unicast,
    Multicast,
}

#[derive(Debug, Error)]
pub enum CollabError {
    #[error("no binding for `{0}`")]
    NoBinding(String),
    #[error("provider `{0}` is not active")]
    ProviderInactive(String),
    #[error("provider fault: {0}")]
    ProviderFault(String),
    #[error("incompatible interfaces: {0}")]
    IncompatibleInterfaces(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

impl Container {
    /// Invoke the service bound to `client` and return its response.
    pub fn invoke_service(
        &self,
        client: &IfaceRef,
        request: DataEnvelope,
    ) -> Result<DataEnvelope, CollabError> {
        let binding = self
            .bindings_of(client)
            .into_iter()
            .next()
            .ok_or_else(|| CollabError::NoBinding(client.to_string()))?;
        let (endpoint, state) = self.resolve_endpoint(&binding.server)?;
        if state != ComponentState::Active {
            return Err(CollabError::ProviderInactive(binding.server.component.to_string()));
        }
        let provider = endpoint
            .as_service()
            .ok_or_else(|| {
                CollabError::IncompatibleInterfaces(format!("`{}` is not a service", binding.server))
            })?
            .clone();
        provider.call(request).map_err(CollabError::ProviderFault)
    }

    /// Pull up to `max_items` items through the binding of `client`.
    /// Non-blocking: an empty source yields an empty envelope.
    pub fn pull_data(&self, client: &IfaceRef, max_items: u32) -> Result<DataEnvelope, CollabError> {
        let binding = self
            .bindings_of(client)
            .into_iter()
            .next()
            .ok_or_else(|| CollabError::NoBinding(client.to_string()))?;
        self.pull_from(&binding.server, max_items)
    }

    /// Pull directly from a provided interface. The agent layer uses this to
    /// inspect and drain sources it manages without holding a binding.
    pub fn pull_from(&self, provider: &IfaceRef, max_items: u32) -> Result<DataEnvelope, CollabError> {
        let (endpoint, state) = self.resolve_endpoint(provider)?;
        if state != ComponentState::Active {
            return Err(CollabError::ProviderInactive(provider.component.to_string()));
        }
        let source = endpoint
            .as_source()
            .ok_or_else(|| {
                CollabError::IncompatibleInterfaces(format!("`{provider}` is not pull-capable"))
            })?
            .clone();
        source.pull(max_items).map_err(CollabError::ProviderFault)
    }

    /// Push an envelope through the binding(s) of `client`.
    ///
    /// UNICAST delivers to the single bound provider, MULTICAST to every
    /// bound provider. SYNC returns after delivery; ASYNC returns after
    /// enqueueing, and delivery failures surface as `delivery_failed` events.
    pub fn push_data(
        &self,
        client: &IfaceRef,
        envelope: DataEnvelope,
        mode: DeliveryMode,
        routing: Routing,
    ) -> Result<(), CollabError> {
        match mode {
            DeliveryMode::Sync => self.push_now(client, envelope, routing),
            DeliveryMode::Async => {
                // Validate that a binding exists before enqueueing so the
                // caller still gets NoBinding synchronously.
                if self.bindings_of(client).is_empty() {
                    return Err(CollabError::NoBinding(client.to_string()));
                }
                self.enqueue_async(client.clone(), envelope, routing == Routing::Multicast);
                Ok(())
            }
        }
    }

    /// Push directly to a provided sink interface (agent-layer feeding).
    pub fn push_to(&self, provider: &IfaceRef, envelope: DataEnvelope) -> Result<(), CollabError> {
        let (endpoint, state) = self.resolve_endpoint(provider)?;
        if state != ComponentState::Active {
            return Err(CollabError::ProviderInactive(provider.component.to_string()));
        }
        let sink = endpoint
            .as_sink()
            .ok_or_else(|| {
                CollabError::IncompatibleInterfaces(format!("`{provider}` is not push-capable"))
            })?
            .clone();
        sink.push(envelope);
        Ok(())
    }

    pub(crate) fn push_now(
        &self,
        client: &IfaceRef,
        envelope: DataEnvelope,
        routing: Routing,
    ) -> Result<(), CollabError> {
        let bindings = self.bindings_of(client);
        if bindings.is_empty() {
            return Err(CollabError::NoBinding(client.to_string()));
        }
        let targets: Vec<_> = match routing {
            Routing::Unicast => bindings.into_iter().take(1).collect(),
            Routing::Multicast => bindings,
        };

        // Resolve and validate every target before delivering to any of them.
        let mut sinks: Vec<std::sync::Arc<dyn crate::container::DataSink>> =
            Vec::with_capacity(targets.len());
        for b in &targets {
            let (endpoint, state) = self.resolve_endpoint(&b.server)?;
            if state != ComponentState::Active {
                return Err(CollabError::ProviderInactive(b.server.component.to_string()));
            }
            let sink = endpoint
                .as_sink()
                .ok_or_else(|| {
                    CollabError::IncompatibleInterfaces(format!("`{}` is not push-capable", b.server))
                })?
                .clone();
            sinks.push(sink);
        }
        let last_sink = sinks.pop().expect("targets checked non-empty");
        for sink in &sinks {
            sink.push(envelope.clone());
        }
        last_sink.push(envelope);
        Ok(())
    }
}
