//! A telematics management server framework.
//!
//! Vehicles connect over TCP and speak a length-prefixed binary protocol.
//! Each connection gets a worker thread that decodes frames into a shared
//! inbound queue; a pool of dispatchers hands them to the protocol handler,
//! which raises events. Events bubble from the protocol's event source up to
//! the kernel root, where decision modules listen in dependency order. Modules
//! reach back through [`kernel::KernelApi`] to read fleet and map data and to
//! send messages to one vehicle or all of them.
//!
//! [`sim`] drives simulated vehicles against a running server.

pub mod clock;
pub mod comms;
pub mod datastore;
pub mod depgraph;
pub mod event;
pub mod geo;
pub mod kernel;
pub mod modules;
pub mod protocol;
pub mod sim;

pub use clock::{Clock, ManualClock, SystemClock};
pub use depgraph::CycleError;
pub use event::{EventDescriptor, EventPayload, EventSource, ListenerRegistration, PropagationTrace};
pub use kernel::{Kernel, KernelApi, KernelConfig, ModuleSpec};
pub use protocol::{Message, MessageBody, MessageType, Telemetry};
