//! Communication subsystem: TCP accept loop, one worker per vehicle
//! connection with a bounded outbound queue, and a dispatcher pool consuming
//! the unbounded inbound queue.

mod queue;
mod registry;
mod server;

use std::net::SocketAddr;

pub use queue::{BlockingFifo, GlobalQueue};
pub use registry::{BroadcastOutcome, VehicleLink, VehicleRegistry};
pub use server::{
    bind, resolve, start_server, BoundServer, ServerConfig, ServerHandle, ServerStats, ShutdownReport, DEFAULT_DISPATCHERS,
    DEFAULT_LOCAL_QUEUE_CAPACITY, DEFAULT_PORT, DEFAULT_SHUTDOWN_GRACE,
};

use crate::protocol::Message;

/// A decoded inbound message tagged with the vehicle session it arrived on.
#[derive(Debug, Clone, PartialEq)]
pub struct InboundEnvelope {
    pub vehicle_id: String,
    pub message: Message,
    pub received_at: u64,
    /// Position in the global queue, assigned on enqueue.
    pub sequence: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CommsError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SendError {
    #[error("vehicle {0} is not logged in")]
    UnknownVehicle(String),
    #[error("local queue of vehicle {0} is full")]
    QueueFull(String),
}
