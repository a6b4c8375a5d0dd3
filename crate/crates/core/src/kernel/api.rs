use std::sync::Arc;

use crate::clock::Clock;
use crate::comms::{BroadcastOutcome, SendError, VehicleRegistry};
use crate::datastore::{CartographyStore, FleetStore};
use crate::event::EventSource;
use crate::protocol::Message;

/// The kernel surface handed to every decision module. Cloning is cheap and
/// every clone refers to the same state.
#[derive(Clone)]
pub struct KernelApi {
    inner: Arc<ApiInner>,
}

impl std::fmt::Debug for KernelApi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelApi")
            .field("logged_in", &self.inner.registry.len())
            .finish_non_exhaustive()
    }
}

struct ApiInner {
    registry: Arc<VehicleRegistry>,
    fleet: Arc<FleetStore>,
    map: Arc<CartographyStore>,
    root: Arc<EventSource>,
    protocol_source: Arc<EventSource>,
    clock: Arc<dyn Clock>,
}

impl KernelApi {
    pub fn new(
        registry: Arc<VehicleRegistry>,
        fleet: Arc<FleetStore>,
        map: Arc<CartographyStore>,
        root: Arc<EventSource>,
        protocol_source: Arc<EventSource>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        KernelApi {
            inner: Arc::new(ApiInner {
                registry,
                fleet,
                map,
                root,
                protocol_source,
                clock,
            }),
        }
    }

    /// Queues `msg` on the vehicle's local outbound queue.
    pub fn send_to_vehicle(&self, vehicle_id: &str, msg: Message) -> Result<(), SendError> {
        self.inner.registry.enqueue_outbound(vehicle_id, msg)
    }

    /// Queues `msg` for every logged-in vehicle and returns how many
    /// accepted it. Vehicles with a full queue are skipped.
    pub fn broadcast(&self, msg: &Message) -> usize {
        self.broadcast_outcome(msg).delivered
    }

    pub fn broadcast_outcome(&self, msg: &Message) -> BroadcastOutcome {
        let outcome = self.inner.registry.broadcast(msg);
        if outcome.queue_full > 0 {
            log::warn!("broadcast: {} vehicle(s) skipped with full queues", outcome.queue_full);
        }
        outcome
    }

    pub fn logged_in_vehicles(&self) -> Vec<String> {
        self.inner.registry.vehicle_ids()
    }

    pub fn registry(&self) -> &Arc<VehicleRegistry> {
        &self.inner.registry
    }

    pub fn fleet(&self) -> &FleetStore {
        &self.inner.fleet
    }

    pub fn map(&self) -> &CartographyStore {
        &self.inner.map
    }

    /// The kernel's root event source; decision modules listen here.
    pub fn root_source(&self) -> &Arc<EventSource> {
        &self.inner.root
    }

    /// The protocol component's event source, parented to the root.
    pub fn protocol_source(&self) -> &Arc<EventSource> {
        &self.inner.protocol_source
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.inner.clock
    }

    pub fn same_instance(&self, other: &KernelApi) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }
}
