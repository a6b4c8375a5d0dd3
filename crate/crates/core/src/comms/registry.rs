use std::collections::BTreeMap;
use std::net::{Shutdown, TcpStream};
use std::sync::RwLock;

use crossbeam_channel::{Receiver, Sender, TrySendError};

use super::SendError;
use crate::protocol::Message;

/// Outbound side of one logged-in vehicle: the bounded local queue plus the
/// socket, kept so the connection can be torn down from outside the worker.
#[derive(Debug)]
pub struct VehicleLink {
    conn_id: u64,
    sender: Sender<Message>,
    stream: Option<TcpStream>,
}

impl VehicleLink {
    /// A link and the receiving end of its local queue.
    pub fn new(conn_id: u64, capacity: usize, stream: Option<TcpStream>) -> (Self, Receiver<Message>) {
        let (sender, receiver) = crossbeam_channel::bounded(capacity.max(1));
        (
            VehicleLink {
                conn_id,
                sender,
                stream,
            },
            receiver,
        )
    }

    pub fn conn_id(&self) -> u64 {
        self.conn_id
    }

    pub fn close(&self) {
        if let Some(stream) = &self.stream {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }

    fn enqueue(&self, msg: Message) -> Result<(), TrySendError<Message>> {
        self.sender.try_send(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BroadcastOutcome {
    pub delivered: usize,
    pub queue_full: usize,
}

/// Logged-in vehicles keyed by id. At most one link per vehicle id.
#[derive(Debug)]
pub struct VehicleRegistry {
    links: RwLock<BTreeMap<String, VehicleLink>>,
    local_queue_capacity: usize,
}

impl VehicleRegistry {
    pub fn new(local_queue_capacity: usize) -> Self {
        VehicleRegistry {
            links: RwLock::new(BTreeMap::new()),
            local_queue_capacity: local_queue_capacity.max(1),
        }
    }

    pub fn local_queue_capacity(&self) -> usize {
        self.local_queue_capacity
    }

    /// Registers `link` under `vehicle_id`, returning the link it superseded.
    pub fn login(&self, vehicle_id: &str, link: VehicleLink) -> Option<VehicleLink> {
        self.links.write().expect("registry lock").insert(vehicle_id.to_string(), link)
    }

    /// Removes the vehicle only if it is still bound to `conn_id`.
    pub fn logout(&self, vehicle_id: &str, conn_id: u64) -> bool {
        let mut links = self.links.write().expect("registry lock");
        match links.get(vehicle_id) {
            Some(link) if link.conn_id == conn_id => {
                links.remove(vehicle_id);
                true
            }
            _ => false,
        }
    }

    pub fn enqueue_outbound(&self, vehicle_id: &str, msg: Message) -> Result<(), SendError> {
        let links = self.links.read().expect("registry lock");
        let link = links
            .get(vehicle_id)
            .ok_or_else(|| SendError::UnknownVehicle(vehicle_id.to_string()))?;
        link.enqueue(msg).map_err(|e| match e {
            TrySendError::Full(_) => SendError::QueueFull(vehicle_id.to_string()),
            // the worker is already tearing down
            TrySendError::Disconnected(_) => SendError::UnknownVehicle(vehicle_id.to_string()),
        })
    }

    pub fn broadcast(&self, msg: &Message) -> BroadcastOutcome {
        let links = self.links.read().expect("registry lock");
        let mut outcome = BroadcastOutcome::default();
        for (id, link) in links.iter() {
            match link.enqueue(msg.clone()) {
                Ok(()) => outcome.delivered += 1,
                Err(TrySendError::Full(_)) => {
                    log::warn!("broadcast skipped {id}: local queue full");
                    outcome.queue_full += 1;
                }
                Err(TrySendError::Disconnected(_)) => {}
            }
        }
        outcome
    }

    pub fn contains(&self, vehicle_id: &str) -> bool {
        self.links.read().expect("registry lock").contains_key(vehicle_id)
    }

    pub fn vehicle_ids(&self) -> Vec<String> {
        self.links.read().expect("registry lock").keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.links.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every link, closing its connection.
    pub fn close_all(&self) {
        let links = std::mem::take(&mut *self.links.write().expect("registry lock"));
        for link in links.values() {
            link.close();
        }
    }
}
