//! Sends each vehicle the current best route to its assigned destination,
//! only when it differs from the last advice that vehicle got. Declared
//! after the congestion model so it sees weights updated by the same event.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use super::telemetry_of;
use crate::event::{EventDescriptor, HandlerError, VEHICLE_LOGGED_IN, VEHICLE_LOGGED_OUT};
use crate::geo::GeoPoint;
use crate::kernel::{DecisionModule, KernelApi, ModuleContext, ModuleError, ModuleSpec};
use crate::protocol::Message;

pub const DESTINATION_PREFIX: &str = "destination.";
pub const UNREACHABLE_SEVERITY: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advice {
    Route(Vec<String>),
    Unreachable { from: String, to: String },
}

#[derive(Default)]
pub struct RouteAdvisor {
    destinations: BTreeMap<String, String>,
    api: Option<KernelApi>,
    last_advice: Mutex<HashMap<String, Advice>>,
}

impl RouteAdvisor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn destination(&self, vehicle_id: &str) -> Option<&str> {
        self.destinations.get(vehicle_id).map(String::as_str)
    }

    pub fn last_advice(&self, vehicle_id: &str) -> Option<Advice> {
        self.last_advice.lock().expect("advice lock").get(vehicle_id).cloned()
    }

    /// Computes advice for a vehicle at `position` and sends it if it
    /// changed. Returns the advice sent, if any.
    pub fn advise(&self, api: &KernelApi, vehicle_id: &str, position: GeoPoint) -> Result<Option<Advice>, HandlerError> {
        let Some(destination) = self.destinations.get(vehicle_id) else {
            return Ok(None);
        };
        let advice = api.map().read(|g| -> Result<Option<Advice>, HandlerError> {
            let Some((start, _)) = g.nearest_node(&position) else {
                return Ok(None);
            };
            Ok(Some(match g.shortest_route(start, destination)? {
                Some(route) => Advice::Route(route.nodes),
                None => Advice::Unreachable {
                    from: start.to_string(),
                    to: destination.clone(),
                },
            }))
        })?;
        let Some(advice) = advice else {
            return Ok(None);
        };

        // held across the send so concurrent events for one vehicle cannot
        // both send the same advice
        let mut last = self.last_advice.lock().expect("advice lock");
        if last.get(vehicle_id) == Some(&advice) {
            return Ok(None);
        }
        let msg = match &advice {
            Advice::Route(nodes) => Message::route_advisory(vehicle_id, nodes.clone())?,
            Advice::Unreachable { from, to } => {
                Message::warning(vehicle_id, UNREACHABLE_SEVERITY, format!("destination {to} unreachable from {from}"))?
            }
        };
        api.send_to_vehicle(vehicle_id, msg)?;
        last.insert(vehicle_id.to_string(), advice.clone());
        Ok(Some(advice))
    }
}

impl DecisionModule for RouteAdvisor {
    fn init(&mut self, ctx: &ModuleContext) -> Result<(), ModuleError> {
        for (key, node) in &ctx.params {
            if let Some(vehicle) = key.strip_prefix(DESTINATION_PREFIX) {
                if ctx.api.map().read(|g| g.node(node).is_none()) {
                    return Err(format!("destination {node} for {vehicle} is not on the map").into());
                }
                self.destinations.insert(vehicle.to_string(), node.clone());
            }
        }
        self.api = Some(ctx.api.clone());
        Ok(())
    }

    fn on_event(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        let Some(api) = &self.api else {
            return Ok(());
        };
        match event.event_type() {
            VEHICLE_LOGGED_IN | VEHICLE_LOGGED_OUT => {
                self.last_advice.lock().expect("advice lock").remove(event.source_target());
                Ok(())
            }
            _ => match telemetry_of(event) {
                Some(t) => self
                    .advise(api, event.source_target(), GeoPoint::new(t.latitude, t.longitude))
                    .map(|_| ()),
                None => Ok(()),
            },
        }
    }
}

pub fn factory(_spec: &ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> {
    Ok(Box::new(RouteAdvisor::new()))
}
