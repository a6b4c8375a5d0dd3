use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VehicleStatus {
    LoggedIn,
    LoggedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub vehicle_id: String,
    /// `None` until the first telemetry report.
    pub position: Option<GeoPoint>,
    /// Metres per second.
    pub speed: f64,
    pub last_update: u64,
    pub status: VehicleStatus,
}

impl VehicleState {
    fn validate(&self) -> Result<(), DataError> {
        if let Some(p) = &self.position {
            if !p.is_valid() {
                return Err(DataError::Validation(format!(
                    "position ({}, {}) out of range",
                    p.lat, p.lon
                )));
            }
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(DataError::Validation(format!("speed {} must be finite and >= 0", self.speed)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Older than what the store holds; ignored.
    Stale,
}

/// Latest known state of every vehicle. Updates are whole-record
/// replacements under a lock, so readers never observe a partial update.
#[derive(Debug, Default)]
pub struct FleetStore {
    vehicles: RwLock<BTreeMap<String, VehicleState>>,
}

impl FleetStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Latest-timestamp-wins: applied iff `state.last_update` is not older
    /// than the stored one.
    pub fn update_vehicle_state(&self, state: VehicleState) -> Result<UpdateOutcome, DataError> {
        state.validate()?;
        let mut vehicles = self.vehicles.write().expect("fleet lock");
        if let Some(current) = vehicles.get(&state.vehicle_id) {
            if state.last_update < current.last_update {
                return Ok(UpdateOutcome::Stale);
            }
        }
        vehicles.insert(state.vehicle_id.clone(), state);
        Ok(UpdateOutcome::Applied)
    }

    /// Applies a telemetry report, keeping the vehicle's current status
    /// (a new vehicle starts as logged in).
    pub fn record_telemetry(
        &self,
        vehicle_id: &str,
        position: GeoPoint,
        speed: f64,
        timestamp_ms: u64,
    ) -> Result<UpdateOutcome, DataError> {
        let mut state = VehicleState {
            vehicle_id: vehicle_id.to_string(),
            position: Some(position),
            speed,
            last_update: timestamp_ms,
            status: VehicleStatus::LoggedIn,
        };
        state.validate()?;
        let mut vehicles = self.vehicles.write().expect("fleet lock");
        if let Some(current) = vehicles.get(vehicle_id) {
            if timestamp_ms < current.last_update {
                return Ok(UpdateOutcome::Stale);
            }
            state.status = current.status;
        }
        vehicles.insert(state.vehicle_id.clone(), state);
        Ok(UpdateOutcome::Applied)
    }

    /// Changes only the status. An unseen vehicle gets a position-less
    /// record with `last_update` 0: a status change is not a report, and the
    /// vehicle's own clock decides what counts as fresh.
    pub fn set_status(&self, vehicle_id: &str, status: VehicleStatus) {
        let mut vehicles = self.vehicles.write().expect("fleet lock");
        vehicles
            .entry(vehicle_id.to_string())
            .and_modify(|s| s.status = status)
            .or_insert_with(|| VehicleState {
                vehicle_id: vehicle_id.to_string(),
                position: None,
                speed: 0.0,
                last_update: 0,
                status,
            });
    }

    pub fn get_vehicle_state(&self, vehicle_id: &str) -> Option<VehicleState> {
        self.vehicles.read().expect("fleet lock").get(vehicle_id).cloned()
    }

    /// Point-in-time copy ordered by vehicle id.
    pub fn fleet_snapshot(&self) -> Vec<VehicleState> {
        self.vehicles.read().expect("fleet lock").values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vehicles.read().expect("fleet lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
