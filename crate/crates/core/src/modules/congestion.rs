//! A minimal dynamic congestion model fed by probe telemetry.
//!
//! A report slower than `slow_speed_threshold` on a road segment multiplies
//! that segment's travel time (both directions) by `penalty_factor`. A
//! segment with no slow report for more than `window_seconds` goes back to
//! its base travel time; decay is evaluated whenever telemetry arrives.

use std::collections::BTreeMap;
use std::sync::Mutex;

use super::telemetry_of;
use crate::datastore::CartographyStore;
use crate::event::{EventDescriptor, HandlerError};
use crate::geo::GeoPoint;
use crate::kernel::{DecisionModule, KernelApi, ModuleContext, ModuleError, ModuleSpec};
use crate::protocol::Telemetry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionParams {
    pub window_seconds: f64,
    pub slow_speed_threshold: f64,
    pub penalty_factor: f64,
    pub match_radius_m: f64,
}

impl Default for CongestionParams {
    fn default() -> Self {
        CongestionParams {
            window_seconds: 60.0,
            slow_speed_threshold: 3.0,
            penalty_factor: 2.0,
            match_radius_m: 100.0,
        }
    }
}

impl CongestionParams {
    pub fn from_context(ctx: &ModuleContext) -> Result<Self, ModuleError> {
        let d = Self::default();
        let p = CongestionParams {
            window_seconds: ctx.param_or("window_seconds", d.window_seconds)?,
            slow_speed_threshold: ctx.param_or("slow_speed_threshold", d.slow_speed_threshold)?,
            penalty_factor: ctx.param_or("penalty_factor", d.penalty_factor)?,
            match_radius_m: ctx.param_or("match_radius_m", d.match_radius_m)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModuleError> {
        let positive = [
            ("window_seconds", self.window_seconds),
            ("slow_speed_threshold", self.slow_speed_threshold),
            ("penalty_factor", self.penalty_factor),
            ("match_radius_m", self.match_radius_m),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("{name} must be > 0, got {v}").into());
        }
        if self.penalty_factor < 1.0 {
            return Err(format!("penalty_factor must be >= 1, got {}", self.penalty_factor).into());
        }
        Ok(())
    }
}

/// Weight changes made while handling one report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CongestionUpdate {
    pub restored: Vec<(String, String)>,
    pub penalized: Vec<(String, String)>,
}

#[derive(Debug, Default)]
pub struct CongestionModel {
    params: CongestionParams,
    api: Option<KernelApi>,
    /// Directed edge -> time of its latest slow report.
    last_slow: Mutex<BTreeMap<(String, String), u64>>,
}

impl CongestionModel {
    pub fn new(params: CongestionParams) -> Self {
        CongestionModel {
            params,
            api: None,
            last_slow: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn params(&self) -> &CongestionParams {
        &self.params
    }

    pub fn on_telemetry(&self, map: &CartographyStore, telemetry: &Telemetry, now_ms: u64) -> CongestionUpdate {
        let mut update = CongestionUpdate::default();
        let mut last_slow = self.last_slow.lock().expect("congestion lock");
        let window_ms = (self.params.window_seconds * 1000.0) as u64;

        let expired: Vec<(String, String)> = last_slow
            .iter()
            .filter(|(_, &t)| now_ms.saturating_sub(t) > window_ms)
            .map(|(e, _)| e.clone())
            .collect();
        for edge in expired {
            last_slow.remove(&edge);
            map.write(|g| {
                if let Some(w) = g.edge(&edge.0, &edge.1) {
                    let _ = g.update_edge_weight(&edge.0, &edge.1, w.base_travel_time);
                }
            });
            update.restored.push(edge);
        }

        if telemetry.speed >= self.params.slow_speed_threshold {
            return update;
        }
        let position = GeoPoint::new(telemetry.latitude, telemetry.longitude);
        let matched = map.read(|g| {
            g.nearest_segment(&position)
                .filter(|(_, d)| *d <= self.params.match_radius_m)
                .map(|((a, b), _)| (a.to_string(), b.to_string()))
        });
        let Some((a, b)) = matched else {
            log::debug!(
                "slow report at ({}, {}) is off the map; ignored",
                telemetry.latitude,
                telemetry.longitude
            );
            return update;
        };
        map.write(|g| {
            for (from, to) in [(&a, &b), (&b, &a)] {
                if let Some(w) = g.edge(from, to) {
                    let penalized = w.base_travel_time * self.params.penalty_factor;
                    if g.update_edge_weight(from, to, penalized).is_ok() {
                        last_slow.insert((from.clone(), to.clone()), now_ms);
                        update.penalized.push((from.clone(), to.clone()));
                    }
                }
            }
        });
        update
    }
}

impl DecisionModule for CongestionModel {
    fn init(&mut self, ctx: &ModuleContext) -> Result<(), ModuleError> {
        self.params = CongestionParams::from_context(ctx)?;
        self.api = Some(ctx.api.clone());
        Ok(())
    }

    fn on_event(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        let (Some(api), Some(t)) = (&self.api, telemetry_of(event)) else {
            return Ok(());
        };
        let update = self.on_telemetry(api.map(), t, event.timestamp_ms());
        if !update.penalized.is_empty() || !update.restored.is_empty() {
            log::debug!("congestion from {}: {update:?}", event.source_target());
        }
        Ok(())
    }
}

pub fn factory(_spec: &ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> {
    Ok(Box::new(CongestionModel::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::RoadGraph;
    use crate::modules::tests::TRIANGLE;

    fn map() -> CartographyStore {
        CartographyStore::new(RoadGraph::parse(TRIANGLE).unwrap())
    }

    fn at_ab_midpoint(map: &CartographyStore, speed: f64) -> Telemetry {
        let (a, b) = map.read(|g| (g.node("A").unwrap(), g.node("B").unwrap()));
        let mid = a.lerp(&b, 0.5);
        Telemetry {
            timestamp_ms: 0,
            latitude: mid.lat,
            longitude: mid.lon,
            speed,
        }
    }

    #[test]
    fn slow_report_doubles_weight() {
        let map = map();
        let model = CongestionModel::new(CongestionParams::default());
        let update = model.on_telemetry(&map, &at_ab_midpoint(&map, 1.0), 1_000);
        assert_eq!(map.edge("A", "B").unwrap().current_weight, 20.0);
        assert_eq!(map.edge("B", "A").unwrap().current_weight, 20.0);
        assert_eq!(map.edge("A", "C").unwrap().current_weight, 25.0);
        assert_eq!(update.penalized.len(), 2);
    }

    #[test]
    fn fast_report_changes_nothing() {
        let map = map();
        let model = CongestionModel::new(CongestionParams::default());
        let before = map.snapshot();
        model.on_telemetry(&map, &at_ab_midpoint(&map, 10.0), 1_000);
        assert_eq!(map.snapshot(), before);
    }

    #[test]
    fn decays_after_window() {
        let map = map();
        let model = CongestionModel::new(CongestionParams::default());
        model.on_telemetry(&map, &at_ab_midpoint(&map, 1.0), 1_000);
        // exactly at the window edge the penalty holds
        model.on_telemetry(&map, &at_ab_midpoint(&map, 10.0), 61_000);
        assert_eq!(map.edge("A", "B").unwrap().current_weight, 20.0);
        let update = model.on_telemetry(&map, &at_ab_midpoint(&map, 10.0), 62_000);
        assert_eq!(map.edge("A", "B").unwrap().current_weight, 10.0);
        assert_eq!(map.edge("B", "A").unwrap().current_weight, 10.0);
        assert_eq!(update.restored.len(), 2);
    }

    #[test]
    fn repeated_slow_reports_are_idempotent() {
        let map = map();
        let model = CongestionModel::new(CongestionParams::default());
        model.on_telemetry(&map, &at_ab_midpoint(&map, 1.0), 1_000);
        let after_first = map.snapshot();
        for t in [2_000, 3_000, 4_000] {
            model.on_telemetry(&map, &at_ab_midpoint(&map, 1.0), t);
            assert_eq!(map.snapshot(), after_first);
        }
    }

    #[test]
    fn off_map_is_ignored() {
        let map = map();
        let model = CongestionModel::new(CongestionParams::default());
        let before = map.snapshot();
        let far = Telemetry {
            timestamp_ms: 0,
            latitude: 10.0,
            longitude: 10.0,
            speed: 0.0,
        };
        model.on_telemetry(&map, &far, 1_000);
        assert_eq!(map.snapshot(), before);
    }

    #[test]
    fn params_validated() {
        let bad = CongestionParams {
            penalty_factor: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CongestionParams {
            window_seconds: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(CongestionParams::default().validate().is_ok());
    }
}
