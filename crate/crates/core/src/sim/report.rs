use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use super::scenario::{Expectation, Scenario};
use super::vehicle::VehicleTranscript;
use super::SimError;
use crate::protocol::MessageBody;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VehicleReport {
    pub vehicle_id: String,
    /// All frames written, LOGIN included.
    pub frames_sent: usize,
    pub telemetry_sent: usize,
    pub frames_received: usize,
    pub advisories: Vec<Vec<String>>,
    pub warnings: Vec<String>,
    pub disconnected_early: bool,
}

impl VehicleReport {
    fn from_transcript(t: &VehicleTranscript) -> Self {
        let mut advisories = Vec::new();
        let mut warnings = Vec::new();
        for m in &t.inbound {
            match m.body() {
                MessageBody::RouteAdvisory(nodes) => advisories.push(nodes.clone()),
                MessageBody::Warning(w) => warnings.push(w.text.clone()),
                _ => {}
            }
        }
        VehicleReport {
            vehicle_id: t.vehicle_id.clone(),
            frames_sent: t.telemetry.len() + 1,
            telemetry_sent: t.telemetry.len(),
            frames_received: t.inbound.len(),
            advisories,
            warnings,
            disconnected_early: t.disconnected_early,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AssertionResult {
    pub vehicle_id: String,
    pub expectation: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub vehicles: Vec<VehicleReport>,
    pub assertions: Vec<AssertionResult>,
    pub elapsed_ms: u64,
}

fn check(expectation: &Expectation, v: &VehicleReport) -> (bool, String) {
    match expectation {
        Expectation::MinAdvisories(n) => (v.advisories.len() >= *n, format!("{} advisories", v.advisories.len())),
        Expectation::MinWarnings(n) => (v.warnings.len() >= *n, format!("{} warnings", v.warnings.len())),
        Expectation::LastAdvisory(nodes) => match v.advisories.last() {
            Some(last) => (last == nodes, format!("last advisory {}", last.join(","))),
            None => (false, "no advisories".into()),
        },
        Expectation::Avoids(a, b) => match v.advisories.last() {
            Some(last) => (
                !last.windows(2).any(|w| &w[0] == a && &w[1] == b),
                format!("last advisory {}", last.join(",")),
            ),
            None => (false, "no advisories".into()),
        },
    }
}

impl ScenarioReport {
    pub fn evaluate(scenario: &Scenario, transcripts: &[VehicleTranscript], elapsed: Duration) -> Self {
        let vehicles: Vec<VehicleReport> = transcripts.iter().map(VehicleReport::from_transcript).collect();
        let assertions = scenario
            .expectations
            .iter()
            .map(|(id, e)| {
                let (passed, detail) = match vehicles.iter().find(|v| &v.vehicle_id == id) {
                    Some(v) => check(e, v),
                    None => (false, "vehicle did not run".into()),
                };
                AssertionResult {
                    vehicle_id: id.clone(),
                    expectation: e.to_string(),
                    passed,
                    detail,
                }
            })
            .collect();
        ScenarioReport {
            vehicles,
            assertions,
            elapsed_ms: elapsed.as_millis() as u64,
        }
    }

    pub fn vehicle(&self, id: &str) -> Option<&VehicleReport> {
        self.vehicles.iter().find(|v| v.vehicle_id == id)
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn ensure_passed(&self) -> Result<(), SimError> {
        let failed: Vec<String> = self
            .assertions
            .iter()
            .filter(|a| !a.passed)
            .map(|a| format!("{} {}: {}", a.vehicle_id, a.expectation, a.detail))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(SimError::AssertionFailure(failed))
        }
    }

    /// One JSON object per line: a record per vehicle, then per assertion.
    pub fn to_json_lines(&self) -> Vec<String> {
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| serde_json::json!({ "kind": "vehicle", "report": v }));
        let assertions = self
            .assertions
            .iter()
            .map(|a| serde_json::json!({ "kind": "assertion", "result": a }));
        vehicles.chain(assertions).map(|v| v.to_string()).collect()
    }

    pub fn write_results(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", path.display()));
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for line in self.to_json_lines() {
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vehicles {
            writeln!(
                f,
                "{}: sent {} frames, received {} ({} advisories, {} warnings){}",
                v.vehicle_id,
                v.frames_sent,
                v.frames_received,
                v.advisories.len(),
                v.warnings.len(),
                if v.disconnected_early { ", disconnected early" } else { "" }
            )?;
        }
        for a in &self.assertions {
            writeln!(
                f,
                "[{}] {} {} ({})",
                if a.passed { "PASS" } else { "FAIL" },
                a.vehicle_id,
                a.expectation,
                a.detail
            )?;
        }
        write!(f, "elapsed {} ms", self.elapsed_ms)
    }
}
