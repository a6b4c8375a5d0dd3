//! Fleet simulator: scripted vehicles that connect to a server, report
//! telemetry along waypoint routes, and record what the server sends back.

mod report;
mod scenario;
mod vehicle;

pub use report::{AssertionResult, ScenarioReport, VehicleReport};
pub use scenario::{Expectation, Kinematics, Scenario, VehicleScript};
pub use vehicle::{simulated_vehicle, VehicleRun, VehicleTranscript};

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::clock::Clock;
use crate::datastore::DataError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario line {line}: {reason}")]
    Scenario { line: usize, reason: String },
    #[error("scenario map: {0}")]
    Map(#[source] DataError),
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{} scenario assertion(s) failed: {}", .0.len(), .0.join("; "))]
    AssertionFailure(Vec<String>),
}

/// Default real-time window a vehicle keeps listening after its last report.
pub const DEFAULT_LINGER: Duration = Duration::from_millis(300);

/// Runs every scripted vehicle concurrently against `server` and evaluates
/// the scenario's expectations. Connection failures abort the run; failed
/// expectations are reported, not raised (see [`ScenarioReport::ensure_passed`]).
pub fn run_scenario(scenario: &Scenario, server: SocketAddr, seed: u64, clock: Arc<dyn Clock>) -> Result<ScenarioReport, SimError> {
    let started = Instant::now();
    let handles: Vec<_> = scenario
        .vehicles
        .iter()
        .map(|script| {
            let run = VehicleRun {
                script: script.clone(),
                kinematics: scenario.kinematics(script),
                duration_ms: scenario.duration_ms,
                seed,
                linger: DEFAULT_LINGER,
            };
            let clock = Arc::clone(&clock);
            thread::Builder::new()
                .name(format!("sim-{}", script.vehicle_id))
                .spawn(move || simulated_vehicle(&run, server, clock))
                .map_err(|e| SimError::Io(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut transcripts = Vec::with_capacity(handles.len());
    let mut first_error = None;
    for h in handles {
        match h.join() {
            Ok(Ok(t)) => transcripts.push(t),
            Ok(Err(e)) => {
                first_error.get_or_insert(e);
            }
            Err(_) => {
                first_error.get_or_insert(SimError::Io("vehicle thread panicked".into()));
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(ScenarioReport::evaluate(scenario, &transcripts, started.elapsed()))
}
