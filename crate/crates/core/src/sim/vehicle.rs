use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Kinematics, VehicleScript};
use super::SimError;
use crate::clock::Clock;
use crate::geo::GeoPoint;
use crate::protocol::{marshal_frame, unmarshal_frame, Message, Telemetry};

const METRES_PER_DEGREE: f64 = 111_195.0;

/// Everything one simulated vehicle sent and received.
#[derive(Debug, Clone, Default)]
pub struct VehicleTranscript {
    pub vehicle_id: String,
    /// Exact bytes written to the socket, LOGIN frame included.
    pub outbound: Vec<u8>,
    pub telemetry: Vec<Telemetry>,
    pub inbound: Vec<Message>,
    pub disconnected_early: bool,
}

#[derive(Debug, Clone)]
pub struct VehicleRun {
    pub script: VehicleScript,
    pub kinematics: Kinematics,
    pub duration_ms: u64,
    pub seed: u64,
    /// Real time to keep reading after the last report before hanging up.
    pub linger: Duration,
}

impl VehicleRun {
    fn rng(&self) -> ChaCha8Rng {
        let mut h = DefaultHasher::new();
        self.script.vehicle_id.hash(&mut h);
        ChaCha8Rng::seed_from_u64(self.seed ^ h.finish())
    }

    /// The telemetry this vehicle reports at each tick, given the clock
    /// readings at those ticks. Pure: same inputs, same reports.
    pub fn report_at(&self, rng: &mut ChaCha8Rng, t_ms: u64, now_ms: u64) -> Telemetry {
        let (mut position, speed) = self.kinematics.at(t_ms);
        if self.script.noise_m > 0.0 {
            let r = self.script.noise_m;
            let dy: f64 = rng.gen_range(-r..=r);
            let dx: f64 = rng.gen_range(-r..=r);
            position = GeoPoint::new(
                (position.lat + dy / METRES_PER_DEGREE).clamp(-90.0, 90.0),
                (position.lon + dx / (METRES_PER_DEGREE * position.lat.to_radians().cos().max(1e-6))).clamp(-180.0, 180.0),
            );
        }
        Telemetry {
            timestamp_ms: now_ms,
            latitude: position.lat,
            longitude: position.lon,
            speed,
        }
    }
}

/// Connects, logs in, reports telemetry every period until the scenario
/// duration (or the scripted disconnect), recording all traffic.
pub fn simulated_vehicle(run: &VehicleRun, server: SocketAddr, clock: Arc<dyn Clock>) -> Result<VehicleTranscript, SimError> {
    let id = run.script.vehicle_id.clone();
    let mut stream = TcpStream::connect(server).map_err(|source| SimError::Connect { addr: server, source })?;
    let _ = stream.set_nodelay(true);

    let inbound = Arc::new(Mutex::new(Vec::new()));
    let reader = {
        let mut input = stream
            .try_clone()
            .map_err(|source| SimError::Connect { addr: server, source })?;
        let inbound = Arc::clone(&inbound);
        thread::Builder::new()
            .name(format!("sim-{id}-reader"))
            .spawn(move || {
                while let Ok(msg) = unmarshal_frame(&mut input) {
                    inbound.lock().expect("inbound lock").push(msg);
                }
            })
            .map_err(|e| SimError::Io(e.to_string()))?
    };

    let mut transcript = VehicleTranscript {
        vehicle_id: id.clone(),
        ..Default::default()
    };
    let mut send = |msg: &Message, transcript: &mut VehicleTranscript| -> Result<(), SimError> {
        let bytes = marshal_frame(msg);
        stream
            .write_all(&bytes)
            .map_err(|e| SimError::Protocol(format!("{id}: write failed: {e}")))?;
        transcript.outbound.extend_from_slice(&bytes);
        Ok(())
    };

    let login = Message::login(id.clone()).map_err(|e| SimError::Protocol(e.to_string()))?;
    send(&login, &mut transcript)?;

    let mut rng = run.rng();
    let start = clock.now_ms();
    let end = run.script.disconnect_at_ms.map_or(run.duration_ms, |d| d.min(run.duration_ms));
    let mut t = 0;
    while t < end {
        clock.sleep_until(start + t);
        let report = run.report_at(&mut rng, t, clock.now_ms());
        let msg = Message::telemetry(id.clone(), report).map_err(|e| SimError::Protocol(e.to_string()))?;
        send(&msg, &mut transcript)?;
        transcript.telemetry.push(report);
        t += run.script.period_ms;
    }

    if run.script.disconnect_at_ms.is_some_and(|d| d < run.duration_ms) {
        clock.sleep_until(start + end);
        transcript.disconnected_early = true;
    } else {
        clock.sleep_until(start + run.duration_ms);
        thread::sleep(run.linger);
    }
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    transcript.inbound = std::mem::take(&mut *inbound.lock().expect("inbound lock"));
    Ok(transcript)
}
