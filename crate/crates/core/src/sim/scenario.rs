//! Scenario files use the same line-record style as road maps:
//!
//! ```text
//! map triangle.map                  # relative to the scenario file
//! duration 10                       # seconds
//! vehicle v1 waypoints=A,B speeds=0:8,3000:1 period=500 [disconnect=5000] [noise=2.5]
//! expect v1 min_advisories 1
//! expect v1 min_warnings 1
//! expect v1 last_advisory A,C
//! expect v1 avoids A,B
//! ```
//!
//! `speeds` is a step profile of `start_ms:metres_per_second` pairs; a bare
//! number means a constant speed. `period` and `disconnect` are milliseconds.

use std::fmt;
use std::path::{Path, PathBuf};

use super::SimError;
use crate::datastore::RoadGraph;
use crate::geo::GeoPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleScript {
    pub vehicle_id: String,
    pub waypoints: Vec<String>,
    /// `(start_ms, speed)` steps, sorted, first step at 0.
    pub speed_profile: Vec<(u64, f64)>,
    pub period_ms: u64,
    pub disconnect_at_ms: Option<u64>,
    /// Uniform position jitter radius in metres, drawn from the seeded RNG.
    pub noise_m: f64,
}

impl VehicleScript {
    pub fn new(vehicle_id: impl Into<String>, waypoints: &[&str], speed: f64, period_ms: u64) -> Self {
        VehicleScript {
            vehicle_id: vehicle_id.into(),
            waypoints: waypoints.iter().map(|w| w.to_string()).collect(),
            speed_profile: vec![(0, speed)],
            period_ms,
            disconnect_at_ms: None,
            noise_m: 0.0,
        }
    }

    pub fn speed_at(&self, t_ms: u64) -> f64 {
        self.speed_profile
            .iter()
            .take_while(|(start, _)| *start <= t_ms)
            .last()
            .map_or(0.0, |(_, v)| *v)
    }

    /// Metres covered by the speed profile over `[0, t_ms]`.
    pub fn distance_at(&self, t_ms: u64) -> f64 {
        let mut total = 0.0;
        for (i, (start, speed)) in self.speed_profile.iter().enumerate() {
            if *start >= t_ms {
                break;
            }
            let end = self.speed_profile.get(i + 1).map_or(t_ms, |(s, _)| (*s).min(t_ms));
            total += speed * (end - start) as f64 / 1000.0;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    MinAdvisories(usize),
    MinWarnings(usize),
    LastAdvisory(Vec<String>),
    /// The final advisory does not drive from the first node straight to
    /// the second.
    Avoids(String, String),
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::MinAdvisories(n) => write!(f, "min_advisories {n}"),
            Expectation::MinWarnings(n) => write!(f, "min_warnings {n}"),
            Expectation::LastAdvisory(nodes) => write!(f, "last_advisory {}", nodes.join(",")),
            Expectation::Avoids(a, b) => write!(f, "avoids {a},{b}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub map_path: PathBuf,
    pub map: RoadGraph,
    pub duration_ms: u64,
    pub vehicles: Vec<VehicleScript>,
    pub expectations: Vec<(String, Expectation)>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses scenario text, resolving the map path against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, SimError> {
        let err = |line: usize, reason: String| SimError::Scenario { line, reason };
        let mut map_path = None;
        let mut duration_ms = None;
        let mut vehicles: Vec<VehicleScript> = Vec::new();
        let mut expectations = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields.as_slice() {
                ["map", path] => map_path = Some(base_dir.join(path)),
                ["duration", secs] => {
                    let secs: f64 = secs.parse().map_err(|_| err(line, format!("bad duration {secs}")))?;
                    if !(secs.is_finite() && secs > 0.0) {
                        return Err(err(line, "duration must be > 0".into()));
                    }
                    duration_ms = Some((secs * 1000.0).round() as u64);
                }
                ["vehicle", id, opts @ ..] => {
                    if vehicles.iter().any(|v| v.vehicle_id == *id) {
                        return Err(err(line, format!("vehicle {id} declared twice")));
                    }
                    vehicles.push(parse_vehicle(id, opts).map_err(|r| err(line, r))?);
                }
                ["expect", id, kind, value] => {
                    let e = parse_expectation(kind, value).map_err(|r| err(line, r))?;
                    expectations.push((id.to_string(), e));
                }
                _ => return Err(err(line, format!("unrecognized record: {content}"))),
            }
        }

        let map_path = map_path.ok_or_else(|| err(0, "missing map record".into()))?;
        let duration_ms = duration_ms.ok_or_else(|| err(0, "missing duration record".into()))?;
        let map = RoadGraph::load_road_graph(&map_path).map_err(SimError::Map)?;
        for v in &vehicles {
            if let Some(w) = v.waypoints.iter().find(|w| map.node(w).is_none()) {
                return Err(err(0, format!("vehicle {}: waypoint {w} is not on the map", v.vehicle_id)));
            }
        }
        for (id, _) in &expectations {
            if !vehicles.iter().any(|v| &v.vehicle_id == id) {
                return Err(err(0, format!("expectation for undeclared vehicle {id}")));
            }
        }
        Ok(Scenario {
            map_path,
            map,
            duration_ms,
            vehicles,
            expectations,
        })
    }

    /// Position and reported speed of `script`'s vehicle at `t_ms`.
    pub fn kinematics(&self, script: &VehicleScript) -> Kinematics {
        Kinematics::new(&self.map, script)
    }
}

fn parse_vehicle(id: &str, opts: &[&str]) -> Result<VehicleScript, String> {
    let mut script = VehicleScript {
        vehicle_id: id.to_string(),
        waypoints: Vec::new(),
        speed_profile: vec![(0, 0.0)],
        period_ms: 0,
        disconnect_at_ms: None,
        noise_m: 0.0,
    };
    for opt in opts {
        let (key, value) = opt.split_once('=').ok_or_else(|| format!("expected key=value, got {opt}"))?;
        match key {
            "waypoints" => script.waypoints = value.split(',').map(str::to_string).collect(),
            "speeds" => script.speed_profile = parse_profile(value)?,
            "period" => script.period_ms = value.parse().map_err(|_| format!("bad period {value}"))?,
            "disconnect" => {
                script.disconnect_at_ms = Some(value.parse().map_err(|_| format!("bad disconnect time {value}"))?)
            }
            "noise" => {
                script.noise_m = value.parse().map_err(|_| format!("bad noise {value}"))?;
                if !(script.noise_m.is_finite() && script.noise_m >= 0.0) {
                    return Err(format!("noise must be >= 0, got {value}"));
                }
            }
            other => return Err(format!("unknown vehicle option {other}")),
        }
    }
    if script.waypoints.is_empty() || script.waypoints.iter().any(String::is_empty) {
        return Err(format!("vehicle {id} needs waypoints=NODE[,NODE...]"));
    }
    if script.period_ms == 0 {
        return Err(format!("vehicle {id} needs period > 0"));
    }
    Ok(script)
}

fn parse_profile(value: &str) -> Result<Vec<(u64, f64)>, String> {
    if let Ok(v) = value.parse::<f64>() {
        return check_speeds(vec![(0, v)]);
    }
    let mut steps = Vec::new();
    for step in value.split(',') {
        let (t, v) = step.split_once(':').ok_or_else(|| format!("bad speed step {step}"))?;
        let t: u64 = t.parse().map_err(|_| format!("bad step time {t}"))?;
        let v: f64 = v.parse().map_err(|_| format!("bad speed {v}"))?;
        steps.push((t, v));
    }
    if steps.first().map(|(t, _)| *t) != Some(0) {
        return Err("speed profile must start at 0".into());
    }
    if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err("speed profile times must increase".into());
    }
    check_speeds(steps)
}

fn check_speeds(steps: Vec<(u64, f64)>) -> Result<Vec<(u64, f64)>, String> {
    if steps.iter().any(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
        return Err("speeds must be finite and >= 0".into());
    }
    Ok(steps)
}

fn parse_expectation(kind: &str, value: &str) -> Result<Expectation, String> {
    let nodes = || value.split(',').map(str::to_string).collect::<Vec<_>>();
    Ok(match kind {
        "min_advisories" => Expectation::MinAdvisories(value.parse().map_err(|_| format!("bad count {value}"))?),
        "min_warnings" => Expectation::MinWarnings(value.parse().map_err(|_| format!("bad count {value}"))?),
        "last_advisory" => Expectation::LastAdvisory(nodes()),
        "avoids" => match nodes().as_slice() {
            [a, b] => Expectation::Avoids(a.clone(), b.clone()),
            _ => return Err(format!("avoids takes FROM,TO, got {value}")),
        },
        other => return Err(format!("unknown expectation {other}")),
    })
}

/// Straight-line motion along the waypoint polyline at the scripted speed;
/// the vehicle stops (speed 0) at the last waypoint.
#[derive(Debug, Clone)]
pub struct Kinematics {
    points: Vec<GeoPoint>,
    /// Cumulative distance to each point.
    offsets: Vec<f64>,
    script: VehicleScript,
}

impl Kinematics {
    pub fn new(map: &RoadGraph, script: &VehicleScript) -> Self {
        let points: Vec<GeoPoint> = script
            .waypoints
            .iter()
            .map(|w| map.node(w).expect("waypoints validated against the map"))
            .collect();
        let mut offsets = vec![0.0];
        for pair in points.windows(2) {
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + pair[0].distance_m(&pair[1]));
        }
        Kinematics {
            points,
            offsets,
            script: script.clone(),
        }
    }

    pub fn path_length_m(&self) -> f64 {
        *self.offsets.last().expect("non-empty")
    }

    pub fn at(&self, t_ms: u64) -> (GeoPoint, f64) {
        let travelled = self.script.distance_at(t_ms);
        if travelled >= self.path_length_m() {
            return (*self.points.last().expect("non-empty"), 0.0);
        }
        let seg = self.offsets.windows(2).position(|w| travelled < w[1]).unwrap_or(0);
        let len = self.offsets[seg + 1] - self.offsets[seg];
        let frac = if len > 0.0 { (travelled - self.offsets[seg]) / len } else { 0.0 };
        (
            self.points[seg].lerp(&self.points[seg + 1], frac),
            self.script.speed_at(t_ms),
        )
    }
}
