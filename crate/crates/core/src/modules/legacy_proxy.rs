//! Stand-in for a bridge to an external legacy system: a background task
//! that periodically pushes the fleet snapshot to a file endpoint.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datastore::VehicleState;
use crate::kernel::{BackgroundTask, DecisionModule, KernelApi, ModuleContext, ModuleError, ModuleSpec, StopToken};

pub const DEFAULT_PERIOD_MS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub written_at: u64,
    pub vehicles: Vec<VehicleState>,
}

#[derive(Default)]
pub struct LegacyProxy {
    api: Option<KernelApi>,
    path: Option<PathBuf>,
    period: Duration,
}

impl LegacyProxy {
    fn push_snapshot(api: &KernelApi, path: &PathBuf) -> std::io::Result<()> {
        let record = SnapshotRecord {
            written_at: api.clock().now_ms(),
            vehicles: api.fleet().fleet_snapshot(),
        };
        let mut line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())
    }
}

impl DecisionModule for LegacyProxy {
    fn init(&mut self, ctx: &ModuleContext) -> Result<(), ModuleError> {
        let path = ctx
            .params
            .get("path")
            .ok_or_else(|| format!("{}: missing param path", ctx.module_id))?;
        let period_ms: u64 = ctx.param_or("period_ms", DEFAULT_PERIOD_MS)?;
        if period_ms == 0 {
            return Err("period_ms must be > 0".into());
        }
        self.path = Some(PathBuf::from(path));
        self.period = Duration::from_millis(period_ms);
        self.api = Some(ctx.api.clone());
        Ok(())
    }

    fn background_task(&self) -> Option<BackgroundTask> {
        let api = self.api.clone()?;
        let path = self.path.clone()?;
        let period = self.period;
        Some(Box::new(move |stop: StopToken| {
            while !stop.wait_timeout(period) {
                if let Err(e) = Self::push_snapshot(&api, &path) {
                    log::warn!("legacy proxy: cannot write {}: {e}", path.display());
                }
            }
        }))
    }
}

pub fn factory(_spec: &ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> {
    Ok(Box::new(LegacyProxy::default()))
}

#[cfg(test)]
mod tests {
    use std::time::Instant;

    use super::*;
    use crate::datastore::VehicleStatus;
    use crate::geo::GeoPoint;
    use crate::modules::tests::api_with_triangle;

    #[test]
    fn periodic_snapshots_match_store_and_stop_promptly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("legacy.jsonl");
        let api = api_with_triangle();
        api.fleet().set_status("v1", VehicleStatus::LoggedIn);
        api.fleet()
            .record_telemetry("v1", GeoPoint::new(48.85, 2.35), 4.0, 10)
            .unwrap();

        let mut proxy = LegacyProxy::default();
        proxy
            .init(&ModuleContext {
                api: api.clone(),
                module_id: "proxy".into(),
                dependencies: vec![],
                params: [
                    ("path".to_string(), path.display().to_string()),
                    ("period_ms".to_string(), "100".to_string()),
                ]
                .into(),
            })
            .unwrap();
        let task = proxy.background_task().unwrap();
        let stop = StopToken::new();
        let token = stop.clone();
        let handle = std::thread::spawn(move || task(token));

        // 12 periods' worth at 1/50 scale: 240 ms at 100 ms
        std::thread::sleep(Duration::from_millis(240));
        let stopping = Instant::now();
        stop.stop();
        handle.join().unwrap();
        assert!(stopping.elapsed() < Duration::from_secs(1));

        let text = std::fs::read_to_string(&path).unwrap();
        let records: Vec<SnapshotRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert!(records.len() >= 2, "{} writes", records.len());
        for r in &records {
            assert_eq!(r.vehicles, api.fleet().fleet_snapshot());
        }
    }

    #[test]
    fn missing_path_fails_init() {
        let mut proxy = LegacyProxy::default();
        let err = proxy.init(&ModuleContext {
            api: api_with_triangle(),
            module_id: "proxy".into(),
            dependencies: vec![],
            params: Default::default(),
        });
        assert!(err.is_err());
    }
}
