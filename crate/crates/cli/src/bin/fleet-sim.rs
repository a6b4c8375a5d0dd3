use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use tms_core::clock::SystemClock;
use tms_core::comms::resolve;
use tms_core::sim::{run_scenario, Scenario};

/// Drives scripted vehicles against a running server.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long)]
    scenario: PathBuf,
    /// Server address, HOST:PORT.
    #[arg(long, default_value = "127.0.0.1:7077")]
    server: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-vehicle and per-assertion results here as JSON lines.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "warn")]
    log_level: log::LevelFilter,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();

    let scenario = Scenario::load(&args.scenario).with_context(|| format!("loading {}", args.scenario.display()))?;
    let addr = resolve(&args.server).with_context(|| format!("resolving {}", args.server))?;
    let report = run_scenario(&scenario, addr, args.seed, Arc::new(SystemClock))?;
    println!("{report}");
    if let Some(path) = &args.report {
        report.write_results(path)?;
    }
    report.ensure_passed()?;
    Ok(())
}
