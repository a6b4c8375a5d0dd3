use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::mpsc;

use anyhow::Context;
use clap::Parser;
use tms_core::comms::{ServerConfig, DEFAULT_DISPATCHERS, DEFAULT_LOCAL_QUEUE_CAPACITY, DEFAULT_PORT};
use tms_core::datastore::RoadGraph;
use tms_core::kernel::{load_module_config, Kernel, KernelConfig};
use tms_core::modules::builtin_factories;

/// Telematics management server.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Module configuration (XML).
    #[arg(long)]
    config: PathBuf,
    /// Road map for the cartography store.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value = "0.0.0.0")]
    bind: IpAddr,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value_t = DEFAULT_DISPATCHERS)]
    dispatchers: usize,
    #[arg(long, default_value_t = DEFAULT_LOCAL_QUEUE_CAPACITY)]
    local_queue_capacity: usize,
    /// Pin each vehicle to one dispatcher so its messages are handled in order.
    #[arg(long)]
    sticky_dispatch: bool,
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();
    anyhow::ensure!(args.dispatchers > 0, "--dispatchers must be at least 1");
    anyhow::ensure!(args.local_queue_capacity > 0, "--local-queue-capacity must be at least 1");

    let modules = load_module_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    let map = match &args.map {
        Some(path) => RoadGraph::load_road_graph(path).with_context(|| format!("loading {}", path.display()))?,
        None => RoadGraph::new(),
    };
    let config = KernelConfig {
        modules,
        server: ServerConfig {
            bind_addr: SocketAddr::new(args.bind, args.port),
            dispatchers: args.dispatchers,
            sticky_dispatch: args.sticky_dispatch,
            ..ServerConfig::default()
        },
        local_queue_capacity: args.local_queue_capacity,
        map,
        ..KernelConfig::default()
    };

    let kernel = Kernel::start(config, &builtin_factories()).context("starting kernel")?;
    log::info!(
        "listening on {}; modules in order: {}",
        kernel.local_addr(),
        kernel.init_order().join(", ")
    );

    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .context("installing signal handler")?;
    let _ = rx.recv();

    log::info!("shutting down");
    let report = kernel.shutdown();
    let stats = kernel.server_stats();
    log::info!(
        "stopped in {:?}: {} connections, {} enqueued, {} dispatched",
        report.elapsed,
        stats.connections_accepted.load(std::sync::atomic::Ordering::Relaxed),
        stats.enqueued(),
        stats.dispatched()
    );
    if !report.clean() {
        log::warn!("unclean shutdown: {report:?}");
        std::process::exit(1);
    }
    Ok(())
}
