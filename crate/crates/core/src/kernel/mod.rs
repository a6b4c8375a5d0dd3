//! The kernel wires everything together: it builds the data stores, binds
//! the communication subsystem, initializes decision modules in dependency
//! order and only then starts accepting vehicles.

mod api;
mod config;
mod module;

use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

pub use api::KernelApi;
pub use config::{load_module_config, parse_module_config, topological_module_order, validate_specs, ConfigError, ModuleSpec};
pub use module::{BackgroundTask, DecisionModule, FactoryRegistry, ModuleContext, ModuleError, ModuleFactory, StopToken};

use crate::clock::{Clock, SystemClock};
use crate::comms::{self, CommsError, SendError, ServerConfig, ServerHandle, ServerStats, ShutdownReport, VehicleRegistry};
use crate::datastore::{CartographyStore, FleetStore, RoadGraph, VehicleStatus};
use crate::depgraph::CycleError;
use crate::event::{
    EventDescriptor, EventError, EventSource, HandlerError, ListenerRegistration, VEHICLE_LOGGED_IN, VEHICLE_LOGGED_OUT,
};
use crate::geo::GeoPoint;
use crate::protocol::{EventTypeMap, Message, RvtpCodec, RvtpProtocol};
use module::ModuleListener;

pub const ROOT_SOURCE_ID: &str = "kernel";
pub const PROTOCOL_SOURCE_ID: &str = "protocol";

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("no factory registered under {0}")]
    UnknownFactory(String),
    #[error("module {module_id} failed to initialize: {reason}")]
    Init { module_id: String, reason: String },
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Initialized decision modules plus their running background tasks.
pub struct ModuleSet {
    init_order: Vec<String>,
    modules: Vec<(String, Arc<dyn DecisionModule>)>,
    stop: StopToken,
    tasks: Vec<JoinHandle<()>>,
}

impl ModuleSet {
    pub fn init_order(&self) -> &[String] {
        &self.init_order
    }

    pub fn module(&self, module_id: &str) -> Option<&Arc<dyn DecisionModule>> {
        self.modules.iter().find(|(id, _)| id == module_id).map(|(_, m)| m)
    }

    pub fn running_tasks(&self) -> usize {
        self.tasks.iter().filter(|t| !t.is_finished()).count()
    }

    /// Signals every background task and joins them; returns how many did
    /// not finish before `deadline`.
    pub fn stop(&mut self, deadline: Instant) -> usize {
        self.stop.stop();
        let mut lingering = 0;
        for task in self.tasks.drain(..) {
            while !task.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(2));
            }
            if task.is_finished() {
                let _ = task.join();
            } else {
                lingering += 1;
            }
        }
        lingering
    }
}

/// Constructs, initializes and registers every module in dependency order,
/// then starts background tasks. Any failure unregisters what was already
/// registered and starts nothing.
pub fn init_decision_modules(
    specs: &[ModuleSpec],
    factories: &FactoryRegistry,
    api: &KernelApi,
) -> Result<ModuleSet, KernelError> {
    validate_specs(specs)?;
    let order = topological_module_order(specs)?;
    if let Some(missing) = specs.iter().find(|s| !factories.contains(&s.factory_id)) {
        return Err(KernelError::UnknownFactory(missing.factory_id.clone()));
    }

    let root = api.root_source();
    let mut modules: Vec<(String, Arc<dyn DecisionModule>)> = Vec::with_capacity(order.len());
    let rollback = |modules: &[(String, Arc<dyn DecisionModule>)]| {
        for (id, _) in modules {
            let _ = root.unregister_listener(id);
        }
    };

    for id in &order {
        let spec = specs.iter().find(|s| &s.module_id == id).expect("ordered ids come from specs");
        let factory = factories.get(&spec.factory_id).expect("checked above");
        let ctx = ModuleContext {
            api: api.clone(),
            module_id: spec.module_id.clone(),
            dependencies: spec.dependencies.clone(),
            params: spec.params.clone(),
        };
        let built = factory(spec).and_then(|mut m| m.init(&ctx).map(|()| m));
        let module: Arc<dyn DecisionModule> = match built {
            Ok(m) => Arc::from(m),
            Err(e) => {
                rollback(&modules);
                return Err(KernelError::Init {
                    module_id: id.clone(),
                    reason: e.to_string(),
                });
            }
        };
        let registration = ListenerRegistration::new(
            id.clone(),
            spec.dependencies.clone(),
            Arc::new(ModuleListener(Arc::clone(&module))),
        );
        if let Err(e) = registration.and_then(|r| root.register_listener(r)) {
            rollback(&modules);
            return Err(e.into());
        }
        log::info!("initialized module {id} ({})", spec.factory_id);
        modules.push((id.clone(), module));
    }

    let stop = StopToken::new();
    let mut tasks = Vec::new();
    for (id, module) in &modules {
        if let Some(task) = module.background_task() {
            let token = stop.clone();
            let handle = thread::Builder::new()
                .name(format!("module-{id}"))
                .spawn(move || task(token))
                .expect("spawn module task");
            tasks.push(handle);
        }
    }

    Ok(ModuleSet {
        init_order: order,
        modules,
        stop,
        tasks,
    })
}

pub struct KernelConfig {
    pub modules: Vec<ModuleSpec>,
    pub server: ServerConfig,
    pub local_queue_capacity: usize,
    pub map: RoadGraph,
    pub clock: Arc<dyn Clock>,
    pub event_types: EventTypeMap,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            modules: Vec::new(),
            server: ServerConfig::default(),
            local_queue_capacity: comms::DEFAULT_LOCAL_QUEUE_CAPACITY,
            map: RoadGraph::new(),
            clock: Arc::new(SystemClock),
            event_types: EventTypeMap::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelShutdownReport {
    pub server: ShutdownReport,
    pub lingering_tasks: usize,
    pub elapsed: Duration,
}

impl KernelShutdownReport {
    pub fn clean(&self) -> bool {
        self.server.lingering_threads == 0 && self.lingering_tasks == 0 && self.server.undispatched == 0
    }
}

/// A running telematics management server.
pub struct Kernel {
    api: KernelApi,
    server: ServerHandle,
    modules: std::sync::Mutex<Option<ModuleSet>>,
    init_order: Vec<String>,
    grace: Duration,
}

impl Kernel {
    pub fn start(config: KernelConfig, factories: &FactoryRegistry) -> Result<Kernel, KernelError> {
        let fleet = Arc::new(FleetStore::new());
        let map = Arc::new(CartographyStore::new(config.map));
        let registry = Arc::new(VehicleRegistry::new(config.local_queue_capacity));

        let root = EventSource::new(ROOT_SOURCE_ID);
        let protocol_source = EventSource::with_default_action(PROTOCOL_SOURCE_ID, fleet_tracker(Arc::clone(&fleet)));
        EventSource::set_source_parent(&protocol_source, &root)?;

        let bound = comms::bind(config.server.clone())?;
        let api = KernelApi::new(
            Arc::clone(&registry),
            fleet,
            map,
            Arc::clone(&root),
            Arc::clone(&protocol_source),
            Arc::clone(&config.clock),
        );

        let modules = init_decision_modules(&config.modules, factories, &api)?;
        let init_order = modules.init_order().to_vec();

        let protocol = Arc::new(RvtpProtocol::new(protocol_source, config.event_types, Arc::clone(&config.clock)));
        let server = bound.start(registry, protocol, Arc::new(RvtpCodec), config.clock);

        Ok(Kernel {
            api,
            server,
            modules: std::sync::Mutex::new(Some(modules)),
            init_order,
            grace: config.server.shutdown_grace,
        })
    }

    pub fn api(&self) -> &KernelApi {
        &self.api
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.server.local_addr()
    }

    pub fn init_order(&self) -> &[String] {
        &self.init_order
    }

    pub fn server(&self) -> &ServerHandle {
        &self.server
    }

    pub fn server_stats(&self) -> &ServerStats {
        self.server.stats()
    }

    pub fn running_background_tasks(&self) -> usize {
        self.modules
            .lock()
            .expect("modules lock")
            .as_ref()
            .map_or(0, ModuleSet::running_tasks)
    }

    pub fn send_to_vehicle(&self, vehicle_id: &str, msg: Message) -> Result<(), SendError> {
        self.api.send_to_vehicle(vehicle_id, msg)
    }

    pub fn broadcast(&self, msg: &Message) -> usize {
        self.api.broadcast(msg)
    }

    /// Stops the server (draining queued envelopes through the modules),
    /// then module background tasks. Idempotent.
    pub fn shutdown(&self) -> KernelShutdownReport {
        let started = Instant::now();
        let server = self.server.shutdown();
        let lingering_tasks = match self.modules.lock().expect("modules lock").take() {
            Some(mut set) => set.stop(started + self.grace),
            None => 0,
        };
        KernelShutdownReport {
            server,
            lingering_tasks,
            elapsed: started.elapsed(),
        }
    }
}

impl Drop for Kernel {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Default action of the protocol source: keeps the fleet store in step
/// with logins, logouts and telemetry before any module sees the event.
fn fleet_tracker(fleet: Arc<FleetStore>) -> Arc<dyn crate::event::EventListener> {
    Arc::new(move |ev: &EventDescriptor| -> Result<(), HandlerError> {
        if let Some(t) = ev.message().and_then(Message::as_telemetry) {
            fleet.record_telemetry(
                ev.source_target(),
                GeoPoint::new(t.latitude, t.longitude),
                t.speed,
                t.timestamp_ms,
            )?;
            return Ok(());
        }
        match ev.event_type() {
            VEHICLE_LOGGED_IN => fleet.set_status(ev.source_target(), VehicleStatus::LoggedIn),
            VEHICLE_LOGGED_OUT => fleet.set_status(ev.source_target(), VehicleStatus::LoggedOut),
            _ => {}
        }
        Ok(())
    })
}
