//! Reference decision modules.
//!
//! | factory id      | module                                   |
//! |-----------------|------------------------------------------|
//! | `congestion`    | [`CongestionModel`]                      |
//! | `route_advisor` | [`RouteAdvisor`]                         |
//! | `fleet_logger`  | [`FleetLogger`]                          |
//! | `legacy_proxy`  | [`LegacyProxy`] (runs in the background) |

pub mod congestion;
pub mod fleet_logger;
pub mod legacy_proxy;
pub mod route_advisor;

pub use congestion::{CongestionModel, CongestionParams, CongestionUpdate};
pub use fleet_logger::{FleetLogger, LogRecord};
pub use legacy_proxy::{LegacyProxy, SnapshotRecord};
pub use route_advisor::{Advice, RouteAdvisor};

use crate::event::EventDescriptor;
use crate::kernel::FactoryRegistry;
use crate::protocol::Telemetry;

/// Factories for every module shipped in this crate.
pub fn builtin_factories() -> FactoryRegistry {
    let mut registry = FactoryRegistry::new();
    registry
        .register("congestion", congestion::factory)
        .register("route_advisor", route_advisor::factory)
        .register("fleet_logger", fleet_logger::factory)
        .register("legacy_proxy", legacy_proxy::factory);
    registry
}

fn telemetry_of(event: &EventDescriptor) -> Option<&Telemetry> {
    event.message().and_then(|m| m.as_telemetry())
}
