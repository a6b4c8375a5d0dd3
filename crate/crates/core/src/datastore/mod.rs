//! The data module: fleet state and road cartography, both safe to share
//! across dispatcher threads and module background tasks.

mod fleet;
mod roads;

pub use fleet::{FleetStore, UpdateOutcome, VehicleState, VehicleStatus};
pub use roads::{CartographyStore, EdgeWeights, RoadGraph, Route};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("edge {from} -> {to} references a missing node")]
    DanglingEdge { from: String, to: String },
    #[error("no edge {from} -> {to}")]
    UnknownEdge { from: String, to: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
