use std::fs::{File, OpenOptions};
use std::io::{LineWriter, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::event::{EventDescriptor, HandlerError};
use crate::kernel::{DecisionModule, ModuleContext, ModuleError, ModuleSpec};

/// One line of the fleet log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp: u64,
    pub event_type: String,
    pub source_target: String,
}

impl LogRecord {
    pub fn from_event(event: &EventDescriptor) -> Self {
        LogRecord {
            timestamp: event.timestamp_ms(),
            event_type: event.event_type().to_string(),
            source_target: event.source_target().to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn parse(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Appends every event it sees to a JSON-lines file (param `path`).
#[derive(Default)]
pub struct FleetLogger {
    path: Option<PathBuf>,
    out: Mutex<Option<LineWriter<File>>>,
}

impl FleetLogger {
    pub fn to_path(path: impl Into<PathBuf>) -> Result<Self, ModuleError> {
        let mut logger = FleetLogger::default();
        logger.open(path.into())?;
        Ok(logger)
    }

    fn open(&mut self, path: PathBuf) -> Result<(), ModuleError> {
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        self.out = Mutex::new(Some(LineWriter::new(file)));
        self.path = Some(path);
        Ok(())
    }

    pub fn log(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        let mut out = self.out.lock().expect("logger lock");
        if let Some(w) = out.as_mut() {
            writeln!(w, "{}", LogRecord::from_event(event).to_line())?;
        }
        Ok(())
    }
}

impl DecisionModule for FleetLogger {
    fn init(&mut self, ctx: &ModuleContext) -> Result<(), ModuleError> {
        let path = ctx
            .params
            .get("path")
            .ok_or_else(|| format!("{}: missing param path", ctx.module_id))?;
        self.open(PathBuf::from(path))
    }

    fn on_event(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        self.log(event)
    }
}

pub fn factory(_spec: &ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> {
    Ok(Box::new(FleetLogger::default()))
}
