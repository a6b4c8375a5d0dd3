use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::api::KernelApi;
use super::config::ModuleSpec;
use crate::event::{EventDescriptor, EventListener, HandlerError};

pub type ModuleError = Box<dyn std::error::Error + Send + Sync>;

/// Work a module runs alongside the server until the token is stopped.
pub type BackgroundTask = Box<dyn FnOnce(StopToken) + Send>;

/// What a module receives at init: the shared kernel API plus its own
/// declaration.
#[derive(Clone)]
pub struct ModuleContext {
    pub api: KernelApi,
    pub module_id: String,
    pub dependencies: Vec<String>,
    pub params: BTreeMap<String, String>,
}

impl ModuleContext {
    /// Reads and parses an optional parameter, falling back to `default`.
    pub fn param_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ModuleError>
    where
        T::Err: fmt::Display,
    {
        match self.params.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|e| format!("{}: param {key}={raw:?}: {e}", self.module_id).into()),
        }
    }
}

/// A pluggable piece of application logic. Each module is registered as a
/// listener on the kernel root source; `on_event` may run concurrently for
/// distinct events.
pub trait DecisionModule: Send + Sync {
    fn init(&mut self, ctx: &ModuleContext) -> Result<(), ModuleError>;

    fn on_event(&self, _event: &EventDescriptor) -> Result<(), HandlerError> {
        Ok(())
    }

    /// Started once every module has initialized.
    fn background_task(&self) -> Option<BackgroundTask> {
        None
    }
}

pub(crate) struct ModuleListener(pub Arc<dyn DecisionModule>);

impl EventListener for ModuleListener {
    fn listen_event(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        self.0.on_event(event)
    }
}

pub type ModuleFactory = dyn Fn(&ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> + Send + Sync;

/// Module constructors keyed by factory id.
#[derive(Clone, Default)]
pub struct FactoryRegistry {
    factories: HashMap<String, Arc<ModuleFactory>>,
}

impl fmt::Debug for FactoryRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ids: Vec<_> = self.factories.keys().collect();
        ids.sort();
        f.debug_struct("FactoryRegistry").field("factories", &ids).finish()
    }
}

impl FactoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, factory_id: impl Into<String>, factory: F) -> &mut Self
    where
        F: Fn(&ModuleSpec) -> Result<Box<dyn DecisionModule>, ModuleError> + Send + Sync + 'static,
    {
        self.factories.insert(factory_id.into(), Arc::new(factory));
        self
    }

    pub fn contains(&self, factory_id: &str) -> bool {
        self.factories.contains_key(factory_id)
    }

    pub(crate) fn get(&self, factory_id: &str) -> Option<Arc<ModuleFactory>> {
        self.factories.get(factory_id).cloned()
    }
}

/// Cooperative stop signal for background tasks.
#[derive(Clone, Default)]
pub struct StopToken {
    inner: Arc<(Mutex<bool>, Condvar)>,
}

impl StopToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        let (flag, cv) = &*self.inner;
        *flag.lock().unwrap_or_else(|e| e.into_inner()) = true;
        cv.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Sleeps up to `timeout`, waking early on stop. Returns true if stopped.
    pub fn wait_timeout(&self, timeout: Duration) -> bool {
        let (flag, cv) = &*self.inner;
        let guard = flag.lock().unwrap_or_else(|e| e.into_inner());
        let (guard, _) = cv
            .wait_timeout_while(guard, timeout, |stopped| !*stopped)
            .unwrap_or_else(|e| e.into_inner());
        *guard
    }
}
