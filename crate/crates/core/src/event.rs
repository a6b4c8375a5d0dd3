//! Event model: sources chained to parents, listeners with declared
//! execution dependencies, and the propagation protocol.
//!
//! Propagating an event on a source runs, for that source and then for each
//! ancestor in turn:
//!
//! 1. the source's default action, if any;
//! 2. every registered listener, dependencies first;
//! 3. the same steps on the parent source.
//!
//! Listener dependencies are scoped to a single source. A dependency naming a
//! listener that is not registered is treated as satisfied. A failing (or
//! panicking) handler is recorded in the returned trace and propagation
//! carries on.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Mutex, RwLock};

use crate::depgraph::{self, CycleError};
use crate::protocol::Message;

pub const VEHICLE_LOGGED_IN: &str = "vehicle_logged_in";
pub const VEHICLE_LOGGED_OUT: &str = "vehicle_logged_out";
pub const MESSAGE_RECEIVED: &str = "message_received";

pub type HandlerError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum EventError {
    #[error("event type must not be empty")]
    EmptyEventType,
    #[error("listener id must not be empty")]
    EmptyListenerId,
    #[error("listener {0} lists itself as a dependency")]
    SelfDependency(String),
    #[error("listener {listener} lists dependency {dependency} more than once")]
    DuplicateDependency { listener: String, dependency: String },
    #[error("listener {0} is already registered on this source")]
    DuplicateListenerId(String),
    #[error("listener {0} is not registered on this source")]
    UnknownListener(String),
    #[error("making {parent} the parent of {child} would create a cycle")]
    ParentCycle { child: String, parent: String },
}

/// Application data carried by an event.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EventPayload {
    #[default]
    Empty,
    Message(Message),
    Bytes(Vec<u8>),
    Text(String),
}

/// An immutable event: what happened, which logical element it concerns
/// (usually a vehicle id), and when.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDescriptor {
    event_type: String,
    source_target: String,
    payload: EventPayload,
    timestamp_ms: u64,
}

impl EventDescriptor {
    pub fn new(
        event_type: impl Into<String>,
        source_target: impl Into<String>,
        payload: EventPayload,
        timestamp_ms: u64,
    ) -> Result<Self, EventError> {
        let event_type = event_type.into();
        if event_type.is_empty() {
            return Err(EventError::EmptyEventType);
        }
        Ok(EventDescriptor {
            event_type,
            source_target: source_target.into(),
            payload,
            timestamp_ms,
        })
    }

    pub fn event_type(&self) -> &str {
        &self.event_type
    }

    pub fn source_target(&self) -> &str {
        &self.source_target
    }

    pub fn payload(&self) -> &EventPayload {
        &self.payload
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    /// The carried protocol message, if any.
    pub fn message(&self) -> Option<&Message> {
        match &self.payload {
            EventPayload::Message(m) => Some(m),
            _ => None,
        }
    }
}

/// Something that reacts to events. Implementations may be invoked
/// concurrently for distinct events and must be thread-safe.
pub trait EventListener: Send + Sync {
    fn listen_event(&self, event: &EventDescriptor) -> Result<(), HandlerError>;
}

impl<F> EventListener for F
where
    F: Fn(&EventDescriptor) -> Result<(), HandlerError> + Send + Sync,
{
    fn listen_event(&self, event: &EventDescriptor) -> Result<(), HandlerError> {
        self(event)
    }
}

#[derive(Clone)]
pub struct ListenerRegistration {
    listener_id: String,
    dependencies: Vec<String>,
    callback: Arc<dyn EventListener>,
}

impl ListenerRegistration {
    pub fn new(
        listener_id: impl Into<String>,
        dependencies: Vec<String>,
        callback: Arc<dyn EventListener>,
    ) -> Result<Self, EventError> {
        let listener_id = listener_id.into();
        if listener_id.is_empty() {
            return Err(EventError::EmptyListenerId);
        }
        for (i, d) in dependencies.iter().enumerate() {
            if *d == listener_id {
                return Err(EventError::SelfDependency(listener_id));
            }
            if dependencies[..i].contains(d) {
                return Err(EventError::DuplicateDependency {
                    listener: listener_id,
                    dependency: d.clone(),
                });
            }
        }
        Ok(ListenerRegistration {
            listener_id,
            dependencies,
            callback,
        })
    }

    /// Shorthand for a closure listener.
    pub fn from_fn<F>(listener_id: impl Into<String>, dependencies: &[&str], f: F) -> Result<Self, EventError>
    where
        F: Fn(&EventDescriptor) -> Result<(), HandlerError> + Send + Sync + 'static,
    {
        Self::new(
            listener_id,
            dependencies.iter().map(|d| d.to_string()).collect(),
            Arc::new(f),
        )
    }

    pub fn listener_id(&self) -> &str {
        &self.listener_id
    }

    pub fn dependencies(&self) -> &[String] {
        &self.dependencies
    }
}

impl fmt::Debug for ListenerRegistration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ListenerRegistration")
            .field("listener_id", &self.listener_id)
            .field("dependencies", &self.dependencies)
            .finish_non_exhaustive()
    }
}

#[derive(Default)]
struct ListenerTable {
    by_id: BTreeMap<String, ListenerRegistration>,
    order: Option<Result<Vec<String>, CycleError>>,
}

impl ListenerTable {
    fn compute_order(&self) -> Result<Vec<String>, CycleError> {
        for reg in self.by_id.values() {
            for d in &reg.dependencies {
                if !self.by_id.contains_key(d) {
                    log::debug!("listener {} depends on unregistered {d}; treated as satisfied", reg.listener_id);
                }
            }
        }
        depgraph::topological_order(
            self.by_id
                .values()
                .map(|r| (r.listener_id.as_str(), r.dependencies.iter().map(String::as_str))),
        )
    }
}

/// Serializes parent re-linking so the acyclicity check cannot race.
static PARENT_LINK: Mutex<()> = Mutex::new(());

type NamedListener = (String, Arc<dyn EventListener>);

pub struct EventSource {
    source_id: String,
    parent: RwLock<Option<Arc<EventSource>>>,
    default_action: RwLock<Option<Arc<dyn EventListener>>>,
    listeners: RwLock<ListenerTable>,
    warnings: Mutex<Vec<String>>,
}

impl fmt::Debug for EventSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventSource")
            .field("source_id", &self.source_id)
            .field("parent", &self.parent().map(|p| p.source_id.clone()))
            .finish_non_exhaustive()
    }
}

impl EventSource {
    pub fn new(source_id: impl Into<String>) -> Arc<Self> {
        Arc::new(EventSource {
            source_id: source_id.into(),
            parent: RwLock::new(None),
            default_action: RwLock::new(None),
            listeners: RwLock::new(ListenerTable::default()),
            warnings: Mutex::new(Vec::new()),
        })
    }

    pub fn with_default_action(source_id: impl Into<String>, action: Arc<dyn EventListener>) -> Arc<Self> {
        let source = Self::new(source_id);
        source.set_default_action(Some(action));
        source
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn parent(&self) -> Option<Arc<EventSource>> {
        self.parent.read().expect("parent lock").clone()
    }

    pub fn set_default_action(&self, action: Option<Arc<dyn EventListener>>) {
        *self.default_action.write().expect("default action lock") = action;
    }

    /// Links `child` under `parent`. Rejects self-parenting and any link
    /// that would close a loop in the parent chain.
    pub fn set_source_parent(child: &Arc<EventSource>, parent: &Arc<EventSource>) -> Result<(), EventError> {
        let _guard = PARENT_LINK.lock().unwrap_or_else(|e| e.into_inner());
        let mut cursor = Some(Arc::clone(parent));
        while let Some(node) = cursor {
            if Arc::ptr_eq(&node, child) {
                return Err(EventError::ParentCycle {
                    child: child.source_id.clone(),
                    parent: parent.source_id.clone(),
                });
            }
            cursor = node.parent();
        }
        *child.parent.write().expect("parent lock") = Some(Arc::clone(parent));
        Ok(())
    }

    pub fn clear_parent(&self) {
        let _guard = PARENT_LINK.lock().unwrap_or_else(|e| e.into_inner());
        *self.parent.write().expect("parent lock") = None;
    }

    pub fn register_listener(&self, reg: ListenerRegistration) -> Result<(), EventError> {
        let mut table = self.listeners.write().expect("listener lock");
        if table.by_id.contains_key(&reg.listener_id) {
            return Err(EventError::DuplicateListenerId(reg.listener_id));
        }
        for d in &reg.dependencies {
            if !table.by_id.contains_key(d) {
                let w = format!(
                    "{}: listener {} depends on {d}, which is not registered yet",
                    self.source_id, reg.listener_id
                );
                log::warn!("{w}");
                self.warnings.lock().expect("warnings lock").push(w);
            }
        }
        table.by_id.insert(reg.listener_id.clone(), reg);
        table.order = None;
        Ok(())
    }

    pub fn unregister_listener(&self, listener_id: &str) -> Result<(), EventError> {
        let mut table = self.listeners.write().expect("listener lock");
        if table.by_id.remove(listener_id).is_none() {
            return Err(EventError::UnknownListener(listener_id.to_string()));
        }
        table.order = None;
        Ok(())
    }

    pub fn listener_count(&self) -> usize {
        self.listeners.read().expect("listener lock").by_id.len()
    }

    pub fn listener_ids(&self) -> Vec<String> {
        self.listeners.read().expect("listener lock").by_id.keys().cloned().collect()
    }

    /// Warnings recorded at registration time about unresolved dependencies.
    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warnings lock").clone()
    }

    /// Listener ids in execution order. Cached until the next register or
    /// unregister.
    pub fn resolve_listener_order(&self) -> Result<Vec<String>, CycleError> {
        {
            let table = self.listeners.read().expect("listener lock");
            if let Some(cached) = &table.order {
                return cached.clone();
            }
        }
        let mut table = self.listeners.write().expect("listener lock");
        if table.order.is_none() {
            table.order = Some(table.compute_order());
        }
        table.order.clone().expect("just computed")
    }

    fn ordered_callbacks(&self) -> Result<Vec<NamedListener>, CycleError> {
        let order = self.resolve_listener_order()?;
        let table = self.listeners.read().expect("listener lock");
        // a concurrent unregister may have removed entries since the order was read
        Ok(order
            .into_iter()
            .filter_map(|id| table.by_id.get(&id).map(|r| (id, Arc::clone(&r.callback))))
            .collect())
    }

    /// Runs the propagation protocol from this source up through its
    /// ancestors. Handlers run sequentially on the calling thread.
    pub fn propagate_event(&self, event: &EventDescriptor) -> PropagationTrace {
        let mut trace = PropagationTrace::default();
        self.propagate_into(event, &mut trace);
        let mut cursor = self.parent();
        while let Some(source) = cursor {
            source.propagate_into(event, &mut trace);
            cursor = source.parent();
        }
        trace
    }

    fn propagate_into(&self, event: &EventDescriptor, trace: &mut PropagationTrace) {
        let default_action = self.default_action.read().expect("default action lock").clone();
        if let Some(action) = default_action {
            let outcome = invoke(action.as_ref(), event);
            trace.push(&self.source_id, TraceStep::DefaultAction, outcome);
        }
        match self.ordered_callbacks() {
            Ok(callbacks) => {
                for (id, callback) in callbacks {
                    let outcome = invoke(callback.as_ref(), event);
                    trace.push(&self.source_id, TraceStep::Listener(id), outcome);
                }
            }
            Err(cycle) => {
                trace.push(&self.source_id, TraceStep::ListenerOrder, Err(cycle.to_string()));
            }
        }
    }
}

fn invoke(handler: &dyn EventListener, event: &EventDescriptor) -> Result<(), String> {
    match panic::catch_unwind(AssertUnwindSafe(|| handler.listen_event(event))) {
        Ok(Ok(())) => Ok(()),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "handler panicked".to_string());
            Err(format!("panic: {msg}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStep {
    DefaultAction,
    Listener(String),
    /// The source's listeners could not be ordered; none of them ran.
    ListenerOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub source_id: String,
    pub step: TraceStep,
    pub outcome: Result<(), String>,
}

impl TraceEntry {
    /// `source:default`, `source:<listener>` or `source:order`.
    pub fn label(&self) -> String {
        match &self.step {
            TraceStep::DefaultAction => format!("{}:default", self.source_id),
            TraceStep::Listener(id) => format!("{}:{id}", self.source_id),
            TraceStep::ListenerOrder => format!("{}:order", self.source_id),
        }
    }
}

/// Every handler invoked by one propagation, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropagationTrace {
    entries: Vec<TraceEntry>,
}

impl PropagationTrace {
    fn push(&mut self, source_id: &str, step: TraceStep, outcome: Result<(), String>) {
        if let Err(e) = &outcome {
            log::error!("event handler {source_id}/{step:?} failed: {e}");
        }
        self.entries.push(TraceEntry {
            source_id: source_id.to_string(),
            step,
            outcome,
        });
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(TraceEntry::label).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.outcome.is_err())
    }

    pub fn position_of_listener(&self, listener_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| matches!(&e.step, TraceStep::Listener(id) if id == listener_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev() -> EventDescriptor {
        EventDescriptor::new(MESSAGE_RECEIVED, "v1", EventPayload::Empty, 0).unwrap()
    }

    fn noop(id: &str, deps: &[&str]) -> ListenerRegistration {
        ListenerRegistration::from_fn(id, deps, |_| Ok(())).unwrap()
    }

    #[test]
    fn empty_event_type_rejected() {
        assert!(matches!(
            EventDescriptor::new("", "v1", EventPayload::Empty, 0),
            Err(EventError::EmptyEventType)
        ));
    }

    #[test]
    fn registration_invariants() {
        assert!(matches!(
            ListenerRegistration::from_fn("a", &["a"], |_| Ok(())),
            Err(EventError::SelfDependency(_))
        ));
        assert!(matches!(
            ListenerRegistration::from_fn("a", &["b", "b"], |_| Ok(())),
            Err(EventError::DuplicateDependency { .. })
        ));
        assert!(matches!(
            ListenerRegistration::from_fn("", &[], |_| Ok(())),
            Err(EventError::EmptyListenerId)
        ));
    }

    #[test]
    fn register_on_empty_source() {
        let s = EventSource::new("s");
        s.register_listener(noop("L1", &[])).unwrap();
        assert_eq!(s.listener_count(), 1);
    }

    #[test]
    fn register_twice_is_duplicate() {
        let s = EventSource::new("s");
        s.register_listener(noop("L1", &[])).unwrap();
        assert!(matches!(
            s.register_listener(noop("L1", &[])),
            Err(EventError::DuplicateListenerId(id)) if id == "L1"
        ));
    }

    #[test]
    fn forward_dependency_records_warning() {
        let s = EventSource::new("s");
        s.register_listener(noop("L2", &["L1"])).unwrap();
        assert_eq!(s.warnings().len(), 1);
        s.register_listener(noop("L1", &[])).unwrap();
        assert_eq!(s.resolve_listener_order().unwrap(), vec!["L1", "L2"]);
    }

    #[test]
    fn unregister() {
        let s = EventSource::new("s");
        s.register_listener(noop("L1", &[])).unwrap();
        s.register_listener(noop("L2", &["L1"])).unwrap();
        s.unregister_listener("L1").unwrap();
        assert_eq!(s.propagate_event(&ev()).labels(), vec!["s:L2"]);
        assert!(matches!(s.unregister_listener("LX"), Err(EventError::UnknownListener(_))));
    }

    #[test]
    fn parent_cycles_rejected() {
        let a = EventSource::new("A");
        let b = EventSource::new("B");
        assert!(matches!(
            EventSource::set_source_parent(&a, &a),
            Err(EventError::ParentCycle { .. })
        ));
        EventSource::set_source_parent(&a, &b).unwrap();
        assert_eq!(a.parent().unwrap().source_id(), "B");
        assert!(matches!(
            EventSource::set_source_parent(&b, &a),
            Err(EventError::ParentCycle { .. })
        ));
    }

    #[test]
    fn default_action_only() {
        let s = EventSource::with_default_action("s", Arc::new(|_: &EventDescriptor| Ok(())));
        assert_eq!(s.propagate_event(&ev()).labels(), vec!["s:default"]);
    }

    #[test]
    fn default_then_ordered_listeners() {
        let s = EventSource::with_default_action("s", Arc::new(|_: &EventDescriptor| Ok(())));
        s.register_listener(noop("L2", &["L1"])).unwrap();
        s.register_listener(noop("L1", &[])).unwrap();
        assert_eq!(s.propagate_event(&ev()).labels(), vec!["s:default", "s:L1", "s:L2"]);
    }

    #[test]
    fn bubbles_to_parent() {
        let child = EventSource::with_default_action("c", Arc::new(|_: &EventDescriptor| Ok(())));
        let parent = EventSource::with_default_action("p", Arc::new(|_: &EventDescriptor| Ok(())));
        child.register_listener(noop("Lc", &[])).unwrap();
        parent.register_listener(noop("Lp", &[])).unwrap();
        EventSource::set_source_parent(&child, &parent).unwrap();
        assert_eq!(
            child.propagate_event(&ev()).labels(),
            vec!["c:default", "c:Lc", "p:default", "p:Lp"]
        );
    }

    #[test]
    fn failures_do_not_stop_propagation() {
        let s = EventSource::new("s");
        s.register_listener(ListenerRegistration::from_fn("a", &[], |_| Err("boom".into())).unwrap())
            .unwrap();
        s.register_listener(ListenerRegistration::from_fn("b", &[], |_| panic!("kaboom")).unwrap())
            .unwrap();
        s.register_listener(noop("c", &[])).unwrap();
        let trace = s.propagate_event(&ev());
        assert_eq!(trace.labels(), vec!["s:a", "s:b", "s:c"]);
        assert_eq!(trace.failures().count(), 2);
        assert!(trace.entries()[1].outcome.as_ref().unwrap_err().contains("kaboom"));
    }

    #[test]
    fn cyclic_listeners_are_skipped_and_reported() {
        let parent = EventSource::new("p");
        parent.register_listener(noop("Lp", &[])).unwrap();
        let s = EventSource::new("s");
        EventSource::set_source_parent(&s, &parent).unwrap();
        s.register_listener(noop("A", &["B"])).unwrap();
        s.register_listener(noop("B", &["A"])).unwrap();
        let err = s.resolve_listener_order().unwrap_err();
        assert_eq!(err.members, vec!["A", "B"]);
        let trace = s.propagate_event(&ev());
        assert_eq!(trace.labels(), vec!["s:order", "p:Lp"]);
    }

    #[test]
    fn listener_may_unregister_itself_during_propagation() {
        let s = EventSource::new("s");
        let s2 = Arc::clone(&s);
        s.register_listener(
            ListenerRegistration::from_fn("once", &[], move |_| {
                s2.unregister_listener("once").map_err(Into::into)
            })
            .unwrap(),
        )
        .unwrap();
        assert_eq!(s.propagate_event(&ev()).labels(), vec!["s:once"]);
        assert!(s.propagate_event(&ev()).labels().is_empty());
    }
}
