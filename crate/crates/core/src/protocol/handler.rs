use std::collections::HashMap;
use std::sync::Arc;

use crate::clock::Clock;
use crate::comms::InboundEnvelope;
use crate::event::{
    EventDescriptor, EventError, EventPayload, EventSource, PropagationTrace, MESSAGE_RECEIVED, VEHICLE_LOGGED_IN,
    VEHICLE_LOGGED_OUT,
};

use super::message::MessageType;

/// Turns decoded inbound traffic into propagated events. Called concurrently
/// by dispatcher threads (messages) and vehicle workers (session changes).
pub trait TelematicProtocol: Send + Sync {
    fn handle_inbound_message(&self, envelope: &InboundEnvelope) -> Result<HandledEvent, EventError>;
    fn vehicle_logged_in(&self, vehicle_id: &str) -> PropagationTrace;
    fn vehicle_logged_out(&self, vehicle_id: &str) -> PropagationTrace;
}

#[derive(Debug, Clone)]
pub struct HandledEvent {
    pub event: EventDescriptor,
    pub trace: PropagationTrace,
}

/// Which event type each message type raises.
#[derive(Debug, Clone)]
pub struct EventTypeMap {
    map: HashMap<MessageType, String>,
}

impl Default for EventTypeMap {
    fn default() -> Self {
        let map = MessageType::ALL
            .into_iter()
            .map(|t| {
                let ev = if t == MessageType::Login { VEHICLE_LOGGED_IN } else { MESSAGE_RECEIVED };
                (t, ev.to_string())
            })
            .collect();
        EventTypeMap { map }
    }
}

impl EventTypeMap {
    pub fn with(mut self, msg_type: MessageType, event_type: impl Into<String>) -> Self {
        self.map.insert(msg_type, event_type.into());
        self
    }

    pub fn event_type(&self, msg_type: MessageType) -> &str {
        self.map.get(&msg_type).map(String::as_str).unwrap_or(MESSAGE_RECEIVED)
    }
}

/// The shipped protocol handler: raises one event per message on its own
/// event source, whose parent is normally the kernel root.
pub struct RvtpProtocol {
    source: Arc<EventSource>,
    event_types: EventTypeMap,
    clock: Arc<dyn Clock>,
}

impl RvtpProtocol {
    pub fn new(source: Arc<EventSource>, event_types: EventTypeMap, clock: Arc<dyn Clock>) -> Self {
        RvtpProtocol {
            source,
            event_types,
            clock,
        }
    }

    pub fn event_source(&self) -> &Arc<EventSource> {
        &self.source
    }

    fn session_event(&self, event_type: &str, vehicle_id: &str) -> PropagationTrace {
        let ev = EventDescriptor::new(event_type, vehicle_id, EventPayload::Empty, self.clock.now_ms())
            .expect("session event types are non-empty");
        self.source.propagate_event(&ev)
    }
}

impl TelematicProtocol for RvtpProtocol {
    fn handle_inbound_message(&self, envelope: &InboundEnvelope) -> Result<HandledEvent, EventError> {
        let event = EventDescriptor::new(
            self.event_types.event_type(envelope.message.message_type()),
            envelope.vehicle_id.clone(),
            EventPayload::Message(envelope.message.clone()),
            envelope.received_at,
        )?;
        let trace = self.source.propagate_event(&event);
        Ok(HandledEvent { event, trace })
    }

    fn vehicle_logged_in(&self, vehicle_id: &str) -> PropagationTrace {
        self.session_event(VEHICLE_LOGGED_IN, vehicle_id)
    }

    fn vehicle_logged_out(&self, vehicle_id: &str) -> PropagationTrace {
        self.session_event(VEHICLE_LOGGED_OUT, vehicle_id)
    }
}
