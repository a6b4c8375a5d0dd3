use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest permitted value of the frame length field.
pub const MAX_FRAME_LEN: u32 = 1 << 20;
pub const MAX_VEHICLE_ID_LEN: usize = 255;

/// Bytes after the length field that every frame carries: type + id length.
pub(crate) const FRAME_HEADER_LEN: usize = 1 + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    Login = 0x01,
    Telemetry = 0x02,
    RouteAdvisory = 0x03,
    Warning = 0x04,
    Ack = 0x05,
    App = 0x06,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::Login,
        MessageType::Telemetry,
        MessageType::RouteAdvisory,
        MessageType::Warning,
        MessageType::Ack,
        MessageType::App,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::Login => "LOGIN",
            MessageType::Telemetry => "TELEMETRY",
            MessageType::RouteAdvisory => "ROUTE_ADVISORY",
            MessageType::Warning => "WARNING",
            MessageType::Ack => "ACK",
            MessageType::App => "APP",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub timestamp_ms: u64,
    /// Degrees, [-90, 90].
    pub latitude: f64,
    /// Degrees, [-180, 180].
    pub longitude: f64,
    /// Metres per second, finite and non-negative.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub severity: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Login,
    Telemetry(Telemetry),
    RouteAdvisory(Vec<String>),
    Warning(Warning),
    Ack(u32),
    App(Vec<u8>),
}

impl MessageBody {
    pub fn message_type(&self) -> MessageType {
        match self {
            MessageBody::Login => MessageType::Login,
            MessageBody::Telemetry(_) => MessageType::Telemetry,
            MessageBody::RouteAdvisory(_) => MessageType::RouteAdvisory,
            MessageBody::Warning(_) => MessageType::Warning,
            MessageBody::Ack(_) => MessageType::Ack,
            MessageBody::App(_) => MessageType::App,
        }
    }

    pub(crate) fn encoded_len(&self) -> usize {
        match self {
            MessageBody::Login => 0,
            MessageBody::Telemetry(_) => 8 * 4,
            MessageBody::RouteAdvisory(nodes) => 2 + nodes.iter().map(|n| 2 + n.len()).sum::<usize>(),
            MessageBody::Warning(w) => 1 + w.text.len(),
            MessageBody::Ack(_) => 4,
            MessageBody::App(bytes) => bytes.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: &'static str,
    pub reason: String,
}

impl ValidationError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        ValidationError {
            field,
            reason: reason.into(),
        }
    }
}

/// A validated protocol message. Construction goes through [`Message::new`]
/// (or the typed shorthands), so every `Message` value can be framed.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    vehicle_id: String,
    body: MessageBody,
}

impl Message {
    pub fn new(vehicle_id: impl Into<String>, body: MessageBody) -> Result<Self, ValidationError> {
        let vehicle_id = vehicle_id.into();
        if vehicle_id.len() > MAX_VEHICLE_ID_LEN {
            return Err(ValidationError::new(
                "vehicle_id",
                format!("{} bytes exceeds {MAX_VEHICLE_ID_LEN}", vehicle_id.len()),
            ));
        }
        if matches!(body, MessageBody::Login) && vehicle_id.is_empty() {
            return Err(ValidationError::new("vehicle_id", "LOGIN requires a non-empty id"));
        }
        match &body {
            MessageBody::Telemetry(t) => {
                if !(-90.0..=90.0).contains(&t.latitude) {
                    return Err(ValidationError::new("latitude", format!("{} outside [-90, 90]", t.latitude)));
                }
                if !(-180.0..=180.0).contains(&t.longitude) {
                    return Err(ValidationError::new(
                        "longitude",
                        format!("{} outside [-180, 180]", t.longitude),
                    ));
                }
                if !(t.speed.is_finite() && t.speed >= 0.0) {
                    return Err(ValidationError::new("speed", format!("{} is not a finite non-negative value", t.speed)));
                }
            }
            MessageBody::RouteAdvisory(nodes) => {
                if nodes.len() > u16::MAX as usize {
                    return Err(ValidationError::new("route", "more than 65535 nodes"));
                }
                if let Some(n) = nodes.iter().find(|n| n.len() > u16::MAX as usize) {
                    return Err(ValidationError::new("route", format!("node id of {} bytes", n.len())));
                }
            }
            _ => {}
        }
        let frame_len = FRAME_HEADER_LEN + vehicle_id.len() + body.encoded_len();
        if frame_len > MAX_FRAME_LEN as usize {
            return Err(ValidationError::new("body", format!("frame of {frame_len} bytes exceeds the 1 MiB cap")));
        }
        Ok(Message { vehicle_id, body })
    }

    pub fn login(vehicle_id: impl Into<String>) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, MessageBody::Login)
    }

    pub fn telemetry(vehicle_id: impl Into<String>, t: Telemetry) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, MessageBody::Telemetry(t))
    }

    pub fn route_advisory(vehicle_id: impl Into<String>, nodes: Vec<String>) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, MessageBody::RouteAdvisory(nodes))
    }

    pub fn warning(vehicle_id: impl Into<String>, severity: u8, text: impl Into<String>) -> Result<Self, ValidationError> {
        Self::new(
            vehicle_id,
            MessageBody::Warning(Warning {
                severity,
                text: text.into(),
            }),
        )
    }

    pub fn ack(vehicle_id: impl Into<String>, sequence: u32) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, MessageBody::Ack(sequence))
    }

    pub fn app(vehicle_id: impl Into<String>, bytes: Vec<u8>) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, MessageBody::App(bytes))
    }

    pub fn vehicle_id(&self) -> &str {
        &self.vehicle_id
    }

    pub fn body(&self) -> &MessageBody {
        &self.body
    }

    pub fn message_type(&self) -> MessageType {
        self.body.message_type()
    }

    pub fn as_telemetry(&self) -> Option<&Telemetry> {
        match &self.body {
            MessageBody::Telemetry(t) => Some(t),
            _ => None,
        }
    }

    /// Same message addressed to another vehicle id.
    pub fn readdressed(&self, vehicle_id: &str) -> Result<Self, ValidationError> {
        Self::new(vehicle_id, self.body.clone())
    }
}

/// Creates messages from a type tag plus body, checking the two agree.
#[derive(Debug, Default, Clone, Copy)]
pub struct MessageFactory;

impl MessageFactory {
    pub fn create_message(
        &self,
        msg_type: MessageType,
        vehicle_id: impl Into<String>,
        body: MessageBody,
    ) -> Result<Message, ValidationError> {
        if body.message_type() != msg_type {
            return Err(ValidationError::new(
                "body",
                format!("{} body given for {msg_type}", body.message_type()),
            ));
        }
        Message::new(vehicle_id, body)
    }
}
