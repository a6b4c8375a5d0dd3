//! The telematic protocol layer: validated messages, the RVTP wire codec and
//! the inbound handler that raises events.

mod codec;
mod handler;
mod message;

pub use codec::{decode_frame, marshal_frame, unmarshal_frame, write_frame, DecodeError, FrameError, MessageCodec, RvtpCodec};
pub use handler::{EventTypeMap, HandledEvent, RvtpProtocol, TelematicProtocol};
pub use message::{
    Message, MessageBody, MessageFactory, MessageType, Telemetry, ValidationError, Warning, MAX_FRAME_LEN,
    MAX_VEHICLE_ID_LEN,
};
