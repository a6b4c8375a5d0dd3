//! RVTP framing.
//!
//! ```text
//! u32  N            bytes that follow this field
//! u8   msg_type
//! u16  L            vehicle id length, at most 255
//! [L]  vehicle_id   UTF-8
//! ...  body         type specific, runs to the end of the frame
//! ```
//!
//! All integers are big-endian, floats are IEEE-754 binary64. Bodies:
//! TELEMETRY `u64 ts, f64 lat, f64 lon, f64 speed`; ROUTE_ADVISORY
//! `u16 count` then `u16 len, bytes` per node id; WARNING `u8 severity` then
//! UTF-8 text to the end of the frame; ACK `u32`; APP raw bytes to the end of
//! the frame; LOGIN empty.

use std::io::{self, Read, Write};

use super::message::{
    Message, MessageBody, MessageType, Telemetry, ValidationError, Warning, FRAME_HEADER_LEN, MAX_FRAME_LEN,
    MAX_VEHICLE_ID_LEN,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame too large: {0} bytes declared")]
    FrameTooLarge(u32),
    #[error("frame too short: {0} bytes declared")]
    FrameTooShort(u32),
    #[error("vehicle id of {0} bytes exceeds 255")]
    VehicleIdTooLong(u16),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("frame ends inside {0}")]
    TruncatedBody(&'static str),
    #[error("{0} unexpected bytes after the body")]
    TrailingBytes(usize),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    /// The stream ended cleanly at a frame boundary.
    #[error("stream closed")]
    Closed,
    #[error("stream closed mid-frame")]
    TruncatedStream,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Io(io::Error),
}

impl FrameError {
    /// True for errors that end the connection without indicating a faulty
    /// peer.
    pub fn is_disconnect(&self) -> bool {
        match self {
            FrameError::Closed => true,
            FrameError::Io(e) => matches!(
                e.kind(),
                io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted | io::ErrorKind::BrokenPipe
            ),
            _ => false,
        }
    }
}

/// Serializes `msg` into a standalone frame.
pub fn marshal_frame(msg: &Message) -> Vec<u8> {
    let id = msg.vehicle_id().as_bytes();
    let n = FRAME_HEADER_LEN + id.len() + msg.body().encoded_len();
    let mut out = Vec::with_capacity(4 + n);
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.push(msg.message_type() as u8);
    out.extend_from_slice(&(id.len() as u16).to_be_bytes());
    out.extend_from_slice(id);
    match msg.body() {
        MessageBody::Login => {}
        MessageBody::Telemetry(t) => {
            out.extend_from_slice(&t.timestamp_ms.to_be_bytes());
            out.extend_from_slice(&t.latitude.to_be_bytes());
            out.extend_from_slice(&t.longitude.to_be_bytes());
            out.extend_from_slice(&t.speed.to_be_bytes());
        }
        MessageBody::RouteAdvisory(nodes) => {
            out.extend_from_slice(&(nodes.len() as u16).to_be_bytes());
            for node in nodes {
                out.extend_from_slice(&(node.len() as u16).to_be_bytes());
                out.extend_from_slice(node.as_bytes());
            }
        }
        MessageBody::Warning(w) => {
            out.push(w.severity);
            out.extend_from_slice(w.text.as_bytes());
        }
        MessageBody::Ack(seq) => out.extend_from_slice(&seq.to_be_bytes()),
        MessageBody::App(bytes) => out.extend_from_slice(bytes),
    }
    debug_assert_eq!(out.len(), 4 + n);
    out
}

/// Writes one frame for `msg` to `output`.
pub fn write_frame<W: Write + ?Sized>(msg: &Message, output: &mut W) -> io::Result<()> {
    output.write_all(&marshal_frame(msg))
}

/// Reads exactly one frame from `input`.
pub fn unmarshal_frame<R: Read + ?Sized>(input: &mut R) -> Result<Message, FrameError> {
    let mut len_buf = [0u8; 4];
    let got = read_full(input, &mut len_buf)?;
    if got == 0 {
        return Err(FrameError::Closed);
    }
    if got < 4 {
        return Err(FrameError::TruncatedStream);
    }
    let n = check_len(u32::from_be_bytes(len_buf))?;
    let mut frame = vec![0u8; n];
    if read_full(input, &mut frame)? < n {
        return Err(FrameError::TruncatedStream);
    }
    Ok(decode_payload(&frame)?)
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    if bytes.is_empty() {
        return Err(FrameError::Closed);
    }
    if bytes.len() < 4 {
        return Err(FrameError::TruncatedStream);
    }
    let n = check_len(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))?;
    let frame = bytes.get(4..4 + n).ok_or(FrameError::TruncatedStream)?;
    Ok((decode_payload(frame)?, 4 + n))
}

fn check_len(n: u32) -> Result<usize, DecodeError> {
    if n > MAX_FRAME_LEN {
        return Err(DecodeError::FrameTooLarge(n));
    }
    if (n as usize) < FRAME_HEADER_LEN {
        return Err(DecodeError::FrameTooShort(n));
    }
    Ok(n as usize)
}

fn read_full<R: Read + ?Sized>(input: &mut R, buf: &mut [u8]) -> Result<usize, FrameError> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    Ok(filled)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < k {
            return Err(DecodeError::TruncatedBody(what));
        }
        let (head, tail) = self.buf.split_at(k);
        self.buf = tail;
        Ok(head)
    }

    fn array<const K: usize>(&mut self, what: &'static str) -> Result<[u8; K], DecodeError> {
        Ok(self.take(K, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, DecodeError> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, DecodeError> {
        Ok(f64::from_be_bytes(self.array(what)?))
    }

    fn string(&mut self, k: usize, what: &'static str) -> Result<String, DecodeError> {
        let raw = self.take(k, what)?;
        std::str::from_utf8(raw)
            .map(str::to_string)
            .map_err(|_| DecodeError::InvalidUtf8(what))
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes(self.buf.len()))
        }
    }
}

/// Decodes the N bytes that follow the length field.
fn decode_payload(frame: &[u8]) -> Result<Message, DecodeError> {
    let mut cur = Cursor { buf: frame };
    let type_byte = cur.u8("message type")?;
    let msg_type = MessageType::from_u8(type_byte).ok_or(DecodeError::UnknownType(type_byte))?;
    let id_len = cur.u16("vehicle id length")?;
    if id_len as usize > MAX_VEHICLE_ID_LEN {
        return Err(DecodeError::VehicleIdTooLong(id_len));
    }
    let vehicle_id = cur.string(id_len as usize, "vehicle id")?;
    let body = match msg_type {
        MessageType::Login => MessageBody::Login,
        MessageType::Telemetry => MessageBody::Telemetry(Telemetry {
            timestamp_ms: cur.u64("telemetry")?,
            latitude: cur.f64("telemetry")?,
            longitude: cur.f64("telemetry")?,
            speed: cur.f64("telemetry")?,
        }),
        MessageType::RouteAdvisory => {
            let count = cur.u16("route node count")?;
            let mut nodes = Vec::with_capacity(count.min(1024) as usize);
            for _ in 0..count {
                let len = cur.u16("route node length")?;
                nodes.push(cur.string(len as usize, "route node id")?);
            }
            MessageBody::RouteAdvisory(nodes)
        }
        MessageType::Warning => {
            let severity = cur.u8("warning severity")?;
            let text = std::str::from_utf8(cur.rest())
                .map_err(|_| DecodeError::InvalidUtf8("warning text"))?
                .to_string();
            MessageBody::Warning(Warning { severity, text })
        }
        MessageType::Ack => MessageBody::Ack(cur.u32("ack sequence")?),
        MessageType::App => MessageBody::App(cur.rest().to_vec()),
    };
    cur.finish()?;
    Ok(Message::new(vehicle_id, body)?)
}

/// Pluggable message serialization used by vehicle workers. RVTP is the
/// shipped implementation.
pub trait MessageCodec: Send + Sync {
    fn read_message(&self, input: &mut dyn Read) -> Result<Message, FrameError>;
    fn write_message(&self, msg: &Message, output: &mut dyn Write) -> io::Result<()>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RvtpCodec;

impl MessageCodec for RvtpCodec {
    fn read_message(&self, input: &mut dyn Read) -> Result<Message, FrameError> {
        unmarshal_frame(input)
    }

    fn write_message(&self, msg: &Message, output: &mut dyn Write) -> io::Result<()> {
        write_frame(msg, output)
    }
}
