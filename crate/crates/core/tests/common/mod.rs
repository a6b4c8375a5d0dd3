#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tms_core::clock::SystemClock;
use tms_core::comms::{start_server, InboundEnvelope, ServerConfig, ServerHandle, VehicleRegistry};
use tms_core::event::{EventDescriptor, EventError, EventPayload, EventSource, ListenerRegistration, PropagationTrace};
use tms_core::protocol::{marshal_frame, unmarshal_frame, HandledEvent, Message, RvtpCodec, TelematicProtocol, Telemetry};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Polls `cond` until it holds or `timeout` passes.
pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        thread::sleep(Duration::from_millis(5));
    }
    cond()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handled {
    pub vehicle_id: String,
    /// Sequence number the test client put in the telemetry timestamp.
    pub client_seq: u64,
    /// Position in the global queue.
    pub queue_seq: u64,
}

/// Records every call instead of raising events. Handled envelopes are
/// appended under one lock, so the log order is the handling order.
#[derive(Default)]
pub struct RecordingProtocol {
    pub handled: Mutex<Vec<Handled>>,
    pub logins: Mutex<Vec<String>>,
    pub logouts: Mutex<Vec<String>>,
    pub delay: Duration,
}

impl RecordingProtocol {
    pub fn with_delay(delay: Duration) -> Self {
        RecordingProtocol {
            delay,
            ..Default::default()
        }
    }

    pub fn handled(&self) -> Vec<Handled> {
        self.handled.lock().unwrap().clone()
    }

    pub fn by_vehicle(&self) -> BTreeMap<String, Vec<Handled>> {
        let mut out: BTreeMap<String, Vec<Handled>> = BTreeMap::new();
        for h in self.handled() {
            out.entry(h.vehicle_id.clone()).or_default().push(h);
        }
        out
    }

    pub fn logouts(&self) -> Vec<String> {
        self.logouts.lock().unwrap().clone()
    }

    pub fn logins(&self) -> Vec<String> {
        self.logins.lock().unwrap().clone()
    }
}

impl TelematicProtocol for RecordingProtocol {
    fn handle_inbound_message(&self, envelope: &InboundEnvelope) -> Result<HandledEvent, EventError> {
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        let client_seq = envelope.message.as_telemetry().map_or(u64::MAX, |t| t.timestamp_ms);
        self.handled.lock().unwrap().push(Handled {
            vehicle_id: envelope.vehicle_id.clone(),
            client_seq,
            queue_seq: envelope.sequence,
        });
        Ok(HandledEvent {
            event: EventDescriptor::new(
                "message_received",
                envelope.vehicle_id.clone(),
                EventPayload::Message(envelope.message.clone()),
                envelope.received_at,
            )?,
            trace: PropagationTrace::default(),
        })
    }

    fn vehicle_logged_in(&self, vehicle_id: &str) -> PropagationTrace {
        self.logins.lock().unwrap().push(vehicle_id.to_string());
        PropagationTrace::default()
    }

    fn vehicle_logged_out(&self, vehicle_id: &str) -> PropagationTrace {
        self.logouts.lock().unwrap().push(vehicle_id.to_string());
        PropagationTrace::default()
    }
}

pub fn recording_server(config: ServerConfig, protocol: Arc<RecordingProtocol>) -> ServerHandle {
    start_server(
        config,
        Arc::new(VehicleRegistry::new(256)),
        protocol,
        Arc::new(RvtpCodec),
        Arc::new(SystemClock),
    )
    .expect("bind loopback")
}

pub fn server_config(dispatchers: usize, sticky: bool) -> ServerConfig {
    ServerConfig {
        dispatchers,
        sticky_dispatch: sticky,
        ..ServerConfig::loopback()
    }
}

/// A bare-socket vehicle for driving the server from tests.
pub struct TestVehicle {
    pub id: String,
    pub stream: TcpStream,
}

impl TestVehicle {
    pub fn connect(addr: SocketAddr, id: &str) -> Self {
        let stream = TcpStream::connect(addr).expect("connect");
        stream.set_nodelay(true).unwrap();
        let mut v = TestVehicle {
            id: id.to_string(),
            stream,
        };
        v.send(&Message::login(id).unwrap());
        v
    }

    pub fn send(&mut self, msg: &Message) {
        self.stream.write_all(&marshal_frame(msg)).expect("write frame");
    }

    /// Telemetry whose timestamp carries `seq`.
    pub fn send_seq(&mut self, seq: u64) {
        let t = Telemetry {
            timestamp_ms: seq,
            latitude: 48.85,
            longitude: 2.35,
            speed: 1.0,
        };
        self.send(&Message::telemetry(self.id.clone(), t).unwrap());
    }

    /// Sends `count` sequence-numbered frames as one buffered write.
    pub fn send_burst(&mut self, count: u64) {
        let mut buf = Vec::new();
        for seq in 0..count {
            let t = Telemetry {
                timestamp_ms: seq,
                latitude: 48.85,
                longitude: 2.35,
                speed: 1.0,
            };
            buf.extend(marshal_frame(&Message::telemetry(self.id.clone(), t).unwrap()));
        }
        self.stream.write_all(&buf).expect("write burst");
    }

    pub fn recv(&mut self, timeout: Duration) -> Option<Message> {
        self.stream.set_read_timeout(Some(timeout)).unwrap();
        unmarshal_frame(&mut self.stream).ok()
    }

    pub fn close(self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Real event sources built from a model chain (`chain[0]` is the leaf).
/// Every handler appends its trace label to `log` before acting; failing
/// listeners alternate between returning an error and panicking.
pub fn build_sources(chain: &[oracle::SourceModel], log: &Arc<Mutex<Vec<String>>>) -> Vec<Arc<EventSource>> {
    let sources: Vec<Arc<EventSource>> = chain
        .iter()
        .map(|m| {
            let source = EventSource::new(m.id.clone());
            if m.has_default {
                let log = Arc::clone(log);
                let label = format!("{}:default", m.id);
                source.set_default_action(Some(Arc::new(move |_: &EventDescriptor| {
                    log.lock().unwrap().push(label.clone());
                    Ok(())
                })));
            }
            for (i, (id, deps)) in m.listeners.iter().enumerate() {
                let log = Arc::clone(log);
                let label = format!("{}:{id}", m.id);
                let fails = m.failing.contains(id);
                let deps: Vec<&str> = deps.iter().map(String::as_str).collect();
                let reg = ListenerRegistration::from_fn(id.clone(), &deps, move |_: &EventDescriptor| {
                    log.lock().unwrap().push(label.clone());
                    match (fails, i % 2) {
                        (false, _) => Ok(()),
                        (true, 0) => Err("scripted failure".into()),
                        (true, _) => panic!("scripted panic"),
                    }
                })
                .expect("valid registration");
                source.register_listener(reg).expect("register");
            }
            source
        })
        .collect();
    for pair in sources.windows(2) {
        EventSource::set_source_parent(&pair[0], &pair[1]).expect("chain parent");
    }
    sources
}

/// Silences the default panic message for panics the code under test is
/// expected to catch.
pub fn quiet_panics() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        let default = std::panic::take_hook();
        std::panic::set_hook(Box::new(move |info| {
            let msg = info
                .payload()
                .downcast_ref::<&str>()
                .copied()
                .or_else(|| info.payload().downcast_ref::<String>().map(String::as_str))
                .unwrap_or("");
            if !msg.starts_with("scripted") {
                default(info);
            }
        }));
    });
}
