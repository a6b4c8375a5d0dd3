use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::Receiver;

use super::queue::GlobalQueue;
use super::registry::{VehicleLink, VehicleRegistry};
use super::{CommsError, InboundEnvelope};
use crate::clock::Clock;
use crate::protocol::{FrameError, Message, MessageBody, MessageCodec, TelematicProtocol};

pub const DEFAULT_PORT: u16 = 7077;
pub const DEFAULT_DISPATCHERS: usize = 4;
pub const DEFAULT_LOCAL_QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind_addr: SocketAddr,
    pub dispatchers: usize,
    /// Hash each vehicle to a fixed dispatcher so its messages are handled
    /// in wire order.
    pub sticky_dispatch: bool,
    pub shutdown_grace: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind_addr: SocketAddr::from((Ipv4Addr::UNSPECIFIED, DEFAULT_PORT)),
            dispatchers: DEFAULT_DISPATCHERS,
            sticky_dispatch: false,
            shutdown_grace: DEFAULT_SHUTDOWN_GRACE,
        }
    }
}

impl ServerConfig {
    /// Loopback on an ephemeral port; what tests and the simulator use.
    pub fn loopback() -> Self {
        ServerConfig {
            bind_addr: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
            ..Default::default()
        }
    }
}

/// Counters maintained by the running server.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub connections_accepted: AtomicU64,
    pub envelopes_enqueued: AtomicU64,
    pub envelopes_dispatched: AtomicU64,
    pub handler_failures: AtomicU64,
    pub protocol_errors: AtomicU64,
    pub superseded_logins: AtomicU64,
    per_dispatcher: Vec<AtomicU64>,
}

impl ServerStats {
    fn new(dispatchers: usize) -> Self {
        ServerStats {
            per_dispatcher: (0..dispatchers).map(|_| AtomicU64::new(0)).collect(),
            ..Default::default()
        }
    }

    pub fn enqueued(&self) -> u64 {
        self.envelopes_enqueued.load(Ordering::SeqCst)
    }

    pub fn dispatched(&self) -> u64 {
        self.envelopes_dispatched.load(Ordering::SeqCst)
    }

    pub fn per_dispatcher(&self) -> Vec<u64> {
        self.per_dispatcher.iter().map(|c| c.load(Ordering::SeqCst)).collect()
    }
}

/// A listener bound to its port but not yet accepting.
#[derive(Debug)]
pub struct BoundServer {
    listener: TcpListener,
    config: ServerConfig,
}

pub fn bind(config: ServerConfig) -> Result<BoundServer, CommsError> {
    let listener = TcpListener::bind(config.bind_addr).map_err(|source| CommsError::Bind {
        addr: config.bind_addr,
        source,
    })?;
    Ok(BoundServer { listener, config })
}

/// Binds and starts accepting in one step.
pub fn start_server(
    config: ServerConfig,
    registry: Arc<VehicleRegistry>,
    protocol: Arc<dyn TelematicProtocol>,
    codec: Arc<dyn MessageCodec>,
    clock: Arc<dyn Clock>,
) -> Result<ServerHandle, CommsError> {
    Ok(bind(config)?.start(registry, protocol, codec, clock))
}

impl BoundServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn start(
        self,
        registry: Arc<VehicleRegistry>,
        protocol: Arc<dyn TelematicProtocol>,
        codec: Arc<dyn MessageCodec>,
        clock: Arc<dyn Clock>,
    ) -> ServerHandle {
        let addr = self.local_addr();
        let dispatchers = self.config.dispatchers.max(1);
        let queue = if self.config.sticky_dispatch {
            GlobalQueue::sticky(dispatchers)
        } else {
            GlobalQueue::shared()
        };
        let shared = Arc::new(Shared {
            stopping: AtomicBool::new(false),
            connections: Mutex::new(HashMap::new()),
            workers: Mutex::new(Vec::new()),
            next_conn_id: AtomicU64::new(1),
            queue,
            stats: ServerStats::new(dispatchers),
            registry,
            protocol,
            codec,
            clock,
        });

        let dispatcher_threads = (0..dispatchers)
            .map(|i| {
                let shared = Arc::clone(&shared);
                let lane = if shared.queue.lane_count() > 1 { i } else { 0 };
                thread::Builder::new()
                    .name(format!("dispatcher-{i}"))
                    .spawn(move || dispatch_loop(&shared, lane, i))
                    .expect("spawn dispatcher")
            })
            .collect();

        let accept_shared = Arc::clone(&shared);
        let listener = self.listener;
        let accept_thread = thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(&accept_shared, listener))
            .expect("spawn accept loop");

        log::info!("listening on {addr} with {dispatchers} dispatchers");
        ServerHandle {
            addr,
            shared,
            grace: self.config.shutdown_grace,
            threads: Mutex::new(Some(Threads {
                accept: accept_thread,
                dispatchers: dispatcher_threads,
            })),
        }
    }
}

struct Shared {
    stopping: AtomicBool,
    connections: Mutex<HashMap<u64, TcpStream>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    next_conn_id: AtomicU64,
    queue: GlobalQueue,
    stats: ServerStats,
    registry: Arc<VehicleRegistry>,
    protocol: Arc<dyn TelematicProtocol>,
    codec: Arc<dyn MessageCodec>,
    clock: Arc<dyn Clock>,
}

struct Threads {
    accept: JoinHandle<()>,
    dispatchers: Vec<JoinHandle<()>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShutdownReport {
    pub elapsed: Duration,
    /// Threads still running when the grace period ran out.
    pub lingering_threads: usize,
    /// Envelopes accepted into the global queue but never dispatched.
    pub undispatched: u64,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    grace: Duration,
    threads: Mutex<Option<Threads>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &ServerStats {
        &self.shared.stats
    }

    pub fn registry(&self) -> &Arc<VehicleRegistry> {
        &self.shared.registry
    }

    /// Open connections, logged in or not.
    pub fn connection_count(&self) -> usize {
        self.shared.connections.lock().expect("connections lock").len()
    }

    pub fn queue_len(&self) -> usize {
        self.shared.queue.len()
    }

    /// Puts an envelope on the global queue as if a worker had decoded it.
    pub fn inject(&self, envelope: InboundEnvelope) -> bool {
        let ok = self.shared.queue.push(envelope).is_ok();
        if ok {
            self.shared.stats.envelopes_enqueued.fetch_add(1, Ordering::SeqCst);
        }
        ok
    }

    pub fn is_stopping(&self) -> bool {
        self.shared.stopping.load(Ordering::SeqCst)
    }

    /// Stops accepting, closes every connection, lets the dispatchers drain
    /// what is already queued, and joins all threads within the grace
    /// period. Later calls return immediately.
    pub fn shutdown(&self) -> ShutdownReport {
        let started = Instant::now();
        let Some(threads) = self.threads.lock().expect("threads lock").take() else {
            return ShutdownReport {
                elapsed: Duration::ZERO,
                lingering_threads: 0,
                undispatched: 0,
            };
        };
        let deadline = started + self.grace;
        let shared = &self.shared;
        shared.stopping.store(true, Ordering::SeqCst);

        // unblock accept()
        let wake = wake_addr(self.addr);
        let _ = TcpStream::connect_timeout(&wake, Duration::from_millis(500));
        let mut lingering = join_within(vec![threads.accept], deadline);

        for stream in shared.connections.lock().expect("connections lock").values() {
            let _ = stream.shutdown(Shutdown::Both);
        }
        let workers = std::mem::take(&mut *shared.workers.lock().expect("workers lock"));
        lingering += join_within(workers, deadline);
        shared.registry.close_all();

        shared.queue.close();
        lingering += join_within(threads.dispatchers, deadline);

        let report = ShutdownReport {
            elapsed: started.elapsed(),
            lingering_threads: lingering,
            undispatched: shared.stats.enqueued().saturating_sub(shared.stats.dispatched()),
        };
        log::info!("server stopped: {report:?}");
        report
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    let mut wake = addr;
    if wake.ip().is_unspecified() {
        wake.set_ip(Ipv4Addr::LOCALHOST.into());
    }
    wake
}

fn join_within(handles: Vec<JoinHandle<()>>, deadline: Instant) -> usize {
    let mut lingering = 0;
    for h in handles {
        while !h.is_finished() && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(2));
        }
        if h.is_finished() {
            let _ = h.join();
        } else {
            log::warn!("thread {:?} did not stop within the grace period", h.thread().name());
            lingering += 1;
        }
    }
    lingering
}

fn accept_loop(shared: &Arc<Shared>, listener: TcpListener) {
    for incoming in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match incoming {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
                continue;
            }
        };
        let conn_id = shared.next_conn_id.fetch_add(1, Ordering::SeqCst);
        let _ = stream.set_nodelay(true);
        let tracked = match stream.try_clone() {
            Ok(s) => s,
            Err(e) => {
                log::warn!("dropping connection {conn_id}: {e}");
                continue;
            }
        };
        shared.stats.connections_accepted.fetch_add(1, Ordering::SeqCst);
        shared.connections.lock().expect("connections lock").insert(conn_id, tracked);
        let worker_shared = Arc::clone(shared);
        let spawned = thread::Builder::new()
            .name(format!("vehicle-worker-{conn_id}"))
            .spawn(move || run_vehicle_worker(&worker_shared, conn_id, stream));
        let mut workers = shared.workers.lock().expect("workers lock");
        workers.retain(|h| !h.is_finished());
        match spawned {
            Ok(h) => workers.push(h),
            Err(e) => {
                log::error!("cannot spawn worker for connection {conn_id}: {e}");
                shared.connections.lock().expect("connections lock").remove(&conn_id);
            }
        }
    }
}

/// Reader half of a vehicle worker. Requires a LOGIN first frame, then
/// enqueues every decoded frame on the global queue until the connection
/// ends. The paired writer thread drains the local queue.
fn run_vehicle_worker(shared: &Arc<Shared>, conn_id: u64, stream: TcpStream) {
    let peer = stream.peer_addr().ok();
    let mut reader = match stream.try_clone() {
        Ok(s) => BufReader::new(s),
        Err(e) => {
            log::warn!("connection {conn_id}: {e}");
            shared.connections.lock().expect("connections lock").remove(&conn_id);
            return;
        }
    };

    let vehicle_id = match shared.codec.read_message(&mut reader) {
        Ok(msg) if matches!(msg.body(), MessageBody::Login) => msg.vehicle_id().to_string(),
        Ok(msg) => {
            shared.stats.protocol_errors.fetch_add(1, Ordering::SeqCst);
            log::warn!("connection {conn_id} ({peer:?}): first frame was {}, expected LOGIN", msg.message_type());
            close_connection(shared, conn_id, &stream);
            return;
        }
        Err(e) => {
            if !e.is_disconnect() {
                shared.stats.protocol_errors.fetch_add(1, Ordering::SeqCst);
                log::warn!("connection {conn_id} ({peer:?}): {e}");
            }
            close_connection(shared, conn_id, &stream);
            return;
        }
    };

    if shared.stopping.load(Ordering::SeqCst) {
        close_connection(shared, conn_id, &stream);
        return;
    }

    let (link, outbound) = VehicleLink::new(conn_id, shared.registry.local_queue_capacity(), stream.try_clone().ok());
    let writer = {
        let shared = Arc::clone(shared);
        let out = stream.try_clone();
        thread::Builder::new()
            .name(format!("vehicle-writer-{conn_id}"))
            .spawn(move || match out {
                Ok(out) => drain_local_queue(&shared, conn_id, out, outbound),
                Err(e) => log::warn!("connection {conn_id}: no writer: {e}"),
            })
    };
    if let Some(old) = shared.registry.login(&vehicle_id, link) {
        shared.stats.superseded_logins.fetch_add(1, Ordering::SeqCst);
        log::info!(
            "vehicle {vehicle_id} logged in again on connection {conn_id}; closing connection {}",
            old.conn_id()
        );
        old.close();
    }
    log::info!("vehicle {vehicle_id} logged in from {peer:?}");
    shared.protocol.vehicle_logged_in(&vehicle_id);

    loop {
        match shared.codec.read_message(&mut reader) {
            Ok(message) => {
                let envelope = InboundEnvelope {
                    vehicle_id: vehicle_id.clone(),
                    message,
                    received_at: shared.clock.now_ms(),
                    sequence: 0,
                };
                if shared.queue.push(envelope).is_err() {
                    break;
                }
                shared.stats.envelopes_enqueued.fetch_add(1, Ordering::SeqCst);
            }
            Err(e) => {
                if !e.is_disconnect() && !shared.stopping.load(Ordering::SeqCst) {
                    if let FrameError::Decode(_) | FrameError::TruncatedStream = e {
                        shared.stats.protocol_errors.fetch_add(1, Ordering::SeqCst);
                    }
                    log::warn!("vehicle {vehicle_id} (connection {conn_id}): {e}");
                }
                break;
            }
        }
    }

    let was_current = shared.registry.logout(&vehicle_id, conn_id);
    close_connection(shared, conn_id, &stream);
    if let Ok(w) = writer {
        let _ = w.join();
    }
    if was_current {
        log::info!("vehicle {vehicle_id} logged out");
        shared.protocol.vehicle_logged_out(&vehicle_id);
    }
}

fn drain_local_queue(shared: &Shared, conn_id: u64, stream: TcpStream, outbound: Receiver<Message>) {
    let mut out = BufWriter::new(stream);
    while let Ok(msg) = outbound.recv() {
        let mut result = shared.codec.write_message(&msg, &mut out);
        if result.is_ok() && outbound.is_empty() {
            result = out.flush();
        }
        if let Err(e) = result {
            log::debug!("connection {conn_id}: write failed: {e}");
            let _ = out.get_ref().shutdown(Shutdown::Both);
            return;
        }
    }
    let _ = out.flush();
}

fn close_connection(shared: &Shared, conn_id: u64, stream: &TcpStream) {
    let _ = stream.shutdown(Shutdown::Both);
    shared.connections.lock().expect("connections lock").remove(&conn_id);
}

fn dispatch_loop(shared: &Shared, lane: usize, index: usize) {
    while let Some(envelope) = shared.queue.pop(lane) {
        match shared.protocol.handle_inbound_message(&envelope) {
            Ok(handled) => {
                let failures = handled.trace.failures().count();
                if failures > 0 {
                    shared.stats.handler_failures.fetch_add(failures as u64, Ordering::SeqCst);
                }
            }
            Err(e) => {
                shared.stats.handler_failures.fetch_add(1, Ordering::SeqCst);
                log::error!("dispatcher {index}: envelope from {}: {e}", envelope.vehicle_id);
            }
        }
        shared.stats.per_dispatcher[index].fetch_add(1, Ordering::SeqCst);
        shared.stats.envelopes_dispatched.fetch_add(1, Ordering::SeqCst);
    }
}

/// Resolves `host:port` to the first usable socket address.
pub fn resolve(addr: &str) -> std::io::Result<SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("no address for {addr}")))
}
