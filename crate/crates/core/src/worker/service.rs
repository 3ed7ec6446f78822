use std::collections::HashMap;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use super::exec::{execute_task, ExecControl};
use super::{TaskWorkspace, WorkerError};
use crate::metrics::{current_load, measure_performance};
use crate::transport::{
    decode_beacon, pack_result_archive, recv_frame, send_frame, Envelope, FrameType, Heartbeat, HeartbeatAck,
    BEACON_PORT, HEARTBEAT_INTERVAL, WORKER_PORT,
};

const IO_TIMEOUT: Duration = Duration::from_secs(30);
const PERF_INTERVAL: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// TCP address accepting ASSIGN and CANCEL frames.
    pub listen: SocketAddr,
    /// UDP port beacons arrive on; ignored when `supervisor` is set.
    pub beacon_port: u16,
    /// Supervisor TCP address; skips beacon discovery when set.
    pub supervisor: Option<SocketAddr>,
    pub slots: u32,
    pub workspace_root: PathBuf,
    pub heartbeat_interval: Duration,
    pub worker_id: String,
    /// Fixed performance figure instead of running the benchmark.
    pub perf_override: Option<f64>,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), WORKER_PORT),
            beacon_port: BEACON_PORT,
            supervisor: None,
            slots: 1,
            workspace_root: PathBuf::from("/tmp/gridlet-worker"),
            heartbeat_interval: HEARTBEAT_INTERVAL,
            worker_id: uuid::Uuid::new_v4().to_string(),
            perf_override: None,
        }
    }
}

/// Optional CANCEL body selecting one attempt.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct CancelBody {
    pub attempt: Option<u32>,
}

struct Running {
    attempt: u32,
    control: Arc<ExecControl>,
}

struct State {
    supervisor: Option<SocketAddr>,
    last_contact: Instant,
    perf: f64,
    running: HashMap<String, Running>,
    heartbeats_sent: u64,
}

struct Shared {
    cfg: WorkerConfig,
    /// Bound TCP port, advertised in heartbeats.
    port: u16,
    state: Mutex<State>,
    shutdown: AtomicBool,
}

impl Shared {
    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }

    fn supervisor(&self) -> Option<SocketAddr> {
        self.state.lock().unwrap().supervisor
    }
}

/// A running worker; dropping it without [`WorkerHandle::stop`] leaves the
/// threads running.
pub struct WorkerHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    threads: Vec<JoinHandle<()>>,
}

impl WorkerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn worker_id(&self) -> &str {
        &self.shared.cfg.worker_id
    }

    pub fn running_tasks(&self) -> usize {
        self.shared.state.lock().unwrap().running.len()
    }

    pub fn heartbeats_sent(&self) -> u64 {
        self.shared.state.lock().unwrap().heartbeats_sent
    }

    pub fn supervisor(&self) -> Option<SocketAddr> {
        self.shared.supervisor()
    }

    /// Kills running task process groups and joins all threads.
    pub fn stop(self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for r in self.shared.state.lock().unwrap().running.values() {
            r.control.cancel();
        }
        for t in self.threads {
            let _ = t.join();
        }
    }
}

pub fn spawn_worker(cfg: WorkerConfig) -> io::Result<WorkerHandle> {
    if cfg.slots == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "slots must be at least 1"));
    }
    std::fs::create_dir_all(&cfg.workspace_root)?;
    let listener = TcpListener::bind(cfg.listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let beacon_socket = match cfg.supervisor {
        Some(_) => None,
        None => Some(bind_beacon_socket(cfg.beacon_port)?),
    };
    let perf = match cfg.perf_override {
        Some(p) => p,
        None => measure_performance().map_err(|e| io::Error::other(e.to_string()))?,
    };
    info!(worker_id = %cfg.worker_id, %addr, perf, "worker started");

    let shared = Arc::new(Shared {
        state: Mutex::new(State {
            supervisor: cfg.supervisor,
            last_contact: Instant::now(),
            perf,
            running: HashMap::new(),
            heartbeats_sent: 0,
        }),
        cfg,
        port: addr.port(),
        shutdown: AtomicBool::new(false),
    });

    let mut threads = Vec::new();
    let s = Arc::clone(&shared);
    threads.push(std::thread::Builder::new().name("heartbeat".into()).spawn(move || heartbeat_loop(&s))?);
    let s = Arc::clone(&shared);
    threads.push(std::thread::Builder::new().name("accept".into()).spawn(move || accept_loop(&s, listener))?);
    if let Some(sock) = beacon_socket {
        let s = Arc::clone(&shared);
        threads.push(std::thread::Builder::new().name("beacon-listener".into()).spawn(move || beacon_loop(&s, sock))?);
    }
    if shared.cfg.perf_override.is_none() {
        let s = Arc::clone(&shared);
        threads.push(std::thread::Builder::new().name("perf".into()).spawn(move || perf_loop(&s))?);
    }
    Ok(WorkerHandle { shared, addr, threads })
}

/// Runs a worker until `stop` becomes true.
pub fn worker_loop(cfg: WorkerConfig, stop: &AtomicBool) -> io::Result<()> {
    let handle = spawn_worker(cfg)?;
    while !stop.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    handle.stop();
    Ok(())
}

fn bind_beacon_socket(port: u16) -> io::Result<UdpSocket> {
    use socket2::{Domain, Protocol, Socket, Type};
    let sock = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    sock.set_reuse_address(true)?;
    sock.set_reuse_port(true)?;
    sock.set_broadcast(true)?;
    sock.bind(&SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), port).into())?;
    let sock: UdpSocket = sock.into();
    sock.set_read_timeout(Some(Duration::from_millis(200)))?;
    Ok(sock)
}

fn beacon_loop(shared: &Shared, sock: UdpSocket) {
    let mut buf = [0u8; 1024];
    while !shared.stopping() {
        let (n, from) = match sock.recv_from(&mut buf) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let Ok(beacon) = decode_beacon(&buf[..n]) else {
            debug!(%from, "ignoring malformed beacon");
            continue;
        };
        let ip = beacon.supervisor_host.parse::<IpAddr>().ok().filter(|ip| !ip.is_unspecified()).unwrap_or(from.ip());
        let addr = SocketAddr::new(ip, beacon.supervisor_port);
        let mut st = shared.state.lock().unwrap();
        if st.supervisor != Some(addr) {
            info!(%addr, "discovered supervisor");
        }
        st.supervisor = Some(addr);
        st.last_contact = Instant::now();
    }
}

fn heartbeat_loop(shared: &Shared) {
    let sock = match UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0)) {
        Ok(s) => s,
        Err(e) => {
            warn!("heartbeat socket: {e}");
            return;
        }
    };
    let interval = shared.cfg.heartbeat_interval;
    let lost_after = interval * 5;
    let mut seq = 0u64;
    let mut rtt_sample = 0.0;
    let mut next_send = Instant::now();
    let mut known: Option<SocketAddr> = None;
    while !shared.stopping() {
        let sup = {
            let mut st = shared.state.lock().unwrap();
            if shared.cfg.supervisor.is_none() && st.supervisor.is_some() && st.last_contact.elapsed() > lost_after {
                warn!("supervisor silent, returning to discovery");
                st.supervisor = None;
            }
            st.supervisor
        };
        if sup != known {
            // New supervisor: heartbeat immediately.
            known = sup;
            next_send = Instant::now();
        }
        let Some(sup) = sup else {
            std::thread::sleep(Duration::from_millis(20));
            continue;
        };
        if Instant::now() < next_send {
            std::thread::sleep(Duration::from_millis(20));
            continue;
        }
        seq += 1;
        let hb = {
            let st = shared.state.lock().unwrap();
            let busy = st.running.len() as u32;
            Heartbeat {
                worker_id: shared.cfg.worker_id.clone(),
                seq,
                perf: st.perf,
                net_rtt_sample: rtt_sample,
                load: current_load(),
                slots: shared.cfg.slots,
                slots_free: shared.cfg.slots.saturating_sub(busy),
                worker_port: shared.port,
            }
        };
        let target = SocketAddr::new(sup.ip(), sup.port().wrapping_add(1));
        let sent_at = Instant::now();
        next_send = sent_at + interval;
        if sock.send_to(&hb.encode(), target).is_err() {
            continue;
        }
        shared.state.lock().unwrap().heartbeats_sent += 1;
        let wait = interval.min(Duration::from_secs(1));
        let _ = sock.set_read_timeout(Some(Duration::from_millis(50)));
        let mut buf = [0u8; 256];
        while sent_at.elapsed() < wait && !shared.stopping() {
            if let Ok((n, _)) = sock.recv_from(&mut buf) {
                if HeartbeatAck::decode(&buf[..n]).is_some_and(|a| a.seq == seq) {
                    rtt_sample = sent_at.elapsed().as_secs_f64().max(1e-6);
                    shared.state.lock().unwrap().last_contact = Instant::now();
                    break;
                }
            }
        }
    }
}

fn perf_loop(shared: &Shared) {
    let mut last = Instant::now();
    while !shared.stopping() {
        std::thread::sleep(Duration::from_millis(200));
        if last.elapsed() < PERF_INTERVAL {
            continue;
        }
        last = Instant::now();
        if let Ok(p) = measure_performance() {
            shared.state.lock().unwrap().perf = p;
        }
    }
}

fn accept_loop(shared: &Arc<Shared>, listener: TcpListener) {
    while !shared.stopping() {
        match listener.accept() {
            Ok((stream, peer)) => {
                let s = Arc::clone(shared);
                std::thread::spawn(move || {
                    if let Err(e) = handle_connection(&s, stream) {
                        debug!(%peer, "connection error: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }
}

fn handle_connection(shared: &Arc<Shared>, mut stream: TcpStream) -> Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    let env = recv_frame(&mut stream)?;
    match env.kind {
        FrameType::Assign => handle_assign(shared, &mut stream, env),
        FrameType::Cancel => {
            let task_id = env.task_id.clone().unwrap_or_default();
            let attempt = serde_json::from_slice::<CancelBody>(&env.body).ok().and_then(|b| b.attempt);
            let st = shared.state.lock().unwrap();
            if let Some(r) = st.running.get(&task_id) {
                if attempt.is_none_or(|a| a == r.attempt) {
                    info!(task_id, attempt = r.attempt, "cancelling task");
                    r.control.cancel();
                }
            }
            drop(st);
            send_frame(&mut stream, &Envelope::ack(env.task_id.as_deref()))?;
            Ok(())
        }
        other => {
            send_frame(&mut stream, &Envelope::error(env.task_id.as_deref(), &format!("unexpected {other:?}")))?;
            Ok(())
        }
    }
}

fn handle_assign(
    shared: &Arc<Shared>,
    stream: &mut TcpStream,
    env: Envelope,
) -> Result<(), Box<dyn std::error::Error>> {
    let task_id = env.task_id.clone().unwrap_or_default();
    let ws = match TaskWorkspace::create(&shared.cfg.workspace_root, &env.body) {
        Ok(ws) => ws,
        Err(e) => {
            send_frame(stream, &Envelope::error(Some(&task_id), &e.to_string()))?;
            return Ok(());
        }
    };
    let control = Arc::new(ExecControl::new());
    {
        let mut st = shared.state.lock().unwrap();
        if st.running.len() >= shared.cfg.slots as usize || st.running.contains_key(&ws.manifest.task_id) {
            drop(st);
            ws.remove();
            send_frame(stream, &Envelope::error(Some(&task_id), "no free slot"))?;
            return Ok(());
        }
        st.running.insert(
            ws.manifest.task_id.clone(),
            Running { attempt: ws.manifest.attempt, control: Arc::clone(&control) },
        );
    }
    send_frame(stream, &Envelope::ack(Some(&task_id)))?;
    info!(task_id = %ws.manifest.task_id, attempt = ws.manifest.attempt, "task accepted");
    let s = Arc::clone(shared);
    std::thread::spawn(move || run_assignment(&s, ws, control));
    Ok(())
}

fn run_assignment(shared: &Shared, ws: TaskWorkspace, control: Arc<ExecControl>) {
    let task_id = ws.manifest.task_id.clone();
    let outcome = execute_task(&ws, &control);
    match outcome {
        Ok(result) => {
            info!(task_id, status = result.status.as_str(), wall_s = result.wall_s, "task finished");
            match pack_result_archive(&result) {
                Ok(body) => push_result(shared, &task_id, body),
                Err(e) => warn!(task_id, "packing result failed: {e}"),
            }
        }
        Err(WorkerError::Cancelled) => info!(task_id, "task cancelled, result discarded"),
        Err(e) => warn!(task_id, "task failed to run: {e}"),
    }
    shared.state.lock().unwrap().running.remove(&task_id);
    ws.remove();
}

/// Pushes a RESULT frame to the supervisor, retrying with backoff.
fn push_result(shared: &Shared, task_id: &str, body: Vec<u8>) {
    let env = Envelope::new(FrameType::Result, Some(task_id), body);
    let mut backoff = Duration::from_millis(100);
    let deadline = Instant::now() + Duration::from_secs(120);
    while Instant::now() < deadline && !shared.stopping() {
        if let Some(addr) = shared.supervisor() {
            let attempt = TcpStream::connect_timeout(&addr, Duration::from_secs(5)).and_then(|mut s| {
                s.set_read_timeout(Some(IO_TIMEOUT))?;
                send_frame(&mut s, &env).map_err(io::Error::other)?;
                recv_frame(&mut s).map_err(io::Error::other)
            });
            match attempt {
                Ok(reply) if reply.kind == FrameType::Ack => return,
                Ok(reply) => {
                    warn!(task_id, "supervisor refused result: {}", reply.body_text());
                    return;
                }
                Err(e) => debug!(task_id, "result push failed: {e}"),
            }
        }
        std::thread::sleep(backoff);
        backoff = (backoff * 2).min(Duration::from_secs(5));
    }
    warn!(task_id, "giving up on result push");
}
