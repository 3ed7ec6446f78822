use std::collections::{BTreeSet, HashMap};
use std::io;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tracing::{debug, info, warn};

use super::programs::StagedProgram;
use super::registry::{Registry, WorkerEntry};
use super::report::{self, Event, EventKind, ProblemReport, ProblemStats, ReportOutcome};
use super::state::{parse_directive, CancelAction, Directive, ProblemState, ResultOutcome, StateError};
use super::{SupervisorConfig, SupervisorError};
use crate::metrics::estimate_etc;
use crate::pss::{check_relative_path, parse_pss, Problem, PssError};
use crate::transport::{
    encode_beacon, pack_dir_archive, pack_task_archive, recv_frame, send_frame, unpack_dir_archive,
    unpack_result_archive, Beacon, Envelope, FrameType, Heartbeat, HeartbeatAck,
};
use crate::worker::{CancelBody, TaskExecutionResult};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(30);
/// How long a worker that refused an ASSIGN is left out of planning.
const REFUSAL_BACKOFF: Duration = Duration::from_secs(1);
/// Planning also happens this often without any triggering event.
const REPLAN_INTERVAL: Duration = Duration::from_secs(1);

struct Inbound {
    result: TaskExecutionResult,
    bytes: u64,
}

struct Shared {
    cfg: SupervisorConfig,
    port: u16,
    registry: Mutex<Registry>,
    inbox: Mutex<Option<Sender<Inbound>>>,
    run_lock: Mutex<()>,
    shutdown: AtomicBool,
}

impl Shared {
    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }
}

/// A running supervisor: beacon sender, heartbeat listener and TCP listener.
pub struct Supervisor {
    shared: Arc<Shared>,
    addr: SocketAddr,
    heartbeat_addr: SocketAddr,
    threads: Vec<JoinHandle<()>>,
}

/// Binds the TCP listener and the heartbeat socket on the port above it.
fn bind_pair(listen: SocketAddr) -> io::Result<(TcpListener, UdpSocket)> {
    if listen.port() != 0 {
        let tcp = TcpListener::bind(listen)?;
        let udp = UdpSocket::bind(SocketAddr::new(listen.ip(), listen.port().wrapping_add(1)))?;
        return Ok((tcp, udp));
    }
    let mut last = None;
    for _ in 0..32 {
        let tcp = TcpListener::bind(listen)?;
        let port = tcp.local_addr()?.port();
        if port == u16::MAX {
            continue;
        }
        match UdpSocket::bind(SocketAddr::new(listen.ip(), port + 1)) {
            Ok(udp) => return Ok((tcp, udp)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| io::Error::new(io::ErrorKind::AddrInUse, "no free port pair")))
}

impl Supervisor {
    pub fn start(cfg: SupervisorConfig) -> io::Result<Self> {
        std::fs::create_dir_all(&cfg.work_dir)?;
        let (listener, hb_sock) = bind_pair(cfg.listen)?;
        listener.set_nonblocking(true)?;
        hb_sock.set_read_timeout(Some(Duration::from_millis(200)))?;
        let addr = listener.local_addr()?;
        let heartbeat_addr = hb_sock.local_addr()?;
        info!(%addr, %heartbeat_addr, "supervisor listening");
        let shared = Arc::new(Shared {
            port: addr.port(),
            registry: Mutex::new(Registry::default()),
            inbox: Mutex::new(None),
            run_lock: Mutex::new(()),
            shutdown: AtomicBool::new(false),
            cfg,
        });
        let mut threads = Vec::new();
        let s = Arc::clone(&shared);
        threads.push(std::thread::Builder::new().name("heartbeats".into()).spawn(move || heartbeat_loop(&s, hb_sock))?);
        let s = Arc::clone(&shared);
        threads.push(std::thread::Builder::new().name("accept".into()).spawn(move || accept_loop(&s, listener))?);
        if let Some(target) = shared.cfg.beacon_target {
            let sock = UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0))?;
            sock.set_broadcast(true)?;
            let s = Arc::clone(&shared);
            threads
                .push(std::thread::Builder::new().name("beacon".into()).spawn(move || beacon_loop(&s, sock, target))?);
        }
        Ok(Self { shared, addr, heartbeat_addr, threads })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn heartbeat_addr(&self) -> SocketAddr {
        self.heartbeat_addr
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.shared.cfg
    }

    pub fn live_workers(&self) -> Vec<WorkerEntry> {
        let reg = self.shared.registry.lock().unwrap();
        reg.live(self.shared.cfg.lost_after, Instant::now()).into_iter().cloned().collect()
    }

    /// Waits until at least `n` workers are live.
    pub fn wait_for_workers(&self, n: usize, timeout: Duration) -> bool {
        let start = Instant::now();
        while start.elapsed() < timeout {
            if self.live_workers().len() >= n {
                return true;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        self.live_workers().len() >= n
    }

    /// Solves `problem`, writing the report tree under a fresh directory in
    /// the work directory.
    pub fn run_problem(&self, problem: &Problem) -> Result<(ProblemReport, PathBuf), SupervisorError> {
        let dir = self.shared.cfg.work_dir.join(format!(
            "{}-{}",
            sanitize(&problem.name),
            &uuid::Uuid::new_v4().simple().to_string()[..8]
        ));
        let report_dir = dir.join("report");
        let report = run_problem_in(&self.shared, problem, &report_dir, &mut |_| {})?;
        Ok((report, report_dir))
    }

    /// Solves `problem` with the report tree written to `report_dir`,
    /// calling `on_event` for every event as it happens.
    pub fn run_problem_in(
        &self,
        problem: &Problem,
        report_dir: &Path,
        on_event: &mut dyn FnMut(&Event),
    ) -> Result<ProblemReport, SupervisorError> {
        run_problem_in(&self.shared, problem, report_dir, on_event)
    }

    pub fn stop(self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads {
            let _ = t.join();
        }
    }

    /// Runs a supervisor until `stop` becomes true.
    pub fn serve(cfg: SupervisorConfig, stop: &AtomicBool) -> io::Result<()> {
        let sup = Self::start(cfg)?;
        while !stop.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(100));
        }
        sup.stop();
        Ok(())
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(40)
        .collect();
    if s.is_empty() {
        "problem".into()
    } else {
        s
    }
}

fn beacon_loop(shared: &Shared, sock: UdpSocket, target: SocketAddr) {
    let beacon = Beacon { supervisor_host: shared.cfg.advertise_host.clone(), supervisor_port: shared.port };
    let bytes = match encode_beacon(&beacon) {
        Ok(b) => b,
        Err(e) => {
            warn!("cannot encode beacon: {e}");
            return;
        }
    };
    let mut next = Instant::now();
    while !shared.stopping() {
        if Instant::now() >= next {
            if let Err(e) = sock.send_to(&bytes, target) {
                debug!(%target, "beacon send failed: {e}");
            }
            next = Instant::now() + shared.cfg.beacon_interval;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn heartbeat_loop(shared: &Shared, sock: UdpSocket) {
    let mut buf = [0u8; 2048];
    while !shared.stopping() {
        let Ok((n, from)) = sock.recv_from(&mut buf) else { continue };
        let Some(hb) = Heartbeat::decode(&buf[..n]) else {
            debug!(%from, "ignoring malformed heartbeat");
            continue;
        };
        let _ = sock.send_to(&HeartbeatAck { seq: hb.seq }.encode(), from);
        if shared.registry.lock().unwrap().observe(&hb, from, Instant::now()) {
            info!(worker_id = %hb.worker_id, %from, "worker joined");
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
        FrameType::Result => {
            let bytes = env.body.len() as u64;
            let reply = match unpack_result_archive(&env.body) {
                Ok(result) => match shared.inbox.lock().unwrap().as_ref() {
                    Some(tx) if tx.send(Inbound { result, bytes }).is_ok() => Envelope::ack(env.task_id.as_deref()),
                    _ => Envelope::error(env.task_id.as_deref(), "no active problem"),
                },
                Err(e) => Envelope::error(env.task_id.as_deref(), &e.to_string()),
            };
            send_frame(&mut stream, &reply)?;
        }
        FrameType::Assign => handle_submission(shared, &mut stream, env)?,
        other => send_frame(&mut stream, &Envelope::error(env.task_id.as_deref(), &format!("unexpected {other:?}")))?,
    }
    Ok(())
}

/// A submission is an ASSIGN whose task id names the PSS file inside the
/// archived problem directory. Events stream back as ACK frames and the
/// report tree arrives in a final RESULT frame.
fn handle_submission(shared: &Shared, stream: &mut TcpStream, env: Envelope) -> Result<(), Box<dyn std::error::Error>> {
    let pss_name = env.task_id.clone().unwrap_or_default();
    let dir = shared.cfg.work_dir.join(format!("submit-{}", uuid::Uuid::new_v4().simple()));
    let problem_dir = dir.join("problem");
    let report_dir = dir.join("report");
    let result = (|| -> Result<Problem, String> {
        check_relative_path(&pss_name).map_err(|e| e.to_string())?;
        std::fs::create_dir_all(&problem_dir).map_err(|e| e.to_string())?;
        unpack_dir_archive(&env.body, &problem_dir).map_err(|e| e.to_string())?;
        let xml = std::fs::read_to_string(problem_dir.join(&pss_name)).map_err(|e| format!("{pss_name}: {e}"))?;
        parse_pss(&xml, &problem_dir).map_err(|e| e.to_string())
    })();
    let problem = match result {
        Ok(p) => p,
        Err(msg) => {
            send_frame(stream, &Envelope::error(Some(&pss_name), &msg))?;
            let _ = std::fs::remove_dir_all(&dir);
            return Ok(());
        }
    };
    info!(problem = %problem.name, tasks = problem.tasks.len(), "problem submitted");
    // The submitter waits as long as the problem runs.
    stream.set_read_timeout(None)?;
    let mut peer = stream.try_clone()?;
    let mut forward = |ev: &Event| {
        if let Ok(body) = serde_json::to_vec(ev) {
            let _ = send_frame(&mut peer, &Envelope::new(FrameType::Ack, Some(&pss_name), body));
        }
    };
    let reply = match run_problem_in(shared, &problem, &report_dir, &mut forward) {
        Ok(report) => match pack_dir_archive(&report_dir) {
            Ok(body) => Envelope::new(FrameType::Result, Some(report.outcome.label()), body),
            Err(e) => Envelope::error(Some(&pss_name), &format!("packing report: {e}")),
        },
        Err(e) => Envelope::error(Some(&pss_name), &e.to_string()),
    };
    send_frame(stream, &reply)?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn send_assign(addr: SocketAddr, task_id: &str, archive: Vec<u8>) -> Result<(), String> {
    let mut s = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(IO_TIMEOUT)).map_err(|e| e.to_string())?;
    s.set_write_timeout(Some(IO_TIMEOUT)).map_err(|e| e.to_string())?;
    send_frame(&mut s, &Envelope::new(FrameType::Assign, Some(task_id), archive)).map_err(|e| e.to_string())?;
    let reply = recv_frame(&mut s).map_err(|e| e.to_string())?;
    match reply.kind {
        FrameType::Ack => Ok(()),
        _ => Err(reply.body_text()),
    }
}

fn send_cancel(addr: SocketAddr, task_id: &str, attempt: u32) -> Result<(), String> {
    let mut s = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(5))).map_err(|e| e.to_string())?;
    let body = serde_json::to_vec(&CancelBody { attempt: Some(attempt) }).map_err(|e| e.to_string())?;
    send_frame(&mut s, &Envelope::new(FrameType::Cancel, Some(task_id), body)).map_err(|e| e.to_string())?;
    recv_frame(&mut s).map(|_| ()).map_err(|e| e.to_string())
}

struct Run<'a> {
    shared: &'a Shared,
    problem: &'a Problem,
    state: ProblemState,
    report_dir: PathBuf,
    results_dir: PathBuf,
    stage_dir: PathBuf,
    started: Instant,
    events: Vec<Event>,
    on_event: &'a mut dyn FnMut(&Event),
    emp: Option<StagedProgram>,
    task_results: Vec<TaskExecutionResult>,
    bytes_sent: u64,
    bytes_received: u64,
    refused: HashMap<String, Instant>,
}

fn run_problem_in(
    shared: &Shared,
    problem: &Problem,
    report_dir: &Path,
    on_event: &mut dyn FnMut(&Event),
) -> Result<ProblemReport, SupervisorError> {
    let Ok(_guard) = shared.run_lock.try_lock() else {
        return Err(SupervisorError::Busy);
    };
    let cfg = &shared.cfg;
    let start = Instant::now();
    loop {
        let live = shared.registry.lock().unwrap().live(cfg.lost_after, Instant::now()).len();
        if live > 0 {
            break;
        }
        if start.elapsed() >= cfg.discovery_timeout || shared.stopping() {
            return Err(SupervisorError::NoWorkers(cfg.discovery_timeout));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let results_dir = report_dir.join("results");
    std::fs::create_dir_all(&results_dir)?;
    let stage_dir = report_dir.parent().unwrap_or(report_dir).join(format!("stage-{}", uuid::Uuid::new_v4().simple()));
    let (tx, rx) = mpsc::channel();
    *shared.inbox.lock().unwrap() = Some(tx);
    let mut run = Run {
        shared,
        problem,
        state: ProblemState::new(problem, cfg.max_retries),
        report_dir: report_dir.to_path_buf(),
        results_dir,
        stage_dir,
        started: Instant::now(),
        events: Vec::new(),
        on_event,
        emp: None,
        task_results: Vec::new(),
        bytes_sent: 0,
        bytes_received: 0,
        refused: HashMap::new(),
    };
    info!(problem = %problem.name, tasks = problem.tasks.len(), "run started");
    run.drive(&rx);
    *shared.inbox.lock().unwrap() = None;
    let report = run.finish();
    let _ = std::fs::remove_dir_all(&run.stage_dir);
    report.map_err(SupervisorError::Io)
}

impl Run<'_> {
    fn emit(&mut self, kind: EventKind) {
        let ev = Event { seq: self.events.len() as u64 + 1, at_ms: self.started.elapsed().as_millis() as u64, kind };
        debug!(?ev, "event");
        (self.on_event)(&ev);
        self.events.push(ev);
    }

    fn worker_addr(&self, worker_id: &str) -> Option<SocketAddr> {
        self.shared.registry.lock().unwrap().get(worker_id).map(|w| w.addr)
    }

    fn send_cancels(&mut self, actions: Vec<CancelAction>) {
        for a in actions {
            if let Some(addr) = self.worker_addr(&a.worker_id) {
                if let Err(e) = send_cancel(addr, &a.task_id, a.attempt) {
                    debug!(task_id = %a.task_id, "cancel not delivered: {e}");
                }
            }
            self.emit(EventKind::Cancel { task_id: a.task_id, attempt: a.attempt, worker_id: a.worker_id });
        }
    }

    fn note_outcome(&mut self, idx: usize, outcome: ResultOutcome) {
        let task_id = self.state.records[idx].spec.id.clone();
        match outcome {
            ResultOutcome::Completed => {}
            ResultOutcome::Retry(failures) => self.emit(EventKind::Retry { task_id, failures }),
            ResultOutcome::Abandoned => {
                warn!(task_id, "task abandoned");
                self.emit(EventKind::TaskAbandoned { task_id });
            }
        }
    }

    fn drive(&mut self, rx: &Receiver<Inbound>) {
        let cfg = &self.shared.cfg;
        let mut known: BTreeSet<String> = BTreeSet::new();
        let mut no_workers_since: Option<Instant> = None;
        let mut dirty = true;
        let mut last_plan = Instant::now();
        loop {
            if self.state.abandoned.is_some() {
                let cancels = self.state.cancel_all_dispatched();
                self.send_cancels(cancels);
                return;
            }
            if self.state.finished() {
                return;
            }
            if self.shared.stopping() {
                self.state.abandoned = Some("supervisor shutting down".into());
                continue;
            }
            let now = Instant::now();
            let live: BTreeSet<String> = {
                let reg = self.shared.registry.lock().unwrap();
                reg.live(cfg.lost_after, now).into_iter().map(|w| w.worker_id.clone()).collect()
            };
            for w in live.difference(&known) {
                self.emit(EventKind::WorkerJoined { worker_id: w.clone() });
                dirty = true;
            }
            for w in known.difference(&live).cloned().collect::<Vec<_>>() {
                warn!(worker_id = %w, "worker lost");
                self.emit(EventKind::WorkerLost { worker_id: w.clone() });
                for idx in self.state.dispatched_on(&w) {
                    if let Some(o) = self.state.fail_dispatch(idx, "LOST", format!("worker {w} lost")) {
                        self.note_outcome(idx, o);
                    }
                }
                dirty = true;
            }
            known = live;
            if known.is_empty() {
                let since = *no_workers_since.get_or_insert(now);
                if now.duration_since(since) >= cfg.discovery_timeout {
                    self.state.abandoned = Some("no live workers".into());
                    continue;
                }
            } else {
                no_workers_since = None;
            }
            for idx in self.state.overdue(now) {
                let task_id = self.state.records[idx].spec.id.clone();
                let attempt = self.state.records[idx].dispatches;
                self.emit(EventKind::DeadlineMissed { task_id: task_id.clone(), attempt });
                if let Some((w, a)) = match &self.state.records[idx].status {
                    super::TaskStatus::Dispatched { worker_id, attempt } => Some((worker_id.clone(), *attempt)),
                    _ => None,
                } {
                    self.send_cancels(vec![CancelAction { task_id: task_id.clone(), attempt: a, worker_id: w }]);
                }
                if let Some(o) = self.state.fail_dispatch(idx, "TIMEOUT", "dispatch deadline missed".into()) {
                    self.note_outcome(idx, o);
                }
                dirty = true;
            }
            if self.state.abandoned.is_some() {
                continue;
            }
            if dirty || last_plan.elapsed() >= REPLAN_INTERVAL {
                self.dispatch();
                dirty = false;
                last_plan = Instant::now();
            }
            match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(inb) => {
                    self.on_result(inb);
                    while let Ok(inb) = rx.try_recv() {
                        self.on_result(inb);
                    }
                    dirty = true;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
        }
    }

    fn dispatch(&mut self) {
        let cfg = &self.shared.cfg;
        let now = Instant::now();
        self.refused.retain(|_, until| *until > now);
        let views: Vec<_> = {
            let reg = self.shared.registry.lock().unwrap();
            reg.live_views(cfg.lost_after, now)
                .into_iter()
                .filter(|w| !self.refused.contains_key(&w.worker_id))
                .collect()
        };
        let plan = self.state.plan_dispatch(&views, &cfg.plan, now);
        for (idx, worker_id) in plan {
            let Some(view) = views.iter().find(|w| w.worker_id == worker_id) else { continue };
            let Some(addr) = self.worker_addr(&worker_id) else { continue };
            let spec = self.state.records[idx].spec.clone();
            let estimate =
                estimate_etc(std::slice::from_ref(&spec), std::slice::from_ref(&view.metrics), &cfg.plan.etc_model)
                    .map(|e| e.get(0, 0))
                    .unwrap_or(0.0);
            let deadline = Duration::from_secs(spec.timeout_s)
                + Duration::from_secs_f64((2.0 * view.metrics.net).clamp(0.0, 3600.0))
                + cfg.deadline_grace;
            let attempt = self.state.mark_dispatched(idx, &worker_id, estimate, deadline, Instant::now());
            let archive = match pack_task_archive(&spec, attempt, &self.problem.base_dir) {
                Ok(a) => a,
                Err(e) => {
                    warn!(task_id = %spec.id, "cannot pack task: {e}");
                    if let Some(o) = self.state.fail_dispatch(idx, "PACK_ERROR", e.to_string()) {
                        self.note_outcome(idx, o);
                    }
                    continue;
                }
            };
            let len = archive.len() as u64;
            match send_assign(addr, &spec.id, archive) {
                Ok(()) => {
                    self.bytes_sent += len;
                    info!(task_id = %spec.id, attempt, worker_id, "assigned");
                    self.emit(EventKind::Assign { task_id: spec.id.clone(), attempt, worker_id });
                }
                Err(reason) => {
                    debug!(task_id = %spec.id, worker_id, "assign refused: {reason}");
                    self.state.revert_dispatch(idx);
                    self.refused.insert(worker_id.clone(), Instant::now() + REFUSAL_BACKOFF);
                    self.emit(EventKind::AssignRefused { task_id: spec.id.clone(), attempt, worker_id, reason });
                }
            }
        }
    }

    fn on_result(&mut self, inb: Inbound) {
        let r = inb.result;
        let Some(idx) = self.state.index(&r.task_id) else {
            debug!(task_id = %r.task_id, "result for unknown task");
            return;
        };
        let worker_id = match &self.state.records[idx].status {
            super::TaskStatus::Dispatched { worker_id, .. } => worker_id.clone(),
            _ => String::new(),
        };
        match self.state.handle_result(r.clone()) {
            Err(StateError::StaleResult { task_id, attempt }) => {
                debug!(task_id, attempt, "stale result ignored");
                self.emit(EventKind::StaleResult { task_id, attempt });
            }
            Err(StateError::UnknownTask(_)) => {}
            Ok(outcome) => {
                self.bytes_received += inb.bytes;
                if let Err(e) = report::store_result(&self.results_dir, &r) {
                    warn!(task_id = %r.task_id, "storing result failed: {e}");
                }
                info!(task_id = %r.task_id, attempt = r.attempt, status = r.status.as_str(), "result");
                self.emit(EventKind::Result {
                    task_id: r.task_id.clone(),
                    attempt: r.attempt,
                    worker_id,
                    status: r.status.as_str().into(),
                });
                let completed = outcome == ResultOutcome::Completed;
                self.note_outcome(idx, outcome);
                self.task_results.push(r.clone());
                if completed {
                    let _ = report::set_latest(&self.results_dir, &r.task_id, Some(r.attempt));
                    if self.state.records[idx].spec.is_checkpoint && self.problem.emp.is_some() {
                        self.fire_checkpoint(&r.task_id);
                    }
                }
            }
        }
    }

    fn run_emp(&mut self, checkpoint: &str) -> Result<Directive, String> {
        if self.emp.is_none() {
            let spec = self.problem.emp.as_ref().ok_or("no EMP configured")?;
            let staged = StagedProgram::stage(
                spec,
                &self.problem.base_dir,
                &self.stage_dir.join("emp"),
                &[&self.report_dir, &self.stage_dir],
                self.shared.cfg.program_timeout,
            )
            .map_err(|e| format!("staging EMP: {e}"))?;
            self.emp = Some(staged);
        }
        let results = self.results_dir.clone();
        let emp = self.emp.as_mut().expect("staged above");
        let run = emp.run(&results, &[("GRIDLET_CHECKPOINT", checkpoint)])?;
        if !run.success() {
            return Err(format!("EMP exited with {:?}: {}", run.exit_code, run.stderr.trim()));
        }
        parse_directive(&run.stdout)
    }

    /// Pauses dispatching, runs the EMP and applies its directive.
    fn fire_checkpoint(&mut self, checkpoint: &str) {
        self.state.paused = true;
        self.emit(EventKind::EmpStart { checkpoint: checkpoint.into() });
        let directive = self.run_emp(checkpoint).unwrap_or_else(|reason| {
            warn!(checkpoint, "EMP failed, continuing: {reason}");
            self.emit(EventKind::EmpFailed { reason });
            Directive::Continue
        });
        info!(checkpoint, ?directive, "applying directive");
        let (cancels, unknown) = self.state.apply_directive(&directive);
        for id in &unknown {
            warn!(task_id = %id, "directive names unknown task");
        }
        for r in &self.state.records {
            if r.status != super::TaskStatus::Completed {
                let _ = report::set_latest(&self.results_dir, &r.spec.id, None);
            }
        }
        self.send_cancels(cancels);
        self.emit(EventKind::DirectiveApplied { directive, unknown });
        self.state.paused = false;
    }

    fn finish(&mut self) -> io::Result<ProblemReport> {
        let mut problem_output = None;
        let mut rcp_stderr = None;
        let outcome = if let Some(reason) = self.state.abandoned.clone() {
            ReportOutcome::Abandoned { reason }
        } else {
            for r in &self.state.records {
                if r.status == super::TaskStatus::Stopped {
                    let dir = self.results_dir.join(&r.spec.id);
                    if dir.exists() {
                        std::fs::remove_dir_all(dir)?;
                    }
                }
            }
            self.emit(EventKind::RcpStart);
            match self.run_rcp() {
                Ok(()) => {
                    problem_output = Some("output".to_string());
                    ReportOutcome::Solved
                }
                Err((reason, stderr)) => {
                    warn!("RCP failed: {reason}");
                    rcp_stderr = stderr;
                    ReportOutcome::RcpFailed { reason }
                }
            }
        };
        self.emit(EventKind::Finished { outcome: outcome.label().into() });
        let stats = ProblemStats {
            total_wall_s: self.task_results.iter().map(|r| r.wall_s).sum(),
            total_cpu_s: self.task_results.iter().map(|r| r.cpu_s).sum(),
            per_worker: self.state.per_worker_completed(),
            retries: self.state.retries,
            bytes_sent: self.bytes_sent,
            bytes_received: self.bytes_received,
            abandoned: matches!(outcome, ReportOutcome::Abandoned { .. }),
        };
        let report = ProblemReport {
            problem: self.problem.name.clone(),
            outcome,
            problem_output,
            tasks: report::task_reports(&self.state),
            task_results: self.task_results.clone(),
            stats,
            rcp_stderr,
            events: self.events.clone(),
        };
        report.write(&self.report_dir)?;
        info!(problem = %report.problem, outcome = report.outcome.label(), "run finished");
        Ok(report)
    }

    fn run_rcp(&mut self) -> Result<(), (String, Option<String>)> {
        let mut rcp = StagedProgram::stage(
            &self.problem.rcp,
            &self.problem.base_dir,
            &self.stage_dir.join("rcp"),
            &[&self.report_dir, &self.stage_dir],
            self.shared.cfg.program_timeout,
        )
        .map_err(|e| (format!("staging RCP: {e}"), None))?;
        let run = rcp.run(&self.results_dir, &[]).map_err(|e| (e, None))?;
        self.emit(EventKind::RcpFinished { exit_code: run.exit_code });
        let _ = std::fs::write(self.report_dir.join("rcp.stdout"), &run.stdout);
        let _ = std::fs::write(self.report_dir.join("rcp.stderr"), &run.stderr);
        if !run.success() {
            return Err((format!("RCP exited with {:?}", run.exit_code), Some(run.stderr)));
        }
        let output = self.report_dir.join("output");
        std::fs::create_dir_all(&output).map_err(|e| (e.to_string(), None))?;
        let out = rcp.dir().join("out");
        if out.is_dir() {
            report::copy_dir(&out, &output).map_err(|e| (format!("collecting RCP output: {e}"), None))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("cannot reach supervisor at {addr}: {source}")]
    ConnectFailed { addr: SocketAddr, source: io::Error },
    #[error("{0}")]
    ValidationFailed(#[from] PssError),
    #[error("supervisor rejected the problem: {0}")]
    Rejected(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

/// Uploads the problem described by `pss_path` (with its whole directory),
/// streams events to `on_event` and unpacks the report into `report_dir`.
pub fn submit_problem(
    pss_path: &Path,
    supervisor: SocketAddr,
    report_dir: &Path,
    on_event: &mut dyn FnMut(&Event),
) -> Result<ProblemReport, SubmitError> {
    let xml = std::fs::read_to_string(pss_path).map_err(|_| PssError::FileNotFound(pss_path.display().to_string()))?;
    let base = match pss_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    parse_pss(&xml, &base)?;
    let name = pss_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| SubmitError::Protocol("PSS path has no file name".into()))?;
    let body = pack_dir_archive(&base).map_err(|e| SubmitError::Protocol(e.to_string()))?;

    let mut stream = TcpStream::connect_timeout(&supervisor, CONNECT_TIMEOUT)
        .map_err(|source| SubmitError::ConnectFailed { addr: supervisor, source })?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    send_frame(&mut stream, &Envelope::new(FrameType::Assign, Some(name), body))
        .map_err(|e| SubmitError::Protocol(e.to_string()))?;
    loop {
        let env = recv_frame(&mut stream).map_err(|e| SubmitError::Protocol(e.to_string()))?;
        match env.kind {
            FrameType::Ack => match serde_json::from_slice::<Event>(&env.body) {
                Ok(ev) => on_event(&ev),
                Err(e) => debug!("unparseable status frame: {e}"),
            },
            FrameType::Error => return Err(SubmitError::Rejected(env.body_text())),
            FrameType::Result => {
                if report_dir.exists() {
                    std::fs::remove_dir_all(report_dir)?;
                }
                std::fs::create_dir_all(report_dir)?;
                unpack_dir_archive(&env.body, report_dir).map_err(|e| SubmitError::Protocol(e.to_string()))?;
                return Ok(ProblemReport::read(report_dir)?);
            }
            other => return Err(SubmitError::Protocol(format!("unexpected {other:?} frame"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Heartbeat;

    fn test_config(work: &Path) -> SupervisorConfig {
        SupervisorConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            beacon_target: None,
            work_dir: work.to_path_buf(),
            discovery_timeout: Duration::from_millis(300),
            ..SupervisorConfig::default()
        }
    }

    #[test]
    fn heartbeats_register_workers_and_get_acks() {
        let work = tempfile::tempdir().unwrap();
        let sup = Supervisor::start(test_config(work.path())).unwrap();
        assert_eq!(sup.heartbeat_addr().port(), sup.local_addr().port() + 1);
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let hb = Heartbeat {
            worker_id: "w1".into(),
            seq: 7,
            perf: 100.0,
            net_rtt_sample: 0.0,
            load: 0.0,
            slots: 1,
            slots_free: 1,
            worker_port: 5555,
        };
        sock.send_to(&hb.encode(), sup.heartbeat_addr()).unwrap();
        let mut buf = [0u8; 128];
        let (n, _) = sock.recv_from(&mut buf).unwrap();
        assert_eq!(HeartbeatAck::decode(&buf[..n]).unwrap().seq, 7);
        assert!(sup.wait_for_workers(1, Duration::from_secs(2)));
        assert_eq!(sup.live_workers()[0].addr.port(), 5555);
        sup.stop();
    }

    #[test]
    fn no_workers_is_an_error() {
        let work = tempfile::tempdir().unwrap();
        std::fs::write(work.path().join("a.sh"), "true").unwrap();
        let problem = parse_pss(
            r#"<problem name="p"><tasks><task id="a" timeout="5"><file>a.sh</file><execute>sh a.sh</execute></task></tasks>
               <rcp><execute>true</execute></rcp></problem>"#,
            work.path(),
        )
        .unwrap();
        let sup = Supervisor::start(test_config(&work.path().join("sup"))).unwrap();
        let started = Instant::now();
        assert!(matches!(sup.run_problem(&problem), Err(SupervisorError::NoWorkers(_))));
        assert!(started.elapsed() >= Duration::from_millis(300));
        sup.stop();
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize("my problem/1"), "my_problem_1");
        assert_eq!(sanitize(""), "problem");
    }
}
