//! Command-line front end: `gridlet supervisor | worker | submit | bench`.

use std::ffi::OsString;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tracing::error;

use crate::bench::{self, BenchSuite, EtcClass};
use crate::metrics::EtcModel;
use crate::sched::{makespan, GaConfig, Heuristic, ReadyTimes, DEFAULT_SEGMENTS};
use crate::supervisor::{submit_problem, Event, EventKind, PlanConfig, ReportOutcome, Supervisor, SupervisorConfig};
use crate::transport::BEACON_PORT;
use crate::worker::{worker_loop, WorkerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABANDONED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridlet", version, about = "Lightweight grid computing over a local network")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// Machine-readable status output (JSON lines on stdout).
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the coordinator: discovery beacons, heartbeats, dispatch.
    Supervisor(SupervisorArgs),
    /// Run a worker agent.
    Worker(WorkerArgs),
    /// Upload a problem to a supervisor and download its report.
    Submit(SubmitArgs),
    /// Compare the mapping heuristics on generated ETC matrices.
    Bench(BenchArgs),
}

/// Accepts `port`, `host:port` or `ip:port`.
fn parse_endpoint(s: &str, default_host: &str) -> Result<SocketAddr, String> {
    let candidate = if s.parse::<u16>().is_ok() { format!("{default_host}:{s}") } else { s.to_string() };
    candidate
        .to_socket_addrs()
        .map_err(|e| format!("`{s}`: {e}"))?
        .find(SocketAddr::is_ipv4)
        .ok_or_else(|| format!("`{s}` does not resolve to an IPv4 address"))
}

fn listen_addr(s: &str) -> Result<SocketAddr, String> {
    parse_endpoint(s, "0.0.0.0")
}

fn remote_addr(s: &str) -> Result<SocketAddr, String> {
    parse_endpoint(s, "127.0.0.1")
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("`{s}` is not a probability in [0, 1]")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct GaArgs {
    /// GA population size.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(4..))]
    pub ga_population: u64,
    /// GA crossover probability.
    #[arg(long, default_value_t = 0.6, value_parser = probability)]
    pub ga_crossover: f64,
    /// GA mutation probability.
    #[arg(long, default_value_t = 0.4, value_parser = probability)]
    pub ga_mutation: f64,
    /// GA generation limit.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub ga_generations: u64,
    /// Stop the GA after this many generations without improvement.
    #[arg(long, default_value_t = 150, value_parser = clap::value_parser!(u64).range(1..))]
    pub ga_stagnation: u64,
    /// GA random seed.
    #[arg(long)]
    pub ga_seed: Option<u64>,
}

impl GaArgs {
    pub fn config(&self) -> GaConfig {
        let mut cfg = GaConfig {
            population: self.ga_population as usize,
            crossover_prob: self.ga_crossover,
            mutation_prob: self.ga_mutation,
            max_generations: self.ga_generations as usize,
            stagnation_limit: self.ga_stagnation as usize,
            ..GaConfig::default()
        };
        if let Some(seed) = self.ga_seed {
            cfg.rng_seed = seed;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct SupervisorArgs {
    /// TCP port or address for results and submissions; heartbeats use the next UDP port.
    #[arg(long, default_value = "47100", value_parser = listen_addr)]
    pub listen: SocketAddr,
    /// UDP port workers listen on for beacons.
    #[arg(long, default_value_t = BEACON_PORT)]
    pub beacon_port: u16,
    /// Beacon destination address.
    #[arg(long, default_value = "255.255.255.255")]
    pub beacon_addr: std::net::Ipv4Addr,
    /// Do not send discovery beacons (workers must use --supervisor).
    #[arg(long)]
    pub no_beacon: bool,
    /// Host advertised in beacons; by default workers use the beacon's source address.
    #[arg(long, default_value = "0.0.0.0")]
    pub advertise: String,
    /// Mapping heuristic: mct, minmin, sufferage, segminmin, segsympathy or ga.
    #[arg(long, default_value = "ga")]
    pub scheduler: Heuristic,
    /// Segment count for the segmented heuristics.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub segments: u64,
    #[command(flatten)]
    pub ga: GaArgs,
    /// Failures tolerated per task before the problem is abandoned.
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// Mflop per unit of task work hint.
    #[arg(long, default_value_t = 100.0, value_parser = positive_f64)]
    pub calibration: f64,
    /// Assumed payload transfer rate, bytes per second.
    #[arg(long, default_value_t = 10e6, value_parser = positive_f64)]
    pub bandwidth: f64,
    /// Seconds to wait for a first worker before a problem fails.
    #[arg(long, default_value_t = 30)]
    pub discovery_timeout: u64,
    /// Seconds added to every dispatch deadline.
    #[arg(long, default_value_t = 30)]
    pub deadline_grace: u64,
    /// Directory for submitted problems and reports.
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// TCP port or address accepting assignments.
    #[arg(long, default_value = "47200", value_parser = listen_addr)]
    pub listen: SocketAddr,
    /// Supervisor address (host:port); skips beacon discovery.
    #[arg(long, value_parser = remote_addr)]
    pub supervisor: Option<SocketAddr>,
    /// Concurrent task slots.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub slots: u32,
    /// UDP port to listen on for beacons.
    #[arg(long, default_value_t = BEACON_PORT)]
    pub beacon_port: u16,
    /// Root directory for task workspaces.
    #[arg(long, default_value = "/tmp/gridlet-worker")]
    pub workspace: PathBuf,
    /// Worker identifier (random by default).
    #[arg(long)]
    pub id: Option<String>,
    /// Fixed performance figure in Mflop/s instead of running the benchmark.
    #[arg(long, value_parser = positive_f64)]
    pub perf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    /// Problem Solving Schema file; its directory is uploaded.
    pub pss: PathBuf,
    /// Supervisor address (host:port).
    #[arg(long, default_value = "127.0.0.1:47100", value_parser = remote_addr)]
    pub supervisor: SocketAddr,
    /// Where the report is written.
    #[arg(long, default_value = "gridlet-report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Tasks per instance.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub t: u64,
    /// Machines per instance.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Instances per ETC class.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub instances: u64,
    /// Suite seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use 512 tasks on 16 machines.
    #[arg(long)]
    pub large: bool,
    /// Also brute-force the optimum and check every heuristic against it.
    #[arg(long)]
    pub oracle: bool,
    /// Restrict to these classes (e.g. u_c_hihi); repeatable.
    #[arg(long = "class")]
    pub classes: Vec<String>,
    /// Segment count for the segmented heuristics.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub segments: u64,
    #[command(flatten)]
    pub ga: GaArgs,
    /// CSV output path.
    #[arg(long, default_value = "bench.csv")]
    pub csv: PathBuf,
    /// Evaluate a single instance file (`t m` then rows) instead of a suite.
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_signal_handlers() {
    // SAFETY: the handler only stores to an atomic.
    unsafe {
        libc::signal(libc::SIGINT, on_signal as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_signal as *const () as libc::sighandler_t);
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(format!("gridlet={level}")));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match cli.command {
        Command::Supervisor(a) => cmd_supervisor(a),
        Command::Worker(a) => cmd_worker(a),
        Command::Submit(a) => cmd_submit(a, cli.json),
        Command::Bench(a) => cmd_bench(a),
    }
}

pub fn cmd_supervisor(a: SupervisorArgs) -> i32 {
    let ga = a.ga.config();
    if let Err(e) = ga.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let mut cfg = SupervisorConfig {
        listen: a.listen,
        beacon_target: (!a.no_beacon).then_some(SocketAddr::new(a.beacon_addr.into(), a.beacon_port)),
        advertise_host: a.advertise,
        plan: PlanConfig {
            scheduler: a.scheduler,
            n_segments: a.segments as usize,
            ga,
            etc_model: EtcModel { calibration: a.calibration, bandwidth: a.bandwidth },
        },
        max_retries: a.max_retries,
        discovery_timeout: Duration::from_secs(a.discovery_timeout),
        deadline_grace: Duration::from_secs(a.deadline_grace),
        ..SupervisorConfig::default()
    };
    if let Some(dir) = a.work_dir {
        cfg.work_dir = dir;
    }
    install_signal_handlers();
    match Supervisor::serve(cfg, &INTERRUPTED) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("supervisor failed: {e}");
            eprintln!("error: cannot start supervisor on {}: {e}", a.listen);
            EXIT_FAILURE
        }
    }
}

pub fn cmd_worker(a: WorkerArgs) -> i32 {
    let mut cfg = WorkerConfig {
        listen: a.listen,
        beacon_port: a.beacon_port,
        supervisor: a.supervisor,
        slots: a.slots,
        workspace_root: a.workspace,
        perf_override: a.perf,
        ..WorkerConfig::default()
    };
    if let Some(id) = a.id {
        cfg.worker_id = id;
    }
    install_signal_handlers();
    match worker_loop(cfg, &INTERRUPTED) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: cannot start worker on {}: {e}", a.listen);
            EXIT_FAILURE
        }
    }
}

fn describe(ev: &Event) -> String {
    let t = ev.at_ms as f64 / 1e3;
    let what = match &ev.kind {
        EventKind::WorkerJoined { worker_id } => format!("worker {worker_id} joined"),
        EventKind::WorkerLost { worker_id } => format!("worker {worker_id} lost"),
        EventKind::Assign { task_id, attempt, worker_id } => format!("{task_id} attempt {attempt} -> {worker_id}"),
        EventKind::AssignRefused { task_id, worker_id, reason, .. } => {
            format!("{task_id} refused by {worker_id}: {reason}")
        }
        EventKind::Result { task_id, attempt, status, .. } => format!("{task_id} attempt {attempt}: {status}"),
        EventKind::StaleResult { task_id, attempt } => format!("{task_id} attempt {attempt}: stale result ignored"),
        EventKind::Retry { task_id, failures } => format!("{task_id} will be retried ({failures} failures)"),
        EventKind::DeadlineMissed { task_id, attempt } => format!("{task_id} attempt {attempt} missed its deadline"),
        EventKind::Cancel { task_id, attempt, worker_id } => {
            format!("cancel {task_id} attempt {attempt} on {worker_id}")
        }
        EventKind::TaskAbandoned { task_id } => format!("{task_id} abandoned"),
        EventKind::EmpStart { checkpoint } => format!("checkpoint {checkpoint}: running monitor"),
        EventKind::EmpFailed { reason } => format!("monitor failed, continuing: {reason}"),
        EventKind::DirectiveApplied { directive, unknown } if unknown.is_empty() => format!("directive {directive:?}"),
        EventKind::DirectiveApplied { directive, unknown } => {
            format!("directive {directive:?} (unknown: {})", unknown.join(", "))
        }
        EventKind::RcpStart => "running result compilation".into(),
        EventKind::RcpFinished { exit_code } => format!("result compilation exited with {exit_code:?}"),
        EventKind::Finished { outcome } => format!("finished: {outcome}"),
    };
    format!("[{t:8.3}] {what}")
}

pub fn cmd_submit(a: SubmitArgs, json: bool) -> i32 {
    let mut on_event = |ev: &Event| {
        if json {
            if let Ok(line) = serde_json::to_string(ev) {
                println!("{line}");
            }
        } else {
            eprintln!("{}", describe(ev));
        }
    };
    match submit_problem(&a.pss, a.supervisor, &a.out, &mut on_event) {
        Ok(report) => {
            let code = match &report.outcome {
                ReportOutcome::Solved => EXIT_OK,
                ReportOutcome::Abandoned { .. } => EXIT_ABANDONED,
                ReportOutcome::RcpFailed { .. } => EXIT_FAILURE,
            };
            match &report.outcome {
                ReportOutcome::Solved => eprintln!("solved; report in {}", a.out.display()),
                ReportOutcome::Abandoned { reason } => {
                    eprintln!("abandoned: {reason}; partial report in {}", a.out.display())
                }
                ReportOutcome::RcpFailed { reason } => {
                    eprintln!("result compilation failed: {reason}; report in {}", a.out.display())
                }
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn bench_instance_file(path: &Path, a: &BenchArgs, ga: &GaConfig) -> i32 {
    let etc = match std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| bench::parse_instance(&t).map_err(|e| e.to_string()))
    {
        Ok(etc) => etc,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    };
    let runs = match bench::bench_instance(&etc, ga, (a.segments as usize).min(etc.tasks())) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    println!("{:<12} {:>14} {:>10}", "heuristic", "makespan", "wall_ms");
    for r in &runs {
        println!("{:<12} {:>14.4} {:>10.3}", r.heuristic.name(), r.makespan, r.wall_s * 1e3);
    }
    if a.oracle {
        match bench::brute_force(&etc, &ReadyTimes::zeros(etc.machines())) {
            Ok((_, opt)) => {
                println!("{:<12} {:>14.4}", "optimum", opt);
                if runs.iter().any(|r| r.makespan < opt) {
                    eprintln!("error: a heuristic beat the exhaustive optimum");
                    return EXIT_FAILURE;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
        }
    }
    EXIT_OK
}

pub fn cmd_bench(a: BenchArgs) -> i32 {
    let ga = a.ga.config();
    if let Err(e) = ga.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    if let Some(path) = &a.instance {
        return bench_instance_file(path, &a, &ga);
    }
    let classes = if a.classes.is_empty() {
        EtcClass::all()
    } else {
        match a.classes.iter().map(|c| c.parse::<EtcClass>()).collect::<Result<Vec<_>, _>>() {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    };
    let (t, m) = if a.large { (512, 16) } else { (a.t as usize, a.m as usize) };
    let suite = BenchSuite {
        t,
        m,
        instances: a.instances as usize,
        ga,
        n_segments: a.segments as usize,
        seed: a.seed,
        classes,
    };
    let rows = match bench::run_bench(&suite) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let written = std::fs::File::create(&a.csv)
        .map_err(|e| e.to_string())
        .and_then(|f| bench::write_csv(&rows, std::io::BufWriter::new(f)).map_err(|e| e.to_string()));
    if let Err(e) = written {
        eprintln!("error: writing {}: {e}", a.csv.display());
        return EXIT_FAILURE;
    }
    print!("{}", bench::format_summary(&bench::summarize(&rows)));
    println!("\n{} instances, {} tasks x {} machines; CSV in {}", rows.len(), t, m, a.csv.display());
    if a.oracle {
        let mut checked = 0;
        let mut ga_optimal = 0;
        for row in &rows {
            let etc = match bench::gen_etc(t, m, row.class, row.seed) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_FAILURE;
                }
            };
            let ready = ReadyTimes::zeros(m);
            let opt = match bench::brute_force(&etc, &ready) {
                Ok((map, v)) => {
                    debug_assert_eq!(makespan(&etc, &ready, &map).ok(), Some(v));
                    v
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_FAILURE;
                }
            };
            if let Some(r) = row.runs.iter().find(|r| r.makespan < opt) {
                eprintln!("error: {} beat the optimum on {} seed {}", r.heuristic, row.class, row.seed);
                return EXIT_FAILURE;
            }
            if row.makespan(Heuristic::Ga) == Some(opt) {
                ga_optimal += 1;
            }
            checked += 1;
        }
        println!("oracle: all heuristics >= optimum on {checked} instances; GA optimal on {ga_optimal}");
    }
    EXIT_OK
}
