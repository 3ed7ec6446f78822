//! The coordinator: discovers workers, maps ready tasks onto them, collects
//! results, steers execution at checkpoints and collates the final output.

mod programs;
mod registry;
mod report;
mod service;
mod state;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

pub use programs::{ProgramRun, StagedProgram};
pub use registry::{Registry, WorkerEntry};
pub use report::{Event, EventKind, ProblemReport, ProblemStats, ReportOutcome, TaskReport};
pub use service::{submit_problem, SubmitError, Supervisor};
pub use state::{
    parse_directive, AttemptRecord, CancelAction, Directive, PlanConfig, ProblemState, ResultOutcome, StateError,
    TaskRecord, TaskStatus, WorkerView,
};

use crate::transport::{BEACON_PORT, HEARTBEAT_INTERVAL, MISSED_INTERVALS, SUPERVISOR_PORT};

#[derive(Debug, thiserror::Error)]
pub enum SupervisorError {
    #[error("no live workers within {0:?}")]
    NoWorkers(Duration),
    #[error("supervisor is already running a problem")]
    Busy,
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SupervisorConfig {
    /// TCP address for RESULT pushes and submissions. Heartbeats arrive on
    /// UDP at the next port up.
    pub listen: SocketAddr,
    /// Where beacons are sent; `None` disables discovery broadcasts.
    pub beacon_target: Option<SocketAddr>,
    /// Host advertised in beacons; an unspecified address tells workers to
    /// use the beacon's source address.
    pub advertise_host: String,
    pub beacon_interval: Duration,
    /// A worker silent for this long is lost.
    pub lost_after: Duration,
    pub plan: PlanConfig,
    pub max_retries: u32,
    pub discovery_timeout: Duration,
    /// Slack added to a dispatch deadline on top of timeout and latency.
    pub deadline_grace: Duration,
    /// Wall-clock limit for one EMP or RCP run.
    pub program_timeout: Duration,
    pub work_dir: PathBuf,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), SUPERVISOR_PORT),
            beacon_target: Some(SocketAddr::new(IpAddr::V4(Ipv4Addr::BROADCAST), BEACON_PORT)),
            advertise_host: "0.0.0.0".into(),
            beacon_interval: HEARTBEAT_INTERVAL,
            lost_after: HEARTBEAT_INTERVAL * MISSED_INTERVALS,
            plan: PlanConfig::default(),
            max_retries: 3,
            discovery_timeout: Duration::from_secs(30),
            deadline_grace: Duration::from_secs(30),
            program_timeout: Duration::from_secs(600),
            work_dir: std::env::temp_dir().join("gridlet-supervisor"),
        }
    }
}
