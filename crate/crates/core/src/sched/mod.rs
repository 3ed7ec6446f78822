//! Static batch-mode mapping of independent tasks onto heterogeneous machines.
//!
//! Every heuristic consumes an [`EtcMatrix`] plus the machines' current
//! [`ReadyTimes`] and produces a [`Mapping`]. The completion time of task `i`
//! on machine `j` is `ready[j] + etc[i][j]`. All ties are broken by lowest
//! task index, then lowest machine index.

mod etc;
mod ga;
mod heuristics;
mod sympathy;

pub use etc::{makespan, EtcMatrix, Mapping, ReadyTimes};
pub use ga::{ga_schedule, ga_schedule_traced, GaConfig, GaTrace};
pub use heuristics::{mct, min_min, sufferage};
pub use sympathy::{segmented_min_min, segmented_sympathy, sympathy, SympathyVector};

use std::fmt;
use std::str::FromStr;

/// Default segment count for the segmented heuristics.
pub const DEFAULT_SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("segment count {n} outside 1..={t}")]
    BadSegmentCount { n: usize, t: usize },
    #[error("bad GA configuration: {0}")]
    BadConfig(String),
    #[error("invalid ETC entry at ({task}, {machine}): {value}")]
    InvalidEntry { task: usize, machine: usize, value: f64 },
    #[error("empty matrix")]
    Empty,
}

/// The selectable mapping heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    Mct,
    MinMin,
    Sufferage,
    SegMinMin,
    SegSympathy,
    Ga,
}

impl Heuristic {
    pub const ALL: [Heuristic; 6] = [
        Heuristic::Mct,
        Heuristic::MinMin,
        Heuristic::Sufferage,
        Heuristic::SegMinMin,
        Heuristic::SegSympathy,
        Heuristic::Ga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Mct => "mct",
            Heuristic::MinMin => "minmin",
            Heuristic::Sufferage => "sufferage",
            Heuristic::SegMinMin => "segminmin",
            Heuristic::SegSympathy => "segsympathy",
            Heuristic::Ga => "ga",
        }
    }

    /// Runs the heuristic. `mct` uses task index order.
    pub fn run(
        self,
        etc: &EtcMatrix,
        ready: &ReadyTimes,
        n_segments: usize,
        ga: &GaConfig,
    ) -> Result<Mapping, SchedError> {
        match self {
            Heuristic::Mct => {
                let order: Vec<usize> = (0..etc.tasks()).collect();
                mct(etc, ready, &order)
            }
            Heuristic::MinMin => min_min(etc, ready),
            Heuristic::Sufferage => sufferage(etc, ready),
            Heuristic::SegMinMin => segmented_min_min(etc, ready, n_segments.min(etc.tasks())),
            Heuristic::SegSympathy => segmented_sympathy(etc, ready, n_segments.min(etc.tasks())),
            Heuristic::Ga => ga_schedule(etc, ready, ga, n_segments.min(etc.tasks())),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL.into_iter().find(|h| h.name() == s).ok_or_else(|| {
            format!("unknown scheduler `{s}` (expected one of: mct, minmin, sufferage, segminmin, segsympathy, ga)")
        })
    }
}
