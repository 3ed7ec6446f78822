use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::{AttemptRecord, Directive, ProblemState, TaskStatus};
use crate::worker::TaskExecutionResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    WorkerJoined { worker_id: String },
    WorkerLost { worker_id: String },
    Assign { task_id: String, attempt: u32, worker_id: String },
    AssignRefused { task_id: String, attempt: u32, worker_id: String, reason: String },
    Result { task_id: String, attempt: u32, worker_id: String, status: String },
    StaleResult { task_id: String, attempt: u32 },
    Retry { task_id: String, failures: u32 },
    DeadlineMissed { task_id: String, attempt: u32 },
    Cancel { task_id: String, attempt: u32, worker_id: String },
    TaskAbandoned { task_id: String },
    EmpStart { checkpoint: String },
    EmpFailed { reason: String },
    DirectiveApplied { directive: Directive, unknown: Vec<String> },
    RcpStart,
    RcpFinished { exit_code: Option<i32> },
    Finished { outcome: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the run started.
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ReportOutcome {
    Solved,
    Abandoned { reason: String },
    RcpFailed { reason: String },
}

impl ReportOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            ReportOutcome::Solved => "solved",
            ReportOutcome::Abandoned { .. } => "abandoned",
            ReportOutcome::RcpFailed { .. } => "rcp_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: String,
    pub status: TaskStatus,
    /// Failures since the task was last reset.
    pub failures: u32,
    pub completed_by: Option<String>,
    pub history: Vec<AttemptRecord>,
}

impl TaskReport {
    pub fn completed_attempts(&self) -> usize {
        self.history.iter().filter(|a| a.outcome == "OK").count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemStats {
    pub total_wall_s: f64,
    pub total_cpu_s: f64,
    pub per_worker: BTreeMap<String, u32>,
    pub retries: u32,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub abandoned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub problem: String,
    pub outcome: ReportOutcome,
    /// Directory holding the RCP's `out/`, relative to the report root.
    pub problem_output: Option<String>,
    pub tasks: Vec<TaskReport>,
    /// Metadata of every result received; captured streams live under
    /// `results/<task_id>/attempt_<n>/`.
    pub task_results: Vec<TaskExecutionResult>,
    pub stats: ProblemStats,
    pub rcp_stderr: Option<String>,
    pub events: Vec<Event>,
}

impl ProblemReport {
    pub fn task(&self, id: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn write(&self, root: &Path) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        std::fs::write(root.join("report.json"), json)
    }

    pub fn read(root: &Path) -> io::Result<Self> {
        let bytes = std::fs::read(root.join("report.json"))?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

pub(crate) fn task_reports(state: &ProblemState) -> Vec<TaskReport> {
    state
        .records
        .iter()
        .map(|r| TaskReport {
            id: r.spec.id.clone(),
            status: r.status.clone(),
            failures: r.attempts,
            completed_by: r.completed_by.clone(),
            history: r.history.clone(),
        })
        .collect()
}

/// Writes `results/<task_id>/attempt_<n>/{result.json, stdout, stderr, out/}`.
pub(crate) fn store_result(results: &Path, r: &TaskExecutionResult) -> io::Result<()> {
    let dir = results.join(&r.task_id).join(format!("attempt_{}", r.attempt));
    std::fs::create_dir_all(dir.join("out"))?;
    std::fs::write(dir.join("result.json"), serde_json::to_vec_pretty(r).map_err(io::Error::other)?)?;
    std::fs::write(dir.join("stdout"), &r.stdout)?;
    std::fs::write(dir.join("stderr"), &r.stderr)?;
    for (name, data) in &r.out_files {
        let path = dir.join("out").join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, data)?;
    }
    Ok(())
}

/// Makes `results/<task_id>/latest` a copy of `attempt_<n>`, or removes it.
/// A copy rather than a symlink so the tree survives archiving.
pub(crate) fn set_latest(results: &Path, task_id: &str, attempt: Option<u32>) -> io::Result<()> {
    let latest = results.join(task_id).join("latest");
    if latest.exists() {
        std::fs::remove_dir_all(&latest)?;
    }
    if let Some(a) = attempt {
        copy_dir(&results.join(task_id).join(format!("attempt_{a}")), &latest)?;
    }
    Ok(())
}

pub(crate) fn copy_dir(src: &Path, dst: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dst)?;
    for entry in std::fs::read_dir(src)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        let target = dst.join(entry.file_name());
        if ty.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else if ty.is_file() {
            std::fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worker::ExecStatus;

    #[test]
    fn result_layout() {
        let root = tempfile::tempdir().unwrap();
        let mut out_files = BTreeMap::new();
        out_files.insert("sub/v.txt".to_string(), b"42".to_vec());
        let r = TaskExecutionResult {
            task_id: "t1".into(),
            attempt: 2,
            status: ExecStatus::Ok,
            exit_code: Some(0),
            wall_s: 1.0,
            cpu_s: 0.5,
            stdout: b"hello".to_vec(),
            stderr: vec![],
            out_files,
        };
        store_result(root.path(), &r).unwrap();
        set_latest(root.path(), "t1", Some(2)).unwrap();
        let latest = root.path().join("t1/latest");
        assert_eq!(std::fs::read(latest.join("stdout")).unwrap(), b"hello");
        assert_eq!(std::fs::read(latest.join("out/sub/v.txt")).unwrap(), b"42");
        let meta: TaskExecutionResult =
            serde_json::from_slice(&std::fs::read(latest.join("result.json")).unwrap()).unwrap();
        assert_eq!(meta.status, ExecStatus::Ok);
        set_latest(root.path(), "t1", None).unwrap();
        assert!(!latest.exists());
    }

    #[test]
    fn event_json_shape() {
        let e = Event { seq: 3, at_ms: 10, kind: EventKind::EmpStart { checkpoint: "t3".into() } };
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["event"], "emp_start");
        assert_eq!(v["checkpoint"], "t3");
        let back: Event = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }
}
