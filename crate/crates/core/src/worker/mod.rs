//! Worker agent: unpacks task archives into per-attempt workspaces, compiles
//! and runs them under the requested niceness and timeout, and pushes the
//! results back to the supervisor.
//!
//! Tasks run as the worker's own user without further sandboxing; the
//! framework assumes a trusted local network.

pub(crate) mod exec;
mod service;

pub use exec::{execute_task, ExecControl, COMPILE_TIMEOUT, KILL_GRACE};
pub(crate) use service::CancelBody;
pub use service::{spawn_worker, worker_loop, WorkerConfig, WorkerHandle};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::transport::{unpack_task_archive, ArchiveError, TaskManifest};

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error("workspace corrupt: {0}")]
    WorkspaceCorrupt(String),
    #[error("task cancelled")]
    Cancelled,
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecStatus {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Ok => "OK",
            ExecStatus::CompileError => "COMPILE_ERROR",
            ExecStatus::RuntimeError => "RUNTIME_ERROR",
            ExecStatus::Timeout => "TIMEOUT",
        }
    }
}

/// What a worker returns for one attempt of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExecutionResult {
    pub task_id: String,
    pub attempt: u32,
    pub status: ExecStatus,
    pub exit_code: Option<i32>,
    /// Wall and CPU seconds of the execution phase.
    pub wall_s: f64,
    pub cpu_s: f64,
    #[serde(skip)]
    pub stdout: Vec<u8>,
    #[serde(skip)]
    pub stderr: Vec<u8>,
    /// Files the task wrote below `out/`, keyed by relative path.
    #[serde(skip)]
    pub out_files: BTreeMap<String, Vec<u8>>,
}

/// Fresh scratch directory for one attempt. Commands run in `work_dir`;
/// captured streams live beside it.
#[derive(Debug)]
pub struct TaskWorkspace {
    pub dir: PathBuf,
    pub work_dir: PathBuf,
    pub out_dir: PathBuf,
    pub manifest: TaskManifest,
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

impl TaskWorkspace {
    /// Unpacks `archive` below `root` into a directory named after the task
    /// id, attempt and a random suffix.
    pub fn create(root: &Path, archive: &[u8]) -> Result<Self, WorkerError> {
        std::fs::create_dir_all(root)?;
        let staging = root.join(format!("incoming-{}", uuid::Uuid::new_v4().simple()));
        let manifest = match unpack_task_archive(archive, &staging.join("work")) {
            Ok(m) => m,
            Err(e) => {
                let _ = std::fs::remove_dir_all(&staging);
                return Err(e.into());
            }
        };
        let dir = root.join(format!(
            "{}-a{}-{}",
            sanitize(&manifest.task_id),
            manifest.attempt,
            &uuid::Uuid::new_v4().simple().to_string()[..8]
        ));
        std::fs::rename(&staging, &dir)?;
        let work_dir = dir.join("work");
        let out_dir = work_dir.join("out");
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self { dir, work_dir, out_dir, manifest })
    }

    pub fn remove(self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workspaces_are_fresh_per_attempt() {
        let src = tempfile::tempdir().unwrap();
        std::fs::write(src.path().join("f.sh"), b"true").unwrap();
        let task = crate::pss::TaskSpec {
            id: "a/b".into(),
            task_file: "f.sh".into(),
            input_files: vec![],
            compile_cmd: String::new(),
            exec_cmd: "sh f.sh".into(),
            priority: 0,
            timeout_s: 1,
            work_hint: 1.0,
            payload_bytes: 0,
            is_checkpoint: false,
        };
        let root = tempfile::tempdir().unwrap();
        let bytes = crate::transport::pack_task_archive(&task, 4, src.path()).unwrap();
        let a = TaskWorkspace::create(root.path(), &bytes).unwrap();
        let b = TaskWorkspace::create(root.path(), &bytes).unwrap();
        assert_ne!(a.dir, b.dir);
        let name = a.dir.file_name().unwrap().to_string_lossy().into_owned();
        assert!(name.starts_with("a_b-a4-"), "{name}");
        assert!(a.work_dir.join("f.sh").is_file() && a.out_dir.is_dir());
        let dir = a.dir.clone();
        a.remove();
        assert!(!dir.exists());
        b.remove();
    }

    #[test]
    fn corrupt_archive_leaves_nothing_behind() {
        let root = tempfile::tempdir().unwrap();
        assert!(TaskWorkspace::create(root.path(), b"junk").is_err());
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
    }
}
