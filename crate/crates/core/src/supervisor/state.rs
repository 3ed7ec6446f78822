//! The supervisor's authoritative task table. Everything here is pure: the
//! service layer feeds in results and directives and carries out the
//! returned CANCEL actions.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::metrics::{estimate_etc, EtcModel, WorkerMetrics};
use crate::pss::{topo_priority_indices, Problem};
use crate::sched::{GaConfig, Heuristic, ReadyTimes};
use crate::worker::{ExecStatus, TaskExecutionResult};

/// Added to a tried worker's ETC entry when an untried one is available.
const RETRY_PENALTY_S: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Ready,
    Dispatched { worker_id: String, attempt: u32 },
    Completed,
    Failed { attempts: u32, last_error: String },
    Abandoned,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub worker_id: String,
    /// `OK`, `COMPILE_ERROR`, `RUNTIME_ERROR`, `TIMEOUT`, `CANCELLED` or `LOST`.
    pub outcome: String,
    pub wall_s: f64,
    pub cpu_s: f64,
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub spec: crate::pss::TaskSpec,
    pub status: TaskStatus,
    /// Failed attempts since the last reset.
    pub attempts: u32,
    /// Dispatch counter; numbers the `attempt_<n>` directories.
    pub dispatches: u32,
    pub tried_workers: BTreeSet<String>,
    pub result: Option<TaskExecutionResult>,
    pub completed_by: Option<String>,
    pub history: Vec<AttemptRecord>,
    pub last_error: Option<String>,
    dispatched_at: Option<Instant>,
    deadline: Option<Instant>,
    estimate_s: f64,
}

impl TaskRecord {
    pub fn is_dispatched(&self) -> bool {
        matches!(self.status, TaskStatus::Dispatched { .. })
    }

    fn dispatched_to(&self) -> Option<(&str, u32)> {
        match &self.status {
            TaskStatus::Dispatched { worker_id, attempt } => Some((worker_id, *attempt)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tasks", rename_all = "snake_case")]
pub enum Directive {
    Continue,
    StopAll,
    Stop(Vec<String>),
    RedoAll,
    Redo(Vec<String>),
}

/// Parses execution monitor output: newline-separated `CONTINUE`,
/// `STOP ALL`, `STOP <id>`, `REDO ALL` or `REDO <id>`. The first terminal
/// command wins; targeted lines accumulate but may not mix STOP and REDO.
pub fn parse_directive(stdout: &str) -> Result<Directive, String> {
    let mut stops = Vec::new();
    let mut redos = Vec::new();
    for line in stdout.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut words = line.split_whitespace();
        let (cmd, arg, extra) = (words.next(), words.next(), words.next());
        if extra.is_some() {
            return Err(format!("unrecognised line `{line}`"));
        }
        match (cmd, arg) {
            (Some("CONTINUE"), None) => return Ok(Directive::Continue),
            (Some("STOP"), Some("ALL")) => return Ok(Directive::StopAll),
            (Some("REDO"), Some("ALL")) => return Ok(Directive::RedoAll),
            (Some("STOP"), Some(id)) => stops.push(id.to_string()),
            (Some("REDO"), Some(id)) => redos.push(id.to_string()),
            _ => return Err(format!("unrecognised line `{line}`")),
        }
    }
    match (stops.is_empty(), redos.is_empty()) {
        (false, true) => Ok(Directive::Stop(stops)),
        (true, false) => Ok(Directive::Redo(redos)),
        (true, true) => Err("no command".into()),
        (false, false) => Err("STOP and REDO lines cannot be mixed".into()),
    }
}

/// A CANCEL frame the service must send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CancelAction {
    pub task_id: String,
    pub attempt: u32,
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResultOutcome {
    Completed,
    /// Failed and re-queued; carries the failure count.
    Retry(u32),
    /// Retries exhausted; the problem is abandoned.
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("stale result for task `{task_id}` attempt {attempt}")]
    StaleResult { task_id: String, attempt: u32 },
}

/// Supervisor-side view of a live worker used for planning.
#[derive(Debug, Clone)]
pub struct WorkerView {
    pub worker_id: String,
    pub metrics: WorkerMetrics,
    pub slots: u32,
}

#[derive(Debug, Clone)]
pub struct PlanConfig {
    pub scheduler: Heuristic,
    pub n_segments: usize,
    pub ga: GaConfig,
    pub etc_model: EtcModel,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            scheduler: Heuristic::Ga,
            n_segments: crate::sched::DEFAULT_SEGMENTS,
            ga: GaConfig::default(),
            etc_model: EtcModel::default(),
        }
    }
}

pub struct ProblemState {
    pub records: Vec<TaskRecord>,
    deps: crate::pss::DependencyMatrix,
    order: Vec<usize>,
    pub max_retries: u32,
    pub paused: bool,
    pub abandoned: Option<String>,
    pub retries: u32,
}

impl ProblemState {
    pub fn new(problem: &Problem, max_retries: u32) -> Self {
        let records = problem
            .tasks
            .iter()
            .map(|spec| TaskRecord {
                spec: spec.clone(),
                status: TaskStatus::Pending,
                attempts: 0,
                dispatches: 0,
                tried_workers: BTreeSet::new(),
                result: None,
                completed_by: None,
                history: Vec::new(),
                last_error: None,
                dispatched_at: None,
                deadline: None,
                estimate_s: 0.0,
            })
            .collect();
        let mut state = Self {
            records,
            deps: problem.deps.clone(),
            order: topo_priority_indices(problem),
            max_retries,
            paused: false,
            abandoned: None,
            retries: 0,
        };
        state.refresh_ready();
        state
    }

    pub fn index(&self, task_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.spec.id == task_id)
    }

    pub fn record(&self, task_id: &str) -> Option<&TaskRecord> {
        self.records.iter().find(|r| r.spec.id == task_id)
    }

    /// Promotes Pending tasks whose dependencies are all Completed.
    pub fn refresh_ready(&mut self) {
        for i in 0..self.records.len() {
            if self.records[i].status == TaskStatus::Pending
                && self.deps.deps_of(i).all(|j| self.records[j].status == TaskStatus::Completed)
            {
                self.records[i].status = TaskStatus::Ready;
            }
        }
    }

    /// Ready tasks in dependency-then-priority order.
    pub fn ready_tasks(&self) -> Vec<usize> {
        self.order.iter().copied().filter(|&i| self.records[i].status == TaskStatus::Ready).collect()
    }

    /// True once every task is Completed or Stopped.
    pub fn finished(&self) -> bool {
        self.records.iter().all(|r| matches!(r.status, TaskStatus::Completed | TaskStatus::Stopped))
    }

    pub fn in_flight_on(&self, worker_id: &str) -> usize {
        self.records.iter().filter(|r| r.dispatched_to().is_some_and(|(w, _)| w == worker_id)).count()
    }

    /// Remaining estimated work already committed to `worker_id`, seconds.
    pub fn committed_s(&self, worker_id: &str, now: Instant) -> f64 {
        self.records
            .iter()
            .filter(|r| r.dispatched_to().is_some_and(|(w, _)| w == worker_id))
            .map(|r| {
                let elapsed = r.dispatched_at.map_or(0.0, |t| now.saturating_duration_since(t).as_secs_f64());
                (r.estimate_s - elapsed).max(0.0)
            })
            .sum()
    }

    /// Maps the ready set onto workers with free slots.
    pub fn plan_dispatch(&self, workers: &[WorkerView], cfg: &PlanConfig, now: Instant) -> Vec<(usize, String)> {
        if self.paused || self.abandoned.is_some() {
            return Vec::new();
        }
        let ready = self.ready_tasks();
        let mut free: Vec<(usize, u32)> = workers
            .iter()
            .enumerate()
            .map(|(k, w)| (k, w.slots.saturating_sub(self.in_flight_on(&w.worker_id) as u32)))
            .filter(|&(_, f)| f > 0)
            .collect();
        if ready.is_empty() || free.is_empty() {
            return Vec::new();
        }
        let live: Vec<&WorkerView> = free.iter().map(|&(k, _)| &workers[k]).collect();
        let specs: Vec<_> = ready.iter().map(|&i| self.records[i].spec.clone()).collect();
        let metrics: Vec<WorkerMetrics> = live.iter().map(|w| w.metrics.clone()).collect();
        let Ok(etc) = estimate_etc(&specs, &metrics, &cfg.etc_model) else {
            return Vec::new();
        };
        let mut data = etc.as_slice().to_vec();
        for (row, &i) in ready.iter().enumerate() {
            let tried = &self.records[i].tried_workers;
            if live.iter().any(|w| !tried.contains(&w.worker_id)) {
                for (col, w) in live.iter().enumerate() {
                    if tried.contains(&w.worker_id) {
                        data[row * live.len() + col] += RETRY_PENALTY_S;
                    }
                }
            }
        }
        let etc = crate::sched::EtcMatrix::new(ready.len(), live.len(), data).expect("penalised ETC stays valid");
        let ready_times =
            ReadyTimes::new(live.iter().map(|w| self.committed_s(&w.worker_id, now)).collect()).expect("finite");
        let mapping = cfg
            .scheduler
            .run(&etc, &ready_times, cfg.n_segments, &cfg.ga)
            .unwrap_or_else(|_| crate::sched::min_min(&etc, &ready_times).expect("valid dimensions"));

        let mut assigned = vec![None; ready.len()];
        for (row, &col) in mapping.as_slice().iter().enumerate() {
            if free[col].1 > 0 {
                free[col].1 -= 1;
                assigned[row] = Some(col);
            }
        }
        // Leftover tasks go to whichever worker still has a slot, best completion first.
        let mut loads: Vec<f64> = ready_times.as_slice().to_vec();
        for (row, a) in assigned.iter().enumerate() {
            if let Some(col) = a {
                loads[*col] += etc.get(row, *col);
            }
        }
        for (row, slot) in assigned.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let best = (0..live.len())
                .filter(|&c| free[c].1 > 0)
                .min_by(|&a, &b| (loads[a] + etc.get(row, a)).total_cmp(&(loads[b] + etc.get(row, b))));
            if let Some(col) = best {
                free[col].1 -= 1;
                loads[col] += etc.get(row, col);
                *slot = Some(col);
            }
        }
        ready.iter().zip(assigned).filter_map(|(&i, a)| a.map(|col| (i, live[col].worker_id.clone()))).collect()
    }

    /// Marks a Ready task Dispatched and returns its attempt number.
    pub fn mark_dispatched(
        &mut self,
        idx: usize,
        worker_id: &str,
        estimate_s: f64,
        deadline: Duration,
        now: Instant,
    ) -> u32 {
        let rec = &mut self.records[idx];
        debug_assert_eq!(rec.status, TaskStatus::Ready);
        debug_assert!(self.deps.deps_of(idx).all(|j| self.records[j].status == TaskStatus::Completed));
        let rec = &mut self.records[idx];
        rec.dispatches += 1;
        rec.status = TaskStatus::Dispatched { worker_id: worker_id.to_string(), attempt: rec.dispatches };
        rec.tried_workers.insert(worker_id.to_string());
        rec.dispatched_at = Some(now);
        rec.deadline = Some(now + deadline);
        rec.estimate_s = estimate_s;
        rec.dispatches
    }

    /// Undoes a dispatch whose ASSIGN never reached the worker.
    pub fn revert_dispatch(&mut self, idx: usize) {
        let rec = &mut self.records[idx];
        if let Some(w) = rec.dispatched_to().map(|(w, _)| w.to_string()) {
            if !rec.history.iter().any(|h| h.worker_id == w) {
                rec.tried_workers.remove(&w);
            }
            rec.status = TaskStatus::Ready;
            rec.dispatched_at = None;
            rec.deadline = None;
        }
    }

    pub fn handle_result(&mut self, result: TaskExecutionResult) -> Result<ResultOutcome, StateError> {
        let idx = self.index(&result.task_id).ok_or_else(|| StateError::UnknownTask(result.task_id.clone()))?;
        let worker_id = match self.records[idx].dispatched_to() {
            Some((w, attempt)) if attempt == result.attempt => w.to_string(),
            _ => return Err(StateError::StaleResult { task_id: result.task_id.clone(), attempt: result.attempt }),
        };
        let rec = &mut self.records[idx];
        rec.history.push(AttemptRecord {
            attempt: result.attempt,
            worker_id: worker_id.clone(),
            outcome: result.status.as_str().to_string(),
            wall_s: result.wall_s,
            cpu_s: result.cpu_s,
        });
        if result.status == ExecStatus::Ok {
            rec.status = TaskStatus::Completed;
            rec.completed_by = Some(worker_id);
            rec.result = Some(result);
            rec.deadline = None;
            self.refresh_ready();
            return Ok(ResultOutcome::Completed);
        }
        let error = format!(
            "{} (exit {:?}): {}",
            result.status.as_str(),
            result.exit_code,
            String::from_utf8_lossy(&result.stderr).trim()
        );
        Ok(self.record_failure(idx, error))
    }

    fn record_failure(&mut self, idx: usize, error: String) -> ResultOutcome {
        let max_retries = self.max_retries;
        let rec = &mut self.records[idx];
        rec.attempts += 1;
        rec.last_error = Some(error.clone());
        rec.deadline = None;
        rec.status = TaskStatus::Failed { attempts: rec.attempts, last_error: error };
        if rec.attempts > max_retries {
            rec.status = TaskStatus::Abandoned;
            self.abandoned = Some(format!("task `{}` failed {} times", rec.spec.id, rec.attempts));
            ResultOutcome::Abandoned
        } else {
            self.retries += 1;
            rec.status = TaskStatus::Ready;
            ResultOutcome::Retry(rec.attempts)
        }
    }

    /// Fails a dispatch that will never report back (deadline missed or
    /// worker lost).
    pub fn fail_dispatch(&mut self, idx: usize, outcome: &str, error: String) -> Option<ResultOutcome> {
        let (worker_id, attempt) = self.records[idx].dispatched_to().map(|(w, a)| (w.to_string(), a))?;
        self.records[idx].history.push(AttemptRecord {
            attempt,
            worker_id,
            outcome: outcome.into(),
            wall_s: 0.0,
            cpu_s: 0.0,
        });
        Some(self.record_failure(idx, error))
    }

    /// Dispatched tasks whose deadline has passed.
    pub fn overdue(&self, now: Instant) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].is_dispatched() && self.records[i].deadline.is_some_and(|d| now >= d))
            .collect()
    }

    pub fn dispatched_on(&self, worker_id: &str) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].dispatched_to().is_some_and(|(w, _)| w == worker_id))
            .collect()
    }

    fn cancel_of(&self, idx: usize) -> Option<CancelAction> {
        self.records[idx].dispatched_to().map(|(w, a)| CancelAction {
            task_id: self.records[idx].spec.id.clone(),
            attempt: a,
            worker_id: w.to_string(),
        })
    }

    /// Cancels every in-flight task, e.g. when the problem is abandoned.
    pub fn cancel_all_dispatched(&mut self) -> Vec<CancelAction> {
        let mut actions = Vec::new();
        for i in 0..self.records.len() {
            if let Some(a) = self.cancel_of(i) {
                self.records[i].history.push(AttemptRecord {
                    attempt: a.attempt,
                    worker_id: a.worker_id.clone(),
                    outcome: "CANCELLED".into(),
                    wall_s: 0.0,
                    cpu_s: 0.0,
                });
                self.records[i].status = TaskStatus::Ready;
                self.records[i].deadline = None;
                actions.push(a);
            }
        }
        actions
    }

    fn stop(&mut self, idx: usize, actions: &mut Vec<CancelAction>) {
        match self.records[idx].status {
            TaskStatus::Completed | TaskStatus::Abandoned | TaskStatus::Stopped => {}
            _ => {
                if let Some(a) = self.cancel_of(idx) {
                    actions.push(a);
                }
                self.records[idx].status = TaskStatus::Stopped;
                self.records[idx].deadline = None;
            }
        }
    }

    fn reset(&mut self, idx: usize, actions: &mut Vec<CancelAction>) {
        if matches!(self.records[idx].status, TaskStatus::Stopped) {
            return;
        }
        if let Some(a) = self.cancel_of(idx) {
            self.records[idx].history.push(AttemptRecord {
                attempt: a.attempt,
                worker_id: a.worker_id.clone(),
                outcome: "CANCELLED".into(),
                wall_s: 0.0,
                cpu_s: 0.0,
            });
            actions.push(a);
        }
        let rec = &mut self.records[idx];
        rec.status = TaskStatus::Pending;
        rec.attempts = 0;
        rec.result = None;
        rec.completed_by = None;
        rec.tried_workers.clear();
        rec.deadline = None;
    }

    fn dependents_closure(&self, roots: &[usize]) -> BTreeSet<usize> {
        let mut seen: BTreeSet<usize> = roots.iter().copied().collect();
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(j) = stack.pop() {
            for i in self.deps.dependents_of(j) {
                if seen.insert(i) {
                    stack.push(i);
                }
            }
        }
        seen
    }

    /// Applies a directive, returning the CANCEL frames to send and the ids
    /// that were skipped as unknown.
    pub fn apply_directive(&mut self, d: &Directive) -> (Vec<CancelAction>, Vec<String>) {
        let mut actions = Vec::new();
        let mut unknown = Vec::new();
        let mut resolve = |ids: &[String], state: &Self| -> Vec<usize> {
            ids.iter()
                .filter_map(|id| {
                    let idx = state.index(id);
                    if idx.is_none() {
                        unknown.push(id.clone());
                    }
                    idx
                })
                .collect()
        };
        match d {
            Directive::Continue => {}
            Directive::StopAll => {
                for i in 0..self.records.len() {
                    self.stop(i, &mut actions);
                }
            }
            Directive::Stop(ids) => {
                let idx = resolve(ids, self);
                for &i in &idx {
                    self.stop(i, &mut actions);
                }
                // Tasks downstream of a stopped task can never become ready.
                let stopped: Vec<usize> =
                    (0..self.records.len()).filter(|&i| self.records[i].status == TaskStatus::Stopped).collect();
                for i in self.dependents_closure(&stopped) {
                    self.stop(i, &mut actions);
                }
            }
            Directive::RedoAll => {
                for i in 0..self.records.len() {
                    self.reset(i, &mut actions);
                }
            }
            Directive::Redo(ids) => {
                let idx = resolve(ids, self);
                for i in self.dependents_closure(&idx) {
                    self.reset(i, &mut actions);
                }
            }
        }
        self.refresh_ready();
        (actions, unknown)
    }

    /// Completed tasks per worker, keyed by worker id.
    pub fn per_worker_completed(&self) -> BTreeMap<String, u32> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            if let (TaskStatus::Completed, Some(w)) = (&r.status, &r.completed_by) {
                *counts.entry(w.clone()).or_insert(0) += 1;
            }
        }
        counts
    }
}
