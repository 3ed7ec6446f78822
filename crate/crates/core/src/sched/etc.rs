use serde::{Deserialize, Serialize};

use super::SchedError;

/// Expected time to compute: `get(i, j)` is the predicted runtime of task `i`
/// on machine `j`, in seconds. Stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcMatrix {
    tasks: usize,
    machines: usize,
    data: Vec<f64>,
}

impl EtcMatrix {
    pub fn new(tasks: usize, machines: usize, data: Vec<f64>) -> Result<Self, SchedError> {
        if tasks == 0 || machines == 0 {
            return Err(SchedError::Empty);
        }
        if data.len() != tasks * machines {
            return Err(SchedError::DimensionMismatch(format!(
                "expected {} entries for {tasks}x{machines}, got {}",
                tasks * machines,
                data.len()
            )));
        }
        for (k, &value) in data.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(SchedError::InvalidEntry { task: k / machines, machine: k % machines, value });
            }
        }
        Ok(Self { tasks, machines, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SchedError> {
        let machines = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != machines) {
            return Err(SchedError::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {machines}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), machines, rows.concat())
    }

    #[inline]
    pub fn tasks(&self) -> usize {
        self.tasks
    }

    #[inline]
    pub fn machines(&self) -> usize {
        self.machines
    }

    #[inline]
    pub fn get(&self, task: usize, machine: usize) -> f64 {
        self.data[task * self.machines + machine]
    }

    pub fn row(&self, task: usize) -> &[f64] {
        &self.data[task * self.machines..(task + 1) * self.machines]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.machines)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Returns a copy with every entry multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, SchedError> {
        Self::new(self.tasks, self.machines, self.data.iter().map(|v| v * k).collect())
    }

    /// Reorders machine columns: column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_machines(&self, perm: &[usize]) -> Result<Self, SchedError> {
        if perm.len() != self.machines {
            return Err(SchedError::DimensionMismatch("permutation length".into()));
        }
        let data = self.rows().flat_map(|row| perm.iter().map(move |&p| row[p])).collect();
        Self::new(self.tasks, self.machines, data)
    }
}

/// Time at which each machine becomes free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadyTimes(Vec<f64>);

impl ReadyTimes {
    pub fn new(times: Vec<f64>) -> Result<Self, SchedError> {
        if let Some(bad) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(SchedError::DimensionMismatch(format!("invalid ready time {bad}")));
        }
        Ok(Self(times))
    }

    pub fn zeros(machines: usize) -> Self {
        Self(vec![0.0; machines])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn check(&self, etc: &EtcMatrix) -> Result<(), SchedError> {
        if self.0.len() != etc.machines() {
            return Err(SchedError::DimensionMismatch(format!(
                "{} ready times for {} machines",
                self.0.len(),
                etc.machines()
            )));
        }
        Ok(())
    }
}

/// Task to machine assignment: `assign[i]` is the machine of task `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mapping(pub Vec<usize>);

impl Mapping {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn makespan(etc: &EtcMatrix, ready: &ReadyTimes, map: &Mapping) -> Result<f64, SchedError> {
    ready.check(etc)?;
    if map.len() != etc.tasks() {
        return Err(SchedError::DimensionMismatch(format!(
            "mapping has {} tasks, matrix has {}",
            map.len(),
            etc.tasks()
        )));
    }
    if let Some(&bad) = map.0.iter().find(|&&j| j >= etc.machines()) {
        return Err(SchedError::DimensionMismatch(format!("machine index {bad} out of range")));
    }
    Ok(makespan_unchecked(etc, ready.as_slice(), &map.0))
}

pub(crate) fn makespan_unchecked(etc: &EtcMatrix, ready: &[f64], assign: &[usize]) -> f64 {
    let mut loads = ready.to_vec();
    for (task, &machine) in assign.iter().enumerate() {
        loads[machine] += etc.get(task, machine);
    }
    loads.into_iter().fold(f64::NEG_INFINITY, f64::max)
}
