//! Worker capability and latency measurements, and their conversion into an
//! expected-time-to-compute matrix.

use std::hint::black_box;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::pss::TaskSpec;
use crate::sched::{EtcMatrix, SchedError};

const MATMUL_N: usize = 256;
const INVERT_N: usize = 128;

/// Floating point operations performed by [`measure_performance`]:
/// a 256x256 product plus a 128x128 inversion.
pub const BENCHMARK_FLOPS: f64 =
    2.0 * (MATMUL_N * MATMUL_N * MATMUL_N) as f64 + (2.0 / 3.0) * (INVERT_N * INVERT_N * INVERT_N) as f64;

/// RTT smoothing gain.
pub const RTT_ALPHA: f64 = 0.125;
/// RTT deviation gain.
pub const RTT_BETA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("benchmark failed: {0}")]
    BenchmarkFailed(String),
    #[error("RTT sample must be positive, got {0}")]
    NonPositiveSample(f64),
    #[error("no RTT samples recorded")]
    NoSamples,
    #[error("ETC estimation needs at least one task and one worker")]
    EmptyInput,
    #[error(transparent)]
    Sched(#[from] SchedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMetrics {
    /// Mflop/s measured by the local benchmark.
    pub perf: f64,
    /// Expected one-way latency to the supervisor, seconds.
    pub net: f64,
    /// One-minute load average divided by CPU count.
    pub load: f64,
    /// Milliseconds since the Unix epoch.
    pub updated_at: u64,
}

impl WorkerMetrics {
    pub fn new(perf: f64, net: f64, load: f64) -> Self {
        Self { perf, net, load, updated_at: now_millis() }
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Smoothed RTT and mean deviation, updated with the classical recurrences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NetEstimatorState {
    pub srtt: f64,
    pub rttvar: f64,
    pub samples: u64,
}

pub fn update_net(state: NetEstimatorState, sample_rtt: f64) -> Result<NetEstimatorState, MetricsError> {
    if !sample_rtt.is_finite() || sample_rtt <= 0.0 {
        return Err(MetricsError::NonPositiveSample(sample_rtt));
    }
    if state.samples == 0 {
        return Ok(NetEstimatorState { srtt: sample_rtt, rttvar: sample_rtt / 2.0, samples: 1 });
    }
    let rttvar = (1.0 - RTT_BETA) * state.rttvar + RTT_BETA * (state.srtt - sample_rtt).abs();
    let srtt = (1.0 - RTT_ALPHA) * state.srtt + RTT_ALPHA * sample_rtt;
    Ok(NetEstimatorState { srtt, rttvar, samples: state.samples + 1 })
}

/// Conservative one-way latency: half of `srtt + 4 * rttvar`.
pub fn net_metric(state: &NetEstimatorState) -> Result<f64, MetricsError> {
    if state.samples == 0 {
        return Err(MetricsError::NoSamples);
    }
    Ok((state.srtt + 4.0 * state.rttvar) / 2.0)
}

/// Runs the fixed matrix benchmark and returns Mflop/s.
pub fn measure_performance() -> Result<f64, MetricsError> {
    let a = test_matrix(MATMUL_N, 1.0);
    let b = test_matrix(MATMUL_N, 2.0);
    let inv_src = test_matrix(INVERT_N, INVERT_N as f64);

    let start = Instant::now();
    let product = matmul(black_box(&a), black_box(&b), MATMUL_N);
    let inverse = invert(black_box(&inv_src), INVERT_N)?;
    let elapsed = start.elapsed().as_secs_f64();
    black_box((product, inverse));

    let perf = BENCHMARK_FLOPS / elapsed.max(1e-9) / 1e6;
    if perf.is_finite() && perf > 0.0 {
        Ok(perf)
    } else {
        Err(MetricsError::BenchmarkFailed(format!("non-finite rate from {elapsed} s")))
    }
}

/// Dense matrix with `diag` added to the diagonal; strictly diagonally
/// dominant for `diag >= n`.
pub fn test_matrix(n: usize, diag: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 1.0 / (1.0 + i.abs_diff(j) as f64);
        }
        m[i * n + i] += diag;
    }
    m
}

pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            let (brow, crow) = (&b[k * n..(k + 1) * n], &mut c[i * n..(i + 1) * n]);
            for (cij, bkj) in crow.iter_mut().zip(brow) {
                *cij += aik * bkj;
            }
        }
    }
    c
}

/// Gauss-Jordan inversion with partial pivoting.
pub fn invert(matrix: &[f64], n: usize) -> Result<Vec<f64>, MetricsError> {
    let mut a = matrix.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs())).expect("non-empty range");
        if a[pivot * n + col].abs() < 1e-12 {
            return Err(MetricsError::BenchmarkFailed(format!("singular matrix at column {col}")));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let p = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[row * n + j] -= f * a[col * n + j];
                inv[row * n + j] -= f * inv[col * n + j];
            }
        }
    }
    Ok(inv)
}

/// One-minute load average normalized by CPU count; 0 when unavailable.
pub fn current_load() -> f64 {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
    std::fs::read_to_string("/proc/loadavg")
        .ok()
        .and_then(|s| s.split_whitespace().next().and_then(|v| v.parse::<f64>().ok()))
        .map_or(0.0, |l| (l / cpus).max(0.0))
}

/// Parameters of the task-cost model behind [`estimate_etc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtcModel {
    /// Mflop per unit of `work_hint`.
    pub calibration: f64,
    /// Assumed transfer rate for task payloads, bytes per second.
    pub bandwidth: f64,
}

impl Default for EtcModel {
    fn default() -> Self {
        Self { calibration: 100.0, bandwidth: 10e6 }
    }
}

/// `etc[i][j] = hint_i * calibration / perf_j * (1 + load_j) + 2 * net_j + payload_i / bandwidth`.
pub fn estimate_etc(
    tasks: &[TaskSpec],
    workers: &[WorkerMetrics],
    model: &EtcModel,
) -> Result<EtcMatrix, MetricsError> {
    if tasks.is_empty() || workers.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let data = tasks
        .iter()
        .flat_map(|t| {
            workers.iter().map(move |w| {
                t.work_hint * model.calibration / w.perf * (1.0 + w.load)
                    + 2.0 * w.net
                    + t.payload_bytes as f64 / model.bandwidth
            })
        })
        .collect();
    Ok(EtcMatrix::new(tasks.len(), workers.len(), data)?)
}
