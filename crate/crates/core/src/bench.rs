//! Scheduler comparison harness: range-based ETC generation over the twelve
//! heterogeneity/consistency classes, batch runs of every heuristic, CSV
//! output and summary tables.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sched::{makespan, EtcMatrix, GaConfig, Heuristic, Mapping, ReadyTimes, SchedError, DEFAULT_SEGMENTS};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("bad instance: {0}")]
    BadInstance(String),
    #[error("brute force over {0} mappings is too large")]
    TooLarge(f64),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown ETC class `{0}`")]
    UnknownClass(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heterogeneity {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Consistency {
    Consistent,
    Semiconsistent,
    Inconsistent,
}

/// Task heterogeneity range.
pub const R_TASK_LOW: f64 = 100.0;
pub const R_TASK_HIGH: f64 = 3000.0;
/// Machine heterogeneity range.
pub const R_MACHINE_LOW: f64 = 10.0;
pub const R_MACHINE_HIGH: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EtcClass {
    pub consistency: Consistency,
    pub task_het: Heterogeneity,
    pub machine_het: Heterogeneity,
}

impl EtcClass {
    pub fn all() -> Vec<EtcClass> {
        let mut out = Vec::with_capacity(12);
        for consistency in [Consistency::Consistent, Consistency::Semiconsistent, Consistency::Inconsistent] {
            for task_het in [Heterogeneity::Low, Heterogeneity::High] {
                for machine_het in [Heterogeneity::Low, Heterogeneity::High] {
                    out.push(EtcClass { consistency, task_het, machine_het });
                }
            }
        }
        out
    }

    fn ranges(self) -> (f64, f64) {
        let rt = match self.task_het {
            Heterogeneity::Low => R_TASK_LOW,
            Heterogeneity::High => R_TASK_HIGH,
        };
        let rm = match self.machine_het {
            Heterogeneity::Low => R_MACHINE_LOW,
            Heterogeneity::High => R_MACHINE_HIGH,
        };
        (rt, rm)
    }
}

/// Names follow the usual `u_<c|s|i>_<task><machine>` convention, e.g.
/// `u_c_hilo` for consistent, high task and low machine heterogeneity.
impl fmt::Display for EtcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.consistency {
            Consistency::Consistent => 'c',
            Consistency::Semiconsistent => 's',
            Consistency::Inconsistent => 'i',
        };
        let h = |x: Heterogeneity| if x == Heterogeneity::Low { "lo" } else { "hi" };
        write!(f, "u_{c}_{}{}", h(self.task_het), h(self.machine_het))
    }
}

impl FromStr for EtcClass {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EtcClass::all().into_iter().find(|c| c.to_string() == s).ok_or_else(|| BenchError::UnknownClass(s.to_string()))
    }
}

/// Draws a `t x m` ETC matrix of the given class; `etc[i][j] = tau_i * mu_ij`.
pub fn gen_etc(t: usize, m: usize, class: EtcClass, seed: u64) -> Result<EtcMatrix, SchedError> {
    if t == 0 || m == 0 {
        return Err(SchedError::Empty);
    }
    let (rt, rm) = class.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(t * m);
    for _ in 0..t {
        let tau = rng.gen_range(1.0..rt);
        let mut row: Vec<f64> = (0..m).map(|_| tau * rng.gen_range(1.0..rm)).collect();
        match class.consistency {
            Consistency::Consistent => row.sort_by(f64::total_cmp),
            Consistency::Semiconsistent => {
                let mut even: Vec<f64> = row.iter().step_by(2).copied().collect();
                even.sort_by(f64::total_cmp);
                for (k, v) in even.into_iter().enumerate() {
                    row[2 * k] = v;
                }
            }
            Consistency::Inconsistent => {}
        }
        data.extend(row);
    }
    EtcMatrix::new(t, m, data)
}

#[derive(Debug, Clone)]
pub struct BenchSuite {
    pub t: usize,
    pub m: usize,
    pub instances: usize,
    pub ga: GaConfig,
    pub n_segments: usize,
    pub seed: u64,
    pub classes: Vec<EtcClass>,
}

impl Default for BenchSuite {
    fn default() -> Self {
        Self {
            t: 64,
            m: 8,
            instances: 10,
            ga: GaConfig::default(),
            n_segments: DEFAULT_SEGMENTS,
            seed: 1,
            classes: EtcClass::all(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicRun {
    pub heuristic: Heuristic,
    pub makespan: f64,
    pub wall_s: f64,
}

/// All heuristics on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub class: EtcClass,
    pub seed: u64,
    pub runs: Vec<HeuristicRun>,
}

impl BenchRow {
    pub fn makespan(&self, h: Heuristic) -> Option<f64> {
        self.runs.iter().find(|r| r.heuristic == h).map(|r| r.makespan)
    }
}

/// Evaluates one instance with every heuristic on zero ready times.
pub fn bench_instance(etc: &EtcMatrix, ga: &GaConfig, n_segments: usize) -> Result<Vec<HeuristicRun>, SchedError> {
    let ready = ReadyTimes::zeros(etc.machines());
    Heuristic::ALL
        .iter()
        .map(|&h| {
            let start = Instant::now();
            let map = h.run(etc, &ready, n_segments, ga)?;
            let wall_s = start.elapsed().as_secs_f64();
            Ok(HeuristicRun { heuristic: h, makespan: makespan(etc, &ready, &map)?, wall_s })
        })
        .collect()
}

/// Instance seeds in class-then-instance order, drawn from the suite seed.
pub fn instance_seeds(suite: &BenchSuite) -> Vec<(EtcClass, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let mut out = Vec::with_capacity(suite.classes.len() * suite.instances);
    for &class in &suite.classes {
        for _ in 0..suite.instances {
            out.push((class, rng.next_u64()));
        }
    }
    out
}

pub fn run_bench(suite: &BenchSuite) -> Result<Vec<BenchRow>, SchedError> {
    suite.ga.validate()?;
    let mut rows = instance_seeds(suite)
        .into_par_iter()
        .map(|(class, seed)| {
            let etc = gen_etc(suite.t, suite.m, class, seed)?;
            let ga = GaConfig { rng_seed: seed, ..suite.ga.clone() };
            let runs = bench_instance(&etc, &ga, suite.n_segments.clamp(1, suite.t))?;
            Ok(BenchRow { class, seed, runs })
        })
        .collect::<Result<Vec<_>, SchedError>>()?;
    rows.sort_by_key(|r| (r.class, r.seed));
    Ok(rows)
}

/// Exhaustive optimum over all `m^t` mappings.
pub fn brute_force(etc: &EtcMatrix, ready: &ReadyTimes) -> Result<(Mapping, f64), BenchError> {
    let (t, m) = (etc.tasks(), etc.machines());
    let space = (m as f64).powi(t as i32);
    if space > 5e7 {
        return Err(BenchError::TooLarge(space));
    }
    let mut assign = vec![0usize; t];
    let mut best = (Mapping(assign.clone()), f64::INFINITY);
    loop {
        let value = makespan(etc, ready, &Mapping(assign.clone()))?;
        if value < best.1 {
            best = (Mapping(assign.clone()), value);
        }
        let mut k = 0;
        while k < t {
            assign[k] += 1;
            if assign[k] < m {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
        if k == t {
            return Ok(best);
        }
    }
}

/// `t m` on the first line, then one line of `m` reals per task.
pub fn write_instance(etc: &EtcMatrix) -> String {
    let mut out = format!("{} {}\n", etc.tasks(), etc.machines());
    for row in etc.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_instance(text: &str) -> Result<EtcMatrix, BenchError> {
    let bad = |msg: String| BenchError::BadInstance(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| bad(format!("bad dimension `{w}`"))))
        .collect::<Result<_, _>>()?;
    let [t, m] = dims[..] else {
        return Err(bad("first line must be `t m`".into()));
    };
    let mut data = Vec::with_capacity(t * m);
    for i in 0..t {
        let line = lines.next().ok_or_else(|| bad(format!("missing row {i}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse().map_err(|_| bad(format!("bad value `{w}` in row {i}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != m {
            return Err(bad(format!("row {i} has {} values, expected {m}", row.len())));
        }
        data.extend(row);
    }
    if lines.next().is_some() {
        return Err(bad("trailing rows".into()));
    }
    Ok(EtcMatrix::new(t, m, data)?)
}

/// One CSV line: `class,seed,heuristic,makespan,wall_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub class: String,
    pub seed: u64,
    pub heuristic: String,
    pub makespan: f64,
    pub wall_s: f64,
}

pub fn csv_records(rows: &[BenchRow]) -> Vec<CsvRecord> {
    rows.iter()
        .flat_map(|r| {
            r.runs.iter().map(move |run| CsvRecord {
                class: r.class.to_string(),
                seed: r.seed,
                heuristic: run.heuristic.name().to_string(),
                makespan: run.makespan,
                wall_s: run.wall_s,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for rec in csv_records(rows) {
        w.serialize(rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRecord>, BenchError> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: EtcClass,
    pub instances: usize,
    pub mean_makespan: BTreeMap<Heuristic, f64>,
    pub mean_wall_s: BTreeMap<Heuristic, f64>,
    /// `100 * (minmin - ga) / minmin` on the class means.
    pub ga_improvement_pct: f64,
    /// Instances where GA beat Min-Min strictly.
    pub ga_strict_wins: usize,
}

pub fn summarize(rows: &[BenchRow]) -> Vec<ClassSummary> {
    let mut by_class: BTreeMap<EtcClass, Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        by_class.entry(r.class).or_default().push(r);
    }
    by_class
        .into_iter()
        .map(|(class, rs)| {
            let n = rs.len() as f64;
            let mut mean_makespan = BTreeMap::new();
            let mut mean_wall_s = BTreeMap::new();
            for h in Heuristic::ALL {
                let runs: Vec<&HeuristicRun> = rs.iter().flat_map(|r| r.runs.iter().filter(move |x| x.heuristic == h)).collect();
                if runs.is_empty() {
                    continue;
                }
                mean_makespan.insert(h, runs.iter().map(|x| x.makespan).sum::<f64>() / n);
                mean_wall_s.insert(h, runs.iter().map(|x| x.wall_s).sum::<f64>() / n);
            }
            let ga_improvement_pct = match (mean_makespan.get(&Heuristic::MinMin), mean_makespan.get(&Heuristic::Ga)) {
                (Some(mm), Some(ga)) => 100.0 * (mm - ga) / mm,
                _ => 0.0,
            };
            let ga_strict_wins = rs
                .iter()
                .filter(|r| matches!((r.makespan(Heuristic::Ga), r.makespan(Heuristic::MinMin)), (Some(g), Some(m)) if g < m))
                .count();
            ClassSummary { class, instances: rs.len(), mean_makespan, mean_wall_s, ga_improvement_pct, ga_strict_wins }
        })
        .collect()
}

/// Aligned plain-text table: mean makespan per heuristic per class, GA
/// improvement over Min-Min, then mean wall time per heuristic.
pub fn format_summary(summary: &[ClassSummary]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10} {:>4}", "class", "n");
    for h in Heuristic::ALL {
        let _ = write!(out, " {:>13}", h.name());
    }
    let _ = writeln!(out, " {:>9} {:>6}", "ga_vs_mm%", "wins");
    for s in summary {
        let _ = write!(out, "{:<10} {:>4}", s.class.to_string(), s.instances);
        for h in Heuristic::ALL {
            let _ = write!(out, " {:>13.2}", s.mean_makespan.get(&h).copied().unwrap_or(f64::NAN));
        }
        let _ = writeln!(out, " {:>9.3} {:>6}", s.ga_improvement_pct, s.ga_strict_wins);
    }
    let _ = writeln!(out);
    let _ = write!(out, "{:<15}", "mean wall (ms)");
    for h in Heuristic::ALL {
        let _ = write!(out, " {:>13}", h.name());
    }
    let _ = writeln!(out);
    for s in summary {
        let _ = write!(out, "{:<15}", s.class.to_string());
        for h in Heuristic::ALL {
            let _ = write!(out, " {:>13.3}", 1e3 * s.mean_wall_s.get(&h).copied().unwrap_or(f64::NAN));
        }
        let _ = writeln!(out);
    }
    out
}
