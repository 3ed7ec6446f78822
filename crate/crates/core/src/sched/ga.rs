use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::etc::{makespan_unchecked, EtcMatrix, Mapping, ReadyTimes};
use super::heuristics::min_min;
use super::sympathy::{segmented_min_min, segmented_sympathy};
use super::SchedError;

/// Genetic algorithm parameters. The population is seeded with the Min-Min,
/// Segmented Min-Min and Segmented Sympathy mappings; the rest is uniform random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub max_generations: usize,
    /// Stop after this many generations without elite improvement.
    pub stagnation_limit: usize,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 200,
            crossover_prob: 0.6,
            mutation_prob: 0.4,
            max_generations: 1000,
            stagnation_limit: 150,
            rng_seed: 0x6772_6964_6c65_7401,
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { rng_seed: seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |msg: &str| Err(SchedError::BadConfig(msg.to_string()));
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob must lie in [0, 1]");
        }
        if self.max_generations == 0 {
            return bad("max_generations must be positive");
        }
        if self.stagnation_limit == 0 {
            return bad("stagnation_limit must be positive");
        }
        Ok(())
    }
}

/// Elite makespan after seeding (index 0) and after each generation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaTrace {
    pub elite_makespans: Vec<f64>,
}

impl GaTrace {
    pub fn generations(&self) -> usize {
        self.elite_makespans.len().saturating_sub(1)
    }
}

pub fn ga_schedule(
    etc: &EtcMatrix,
    ready: &ReadyTimes,
    cfg: &GaConfig,
    n_segments: usize,
) -> Result<Mapping, SchedError> {
    ga_schedule_traced(etc, ready, cfg, n_segments).map(|(map, _)| map)
}

pub fn ga_schedule_traced(
    etc: &EtcMatrix,
    ready: &ReadyTimes,
    cfg: &GaConfig,
    n_segments: usize,
) -> Result<(Mapping, GaTrace), SchedError> {
    cfg.validate()?;
    ready.check(etc)?;
    let (t, m) = (etc.tasks(), etc.machines());
    let r = ready.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut population: Vec<Vec<usize>> = vec![
        min_min(etc, ready)?.0,
        segmented_min_min(etc, ready, n_segments)?.0,
        segmented_sympathy(etc, ready, n_segments)?.0,
    ];
    while population.len() < cfg.population {
        population.push((0..t).map(|_| rng.gen_range(0..m)).collect());
    }
    let mut fitness: Vec<f64> = population.iter().map(|c| makespan_unchecked(etc, r, c)).collect();

    let first = argmin(&fitness);
    let mut elite = population[first].clone();
    let mut elite_ms = fitness[first];
    let mut trace = GaTrace { elite_makespans: vec![elite_ms] };
    let mut stagnant = 0;

    for _ in 0..cfg.max_generations {
        let mut next: Vec<Vec<usize>> = Vec::with_capacity(cfg.population);
        next.push(elite.clone());
        while next.len() < cfg.population {
            let a = tournament(&mut rng, &fitness);
            let b = tournament(&mut rng, &fitness);
            let (mut c1, mut c2) = (population[a].clone(), population[b].clone());
            if t >= 2 && rng.gen_bool(cfg.crossover_prob) {
                let cut = rng.gen_range(1..t);
                c1[cut..].swap_with_slice(&mut c2[cut..]);
            }
            for mut child in [c1, c2] {
                if rng.gen_bool(cfg.mutation_prob) {
                    let gene = rng.gen_range(0..t);
                    child[gene] = rng.gen_range(0..m);
                }
                if next.len() < cfg.population {
                    next.push(child);
                }
            }
        }
        population = next;
        fitness = population.iter().map(|c| makespan_unchecked(etc, r, c)).collect();

        let best = argmin(&fitness);
        if fitness[best] < elite_ms {
            elite_ms = fitness[best];
            elite = population[best].clone();
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        trace.elite_makespans.push(elite_ms);
        if stagnant >= cfg.stagnation_limit {
            break;
        }
    }
    Ok((Mapping(elite), trace))
}

/// Binary tournament; the earlier index wins ties.
fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64]) -> usize {
    let a = rng.gen_range(0..fitness.len());
    let b = rng.gen_range(0..fitness.len());
    if fitness[b] < fitness[a] || (fitness[b] == fitness[a] && b < a) {
        b
    } else {
        a
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}
