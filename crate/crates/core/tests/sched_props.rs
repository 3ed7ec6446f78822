use gridlet::sched::{
    ga_schedule, ga_schedule_traced, makespan, min_min, segmented_min_min, segmented_sympathy, sympathy, EtcMatrix,
    GaConfig, Heuristic, ReadyTimes,
};
use proptest::prelude::*;

/// Exhaustive optimum over all m^t assignments, loads rebuilt per leaf.
fn oracle_optimum(rows: &[Vec<f64>], ready: &[f64]) -> f64 {
    let (t, m) = (rows.len(), ready.len());
    let mut best = f64::INFINITY;
    for code in 0..m.pow(t as u32) {
        let mut loads = ready.to_vec();
        let mut c = code;
        for row in rows {
            loads[c % m] += row[c % m];
            c /= m;
        }
        best = best.min(loads.iter().cloned().fold(f64::MIN, f64::max));
    }
    best
}

fn instance(max_t: usize, max_m: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1..=max_t, 1..=max_m).prop_flat_map(|(t, m)| {
        (
            proptest::collection::vec(proptest::collection::vec(1.0f64..1000.0, m), t),
            proptest::collection::vec(0.0f64..200.0, m),
        )
    })
}

fn small_ga(seed: u64) -> GaConfig {
    GaConfig { population: 60, max_generations: 300, stagnation_limit: 60, rng_seed: seed, ..GaConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_heuristic_beats_the_optimum((rows, ready) in instance(7, 3), seed in any::<u64>()) {
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready.clone()).unwrap();
        let opt = oracle_optimum(&rows, &ready);
        for h in Heuristic::ALL {
            let map = h.run(&etc, &r, 2, &small_ga(seed)).unwrap();
            let span = makespan(&etc, &r, &map).unwrap();
            prop_assert!(span >= opt * (1.0 - 1e-12), "{h}: {span} < {opt}");
        }
    }

    #[test]
    fn ga_dominates_its_seeds((rows, ready) in instance(20, 5), seed in any::<u64>(), n in 1usize..5) {
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready).unwrap();
        let n = n.min(etc.tasks());
        let ga = makespan(&etc, &r, &ga_schedule(&etc, &r, &small_ga(seed), n).unwrap()).unwrap();
        for seed_map in [
            min_min(&etc, &r).unwrap(),
            segmented_min_min(&etc, &r, n).unwrap(),
            segmented_sympathy(&etc, &r, n).unwrap(),
        ] {
            prop_assert!(ga <= makespan(&etc, &r, &seed_map).unwrap());
        }
    }

    #[test]
    fn elite_trace_is_non_increasing((rows, ready) in instance(16, 4), seed in any::<u64>()) {
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready).unwrap();
        let (map, trace) = ga_schedule_traced(&etc, &r, &small_ga(seed), 2.min(etc.tasks())).unwrap();
        prop_assert!(trace.elite_makespans.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*trace.elite_makespans.last().unwrap(), makespan(&etc, &r, &map).unwrap());
    }

    #[test]
    fn one_segment_is_min_min((rows, ready) in instance(24, 6)) {
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready).unwrap();
        let mm = min_min(&etc, &r).unwrap();
        prop_assert_eq!(&segmented_sympathy(&etc, &r, 1).unwrap(), &mm);
        prop_assert_eq!(&segmented_min_min(&etc, &r, 1).unwrap(), &mm);
    }

    #[test]
    fn machine_permutation_invariance((rows, ready) in instance(12, 5), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready.clone()).unwrap();
        let m = etc.machines();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        // Column j of the permuted instance is original column perm[j].
        let etc_p = etc.permute_machines(&perm).unwrap();
        let r_p = ReadyTimes::new(perm.iter().map(|&k| ready[k]).collect()).unwrap();

        let s = sympathy(&etc, &r).unwrap();
        let s_p = sympathy(&etc_p, &r_p).unwrap();
        for (a, b) in s.as_slice().iter().zip(s_p.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
        for h in Heuristic::ALL.into_iter().filter(|&h| h != Heuristic::Ga) {
            let map = h.run(&etc, &r, 3, &GaConfig::default()).unwrap();
            let map_p = h.run(&etc_p, &r_p, 3, &GaConfig::default()).unwrap();
            for (i, &j) in map_p.as_slice().iter().enumerate() {
                prop_assert_eq!(perm[j], map.as_slice()[i], "{} task {}", h, i);
            }
            let a = makespan(&etc, &r, &map).unwrap();
            let b = makespan(&etc_p, &r_p, &map_p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn scaling_scales_makespan_exactly((rows, ready) in instance(12, 4), exp in -6i32..7, seed in any::<u64>()) {
        let k = 2f64.powi(exp);
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready.clone()).unwrap();
        let etc_k = etc.scaled(k).unwrap();
        let r_k = ReadyTimes::new(ready.iter().map(|v| v * k).collect()).unwrap();
        for h in Heuristic::ALL {
            let map = h.run(&etc, &r, 3, &small_ga(seed)).unwrap();
            let map_k = h.run(&etc_k, &r_k, 3, &small_ga(seed)).unwrap();
            prop_assert_eq!(&map, &map_k, "{}", h);
            prop_assert_eq!(makespan(&etc_k, &r_k, &map_k).unwrap(), k * makespan(&etc, &r, &map).unwrap());
        }
    }

    #[test]
    fn heuristics_are_pure((rows, ready) in instance(16, 4), seed in any::<u64>()) {
        let etc = EtcMatrix::from_rows(&rows).unwrap();
        let r = ReadyTimes::new(ready).unwrap();
        for h in Heuristic::ALL {
            prop_assert_eq!(h.run(&etc, &r, 2, &small_ga(seed)).unwrap(), h.run(&etc, &r, 2, &small_ga(seed)).unwrap());
        }
    }
}
