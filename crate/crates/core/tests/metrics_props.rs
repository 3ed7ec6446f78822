use gridlet::metrics::{estimate_etc, net_metric, update_net, EtcModel, NetEstimatorState, WorkerMetrics};
use gridlet::pss::TaskSpec;
use proptest::prelude::*;

fn task(work_hint: f64, payload_bytes: u64) -> TaskSpec {
    TaskSpec {
        id: "t".into(),
        task_file: "t.sh".into(),
        input_files: vec![],
        compile_cmd: String::new(),
        exec_cmd: "sh t.sh".into(),
        priority: 0,
        timeout_s: 10,
        work_hint,
        payload_bytes,
        is_checkpoint: false,
    }
}

fn one(t: &TaskSpec, w: WorkerMetrics, model: &EtcModel) -> f64 {
    estimate_etc(std::slice::from_ref(t), &[w], model).unwrap().get(0, 0)
}

fn model() -> impl Strategy<Value = EtcModel> {
    (1.0f64..1e4, 1e3f64..1e9).prop_map(|(calibration, bandwidth)| EtcModel { calibration, bandwidth })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn etc_is_monotone_in_each_worker_metric(
        hint in 1e-3f64..1e3,
        payload in 0u64..1 << 30,
        perf in 1.0f64..1e5,
        net in 0.0f64..5.0,
        load in 0.0f64..8.0,
        bump in 1.0f64..10.0,
        m in model(),
    ) {
        let t = task(hint, payload);
        let base = one(&t, WorkerMetrics::new(perf, net, load), &m);
        prop_assert!(one(&t, WorkerMetrics::new(perf * bump, net, load), &m) <= base);
        prop_assert!(one(&t, WorkerMetrics::new(perf, net + bump, load), &m) >= base);
        prop_assert!(one(&t, WorkerMetrics::new(perf, net, load + bump), &m) >= base);
        prop_assert!(one(&task(hint * bump, payload), WorkerMetrics::new(perf, net, load), &m) >= base);
        prop_assert!(one(&task(hint, payload + 1000), WorkerMetrics::new(perf, net, load), &m) >= base);
    }

    #[test]
    fn etc_matches_cost_formula(
        hints in proptest::collection::vec(1e-3f64..1e3, 1..6),
        workers in proptest::collection::vec((1.0f64..1e5, 0.0f64..5.0, 0.0f64..8.0), 1..5),
        m in model(),
    ) {
        let tasks: Vec<TaskSpec> = hints.iter().enumerate().map(|(i, &h)| task(h, 1000 * i as u64)).collect();
        let ws: Vec<WorkerMetrics> = workers.iter().map(|&(p, n, l)| WorkerMetrics::new(p, n, l)).collect();
        let etc = estimate_etc(&tasks, &ws, &m).unwrap();
        for (i, t) in tasks.iter().enumerate() {
            for (j, &(p, n, l)) in workers.iter().enumerate() {
                let compute = t.work_hint * m.calibration / p;
                let expected = compute + compute * l + n + n + t.payload_bytes as f64 / m.bandwidth;
                let got = etc.get(i, j);
                prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", got, expected);
            }
        }
    }

    #[test]
    fn rtt_estimator_stays_within_sample_range(samples in proptest::collection::vec(1e-5f64..10.0, 1..60)) {
        let mut st = NetEstimatorState::default();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &s in &samples {
            st = update_net(st, s).unwrap();
            lo = lo.min(s);
            hi = hi.max(s);
            prop_assert!(st.srtt >= lo * (1.0 - 1e-12) && st.srtt <= hi * (1.0 + 1e-12));
            prop_assert!(st.rttvar >= 0.0);
            prop_assert!(st.rttvar <= hi);
            let net = net_metric(&st).unwrap();
            prop_assert!(net >= st.srtt / 2.0);
        }
        prop_assert_eq!(st.samples, samples.len() as u64);
    }

    #[test]
    fn rtt_estimator_rejects_bad_samples(bad in prop_oneof![Just(0.0f64), -1e6f64..0.0, Just(f64::NAN), Just(f64::INFINITY)]) {
        prop_assert!(update_net(NetEstimatorState::default(), bad).is_err());
        let st = update_net(NetEstimatorState::default(), 0.01).unwrap();
        prop_assert!(update_net(st, bad).is_err());
    }

    /// A steady link drives the variance term toward zero.
    #[test]
    fn steady_samples_shrink_variance(s in 1e-4f64..1.0, n in 40usize..120) {
        let mut st = NetEstimatorState::default();
        for _ in 0..n {
            st = update_net(st, s).unwrap();
        }
        prop_assert!(st.rttvar <= s / 2.0 * 0.75f64.powi(n as i32 - 1) + 1e-12 * s);
        prop_assert!((st.srtt - s).abs() <= 1e-12 * s);
    }
}
