#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gridlet::pss::{parse_pss, Problem};
use gridlet::supervisor::{Supervisor, SupervisorConfig};
use gridlet::worker::{spawn_worker, WorkerConfig, WorkerHandle};

pub fn samples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

pub fn load_sample(name: &str) -> Problem {
    let base = samples_dir().join(name);
    let xml = std::fs::read_to_string(base.join("problem.xml")).unwrap();
    parse_pss(&xml, &base).unwrap()
}

pub struct Grid {
    pub supervisor: Supervisor,
    pub workers: Vec<WorkerHandle>,
    _dir: tempfile::TempDir,
}

impl Grid {
    pub fn start(n_workers: usize, tweak: impl FnOnce(&mut SupervisorConfig)) -> Grid {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SupervisorConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            beacon_target: None,
            work_dir: dir.path().join("supervisor"),
            ..SupervisorConfig::default()
        };
        tweak(&mut cfg);
        let supervisor = Supervisor::start(cfg).unwrap();
        let workers = (0..n_workers)
            .map(|k| {
                spawn_worker(worker_config(supervisor.local_addr(), &dir.path().join(format!("w{k}")), k)).unwrap()
            })
            .collect();
        assert!(supervisor.wait_for_workers(n_workers, Duration::from_secs(10)), "workers did not register");
        Grid { supervisor, workers, _dir: dir }
    }

    pub fn stop(self) {
        for w in self.workers {
            w.stop();
        }
        self.supervisor.stop();
    }
}

pub fn worker_config(supervisor: SocketAddr, root: &Path, k: usize) -> WorkerConfig {
    WorkerConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        supervisor: Some(supervisor),
        workspace_root: root.to_path_buf(),
        heartbeat_interval: Duration::from_millis(250),
        worker_id: format!("worker-{k}"),
        perf_override: Some(100.0),
        ..WorkerConfig::default()
    }
}

/// Sequential midpoint-rule value of the bundled pi problem.
pub fn pi_reference() -> f64 {
    let n = 8 * 1_000_000u64;
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            4.0 / (1.0 + x * x)
        })
        .sum::<f64>()
        * h
}
