use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use crate::metrics::{net_metric, update_net, NetEstimatorState, WorkerMetrics};
use crate::transport::Heartbeat;

use super::state::WorkerView;

/// Net metric assumed until the first RTT sample arrives.
const DEFAULT_NET_S: f64 = 0.001;

#[derive(Debug, Clone)]
pub struct WorkerEntry {
    pub worker_id: String,
    /// TCP address accepting ASSIGN and CANCEL.
    pub addr: SocketAddr,
    pub metrics: WorkerMetrics,
    pub net_state: NetEstimatorState,
    pub slots: u32,
    pub last_seen: Instant,
    pub heartbeats: u64,
}

/// Workers known from heartbeats.
#[derive(Debug, Default)]
pub struct Registry {
    workers: BTreeMap<String, WorkerEntry>,
}

impl Registry {
    /// Records a heartbeat from `from`; returns true for a new worker.
    pub fn observe(&mut self, hb: &Heartbeat, from: SocketAddr, now: Instant) -> bool {
        let addr = SocketAddr::new(from.ip(), hb.worker_port);
        let entry = self.workers.entry(hb.worker_id.clone());
        let fresh = matches!(entry, std::collections::btree_map::Entry::Vacant(_));
        let w = entry.or_insert_with(|| WorkerEntry {
            worker_id: hb.worker_id.clone(),
            addr,
            metrics: WorkerMetrics::new(hb.perf.max(f64::MIN_POSITIVE), DEFAULT_NET_S, hb.load.max(0.0)),
            net_state: NetEstimatorState::default(),
            slots: hb.slots.max(1),
            last_seen: now,
            heartbeats: 0,
        });
        w.addr = addr;
        if hb.net_rtt_sample > 0.0 {
            if let Ok(s) = update_net(w.net_state, hb.net_rtt_sample) {
                w.net_state = s;
            }
        }
        let net = net_metric(&w.net_state).unwrap_or(DEFAULT_NET_S);
        if hb.perf > 0.0 && hb.perf.is_finite() {
            w.metrics = WorkerMetrics::new(hb.perf, net, hb.load.max(0.0));
        } else {
            w.metrics = WorkerMetrics::new(w.metrics.perf, net, hb.load.max(0.0));
        }
        w.slots = hb.slots.max(1);
        w.last_seen = now;
        w.heartbeats += 1;
        fresh
    }

    pub fn get(&self, worker_id: &str) -> Option<&WorkerEntry> {
        self.workers.get(worker_id)
    }

    pub fn live(&self, lost_after: Duration, now: Instant) -> Vec<&WorkerEntry> {
        self.workers.values().filter(|w| now.saturating_duration_since(w.last_seen) < lost_after).collect()
    }

    pub fn live_views(&self, lost_after: Duration, now: Instant) -> Vec<WorkerView> {
        self.live(lost_after, now)
            .into_iter()
            .map(|w| WorkerView { worker_id: w.worker_id.clone(), metrics: w.metrics.clone(), slots: w.slots })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hb(id: &str, rtt: f64) -> Heartbeat {
        Heartbeat {
            worker_id: id.into(),
            seq: 1,
            perf: 500.0,
            net_rtt_sample: rtt,
            load: 0.2,
            slots: 2,
            slots_free: 2,
            worker_port: 4000,
        }
    }

    #[test]
    fn tracks_workers_and_liveness() {
        let mut r = Registry::default();
        let t0 = Instant::now();
        let from: SocketAddr = "127.0.0.1:9999".parse().unwrap();
        assert!(r.observe(&hb("a", 0.0), from, t0));
        assert!(!r.observe(&hb("a", 0.01), from, t0));
        let a = r.get("a").unwrap();
        assert_eq!(a.addr, "127.0.0.1:4000".parse().unwrap());
        assert_eq!(a.slots, 2);
        // First sample: srtt = 0.01, rttvar = 0.005, net = (0.01 + 0.02) / 2.
        assert!((a.metrics.net - 0.015).abs() < 1e-12);
        assert_eq!(r.live(Duration::from_secs(6), t0 + Duration::from_secs(5)).len(), 1);
        assert!(r.live(Duration::from_secs(6), t0 + Duration::from_secs(7)).is_empty());
    }
}
