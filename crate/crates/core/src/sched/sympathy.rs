use std::cmp::Ordering;

use super::etc::{EtcMatrix, Mapping, ReadyTimes};
use super::heuristics::min_min_into;
use super::SchedError;

/// Per-task sympathy: mean times population variance of the task's
/// completion times across all machines.
#[derive(Debug, Clone, PartialEq)]
pub struct SympathyVector(pub Vec<f64>);

impl SympathyVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn sympathy(etc: &EtcMatrix, ready: &ReadyTimes) -> Result<SympathyVector, SchedError> {
    ready.check(etc)?;
    let r = ready.as_slice();
    let s = (0..etc.tasks())
        .map(|i| {
            // Welford accumulation over completion times c_ij = r[j] + etc[i][j].
            let (mut mean, mut m2) = (0.0f64, 0.0f64);
            for (k, (&cost, &rj)) in etc.row(i).iter().zip(r).enumerate() {
                let c = rj + cost;
                let delta = c - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (c - mean);
            }
            let var = (m2 / etc.machines() as f64).max(0.0);
            mean * var
        })
        .collect();
    Ok(SympathyVector(s))
}

/// Sorts tasks by sympathy (highest first), splits them into `n_segments`
/// contiguous segments and runs Min-Min segment by segment, carrying machine
/// ready times forward.
pub fn segmented_sympathy(etc: &EtcMatrix, ready: &ReadyTimes, n_segments: usize) -> Result<Mapping, SchedError> {
    let keys = sympathy(etc, ready)?.0;
    segmented(etc, ready, n_segments, &keys)
}

/// As [`segmented_sympathy`], keyed on each task's average ETC over machines.
pub fn segmented_min_min(etc: &EtcMatrix, ready: &ReadyTimes, n_segments: usize) -> Result<Mapping, SchedError> {
    ready.check(etc)?;
    let keys: Vec<f64> = etc.rows().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect();
    segmented(etc, ready, n_segments, &keys)
}

fn segmented(etc: &EtcMatrix, ready: &ReadyTimes, n_segments: usize, keys: &[f64]) -> Result<Mapping, SchedError> {
    let t = etc.tasks();
    if n_segments == 0 || n_segments > t {
        return Err(SchedError::BadSegmentCount { n: n_segments, t });
    }
    let order = descending_order(keys);
    let mut loads = ready.as_slice().to_vec();
    let mut assign = vec![0; t];
    let mut start = 0;
    for size in segment_sizes(t, n_segments) {
        min_min_into(etc, &mut loads, &order[start..start + size], &mut assign);
        start += size;
    }
    Ok(Mapping(assign))
}

/// Task indices sorted by descending key; equal keys keep index order.
pub(crate) fn descending_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Near-equal segment sizes; the first `t % n` segments take one extra task.
pub(crate) fn segment_sizes(t: usize, n: usize) -> impl Iterator<Item = usize> {
    let (base, extra) = (t / n, t % n);
    (0..n).map(move |k| base + usize::from(k < extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::{makespan, mct, min_min};

    fn m(rows: &[&[f64]]) -> EtcMatrix {
        EtcMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn four() -> EtcMatrix {
        m(&[&[1.0, 9.0], &[4.0, 6.0], &[2.0, 8.0], &[5.0, 5.0]])
    }

    #[test]
    fn sympathy_examples() {
        let r = ReadyTimes::zeros(2);
        assert_eq!(sympathy(&m(&[&[2.0, 4.0]]), &r).unwrap().0, vec![3.0]);
        assert_eq!(sympathy(&m(&[&[1.0, 9.0]]), &r).unwrap().0, vec![80.0]);
        let flat = m(&[&[5.0, 5.0, 5.0]]);
        let r3 = ReadyTimes::new(vec![1.5, 1.5, 1.5]).unwrap();
        assert_eq!(sympathy(&flat, &r3).unwrap().0, vec![0.0]);
        assert_eq!(sympathy(&four(), &r).unwrap().0, vec![80.0, 5.0, 45.0, 0.0]);
    }

    #[test]
    fn segmented_sympathy_worked_example() {
        let r = ReadyTimes::zeros(2);
        let map = segmented_sympathy(&four(), &r, 2).unwrap();
        assert_eq!(map.0, vec![0, 0, 0, 1]);
        assert_eq!(makespan(&four(), &r, &map).unwrap(), 7.0);
    }

    #[test]
    fn single_segment_is_min_min() {
        let r = ReadyTimes::zeros(2);
        assert_eq!(segmented_sympathy(&four(), &r, 1).unwrap(), min_min(&four(), &r).unwrap());
        assert_eq!(segmented_min_min(&four(), &r, 1).unwrap(), min_min(&four(), &r).unwrap());
    }

    #[test]
    fn one_task_per_segment_is_mct_in_sympathy_order() {
        let r = ReadyTimes::zeros(2);
        let order = descending_order(&sympathy(&four(), &r).unwrap().0);
        assert_eq!(order, vec![0, 2, 1, 3]);
        assert_eq!(segmented_sympathy(&four(), &r, 4).unwrap(), mct(&four(), &r, &order).unwrap());
    }

    #[test]
    fn segmented_min_min_tie_order() {
        // All averages equal 5.0: segments are {t0,t1} then {t2,t3}.
        let r = ReadyTimes::zeros(2);
        let map = segmented_min_min(&four(), &r, 2).unwrap();
        // {t0,t1}: t0->m0 (1), t1: m0 5 vs m1 6 -> m0 (5). {t2,t3}: t2: m0 7, m1 8;
        // t3: m0 10, m1 5 -> t3->m1 (5); t2: m0 7, m1 13 -> m0.
        assert_eq!(map.0, vec![0, 0, 0, 1]);

        let skew = m(&[&[2.0, 2.0], &[10.0, 10.0]]);
        // avg-10 task goes first and takes machine 0.
        assert_eq!(segmented_min_min(&skew, &r, 2).unwrap().0, vec![1, 0]);
    }

    #[test]
    fn bad_segment_count() {
        let r = ReadyTimes::zeros(2);
        assert_eq!(segmented_sympathy(&four(), &r, 0), Err(SchedError::BadSegmentCount { n: 0, t: 4 }));
        assert_eq!(segmented_min_min(&four(), &r, 5), Err(SchedError::BadSegmentCount { n: 5, t: 4 }));
    }

    #[test]
    fn segment_sizes_front_loaded() {
        assert_eq!(segment_sizes(10, 4).collect::<Vec<_>>(), vec![3, 3, 2, 2]);
        assert_eq!(segment_sizes(4, 4).collect::<Vec<_>>(), vec![1, 1, 1, 1]);
    }
}
