use super::etc::{EtcMatrix, Mapping, ReadyTimes};
use super::SchedError;

/// Best machine for `task` given current loads; ties go to the lowest index.
#[inline]
pub(crate) fn best_machine(etc: &EtcMatrix, loads: &[f64], task: usize) -> (usize, f64) {
    let row = etc.row(task);
    let mut best = (0, loads[0] + row[0]);
    for (j, (&load, &cost)) in loads.iter().zip(row).enumerate().skip(1) {
        let ct = load + cost;
        if ct < best.1 {
            best = (j, ct);
        }
    }
    best
}

/// Best and second-best completion times; the second equals the first when m = 1.
fn best_two(etc: &EtcMatrix, loads: &[f64], task: usize) -> (usize, f64, f64) {
    let row = etc.row(task);
    let mut best = (0, loads[0] + row[0]);
    let mut second = f64::INFINITY;
    for (j, (&load, &cost)) in loads.iter().zip(row).enumerate().skip(1) {
        let ct = load + cost;
        if ct < best.1 {
            second = best.1;
            best = (j, ct);
        } else if ct < second {
            second = ct;
        }
    }
    if second.is_infinite() {
        second = best.1;
    }
    (best.0, best.1, second)
}

/// Assigns tasks in `order`, each to its minimum-completion-time machine.
pub fn mct(etc: &EtcMatrix, ready: &ReadyTimes, order: &[usize]) -> Result<Mapping, SchedError> {
    ready.check(etc)?;
    check_permutation(order, etc.tasks())?;
    let mut loads = ready.as_slice().to_vec();
    let mut assign = vec![0; etc.tasks()];
    mct_into(etc, &mut loads, order, &mut assign);
    Ok(Mapping(assign))
}

pub(crate) fn mct_into(etc: &EtcMatrix, loads: &mut [f64], order: &[usize], assign: &mut [usize]) {
    for &task in order {
        let (machine, ct) = best_machine(etc, loads, task);
        assign[task] = machine;
        loads[machine] = ct;
    }
}

pub fn min_min(etc: &EtcMatrix, ready: &ReadyTimes) -> Result<Mapping, SchedError> {
    ready.check(etc)?;
    let mut loads = ready.as_slice().to_vec();
    let mut assign = vec![0; etc.tasks()];
    let tasks: Vec<usize> = (0..etc.tasks()).collect();
    min_min_into(etc, &mut loads, &tasks, &mut assign);
    Ok(Mapping(assign))
}

/// Min-Min over the subset `tasks`, mutating `loads`. Ties: lowest task index
/// within the subset, then lowest machine index.
pub(crate) fn min_min_into(etc: &EtcMatrix, loads: &mut [f64], tasks: &[usize], assign: &mut [usize]) {
    let mut pending: Vec<usize> = tasks.to_vec();
    pending.sort_unstable();
    while !pending.is_empty() {
        let mut pick: Option<(usize, usize, f64)> = None;
        for (slot, &task) in pending.iter().enumerate() {
            let (machine, ct) = best_machine(etc, loads, task);
            if pick.is_none_or(|(_, _, best)| ct < best) {
                pick = Some((slot, machine, ct));
            }
        }
        let (slot, machine, ct) = pick.expect("pending is non-empty");
        let task = pending.remove(slot);
        assign[task] = machine;
        loads[machine] = ct;
    }
}

/// Batch Sufferage: repeatedly maps the task whose second-best completion
/// time exceeds its best by the largest margin. With one machine this is
/// `mct` in index order.
pub fn sufferage(etc: &EtcMatrix, ready: &ReadyTimes) -> Result<Mapping, SchedError> {
    ready.check(etc)?;
    if etc.machines() == 1 {
        let order: Vec<usize> = (0..etc.tasks()).collect();
        return mct(etc, ready, &order);
    }
    let mut loads = ready.as_slice().to_vec();
    let mut assign = vec![0; etc.tasks()];
    let mut pending: Vec<usize> = (0..etc.tasks()).collect();
    while !pending.is_empty() {
        let mut pick: Option<(usize, usize, f64, f64)> = None;
        for (slot, &task) in pending.iter().enumerate() {
            let (machine, best, second) = best_two(etc, &loads, task);
            let suff = second - best;
            if pick.is_none_or(|(_, _, _, s)| suff > s) {
                pick = Some((slot, machine, best, suff));
            }
        }
        let (slot, machine, ct, _) = pick.expect("pending is non-empty");
        let task = pending.remove(slot);
        assign[task] = machine;
        loads[machine] = ct;
    }
    Ok(Mapping(assign))
}

fn check_permutation(order: &[usize], t: usize) -> Result<(), SchedError> {
    let mut seen = vec![false; t];
    if order.len() != t {
        return Err(SchedError::DimensionMismatch(format!("order has {} entries, expected {t}", order.len())));
    }
    for &i in order {
        if i >= t || std::mem::replace(&mut seen[i], true) {
            return Err(SchedError::DimensionMismatch(format!("order is not a permutation of 0..{t}")));
        }
    }
    Ok(())
}
