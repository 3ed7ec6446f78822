//! C ABI over the gridlet mapping heuristics and PSS parser.
//!
//! Every fallible function returns a [`GridletStatus`]. On failure a
//! human-readable message is kept per thread and can be fetched with
//! [`gridlet_last_error_message`]. Objects are opaque and must be released
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gridlet::bench::{gen_etc, BenchError, EtcClass};
use gridlet::pss::{parse_pss, topo_priority_indices, Problem, PssError};
use gridlet::sched::{makespan, sympathy, EtcMatrix, GaConfig, Heuristic, Mapping, ReadyTimes, SchedError};

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridletStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    ParseError = 4,
    IoError = 5,
    Panic = 6,
}

/// Mapping heuristic selector for [`gridlet_schedule`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridletHeuristic {
    Mct = 0,
    MinMin = 1,
    Sufferage = 2,
    SegmentedMinMin = 3,
    SegmentedSympathy = 4,
    Genetic = 5,
}

impl From<GridletHeuristic> for Heuristic {
    fn from(h: GridletHeuristic) -> Self {
        match h {
            GridletHeuristic::Mct => Heuristic::Mct,
            GridletHeuristic::MinMin => Heuristic::MinMin,
            GridletHeuristic::Sufferage => Heuristic::Sufferage,
            GridletHeuristic::SegmentedMinMin => Heuristic::SegMinMin,
            GridletHeuristic::SegmentedSympathy => Heuristic::SegSympathy,
            GridletHeuristic::Genetic => Heuristic::Ga,
        }
    }
}

/// Opaque expected-time-to-compute matrix.
pub struct GridletEtc {
    inner: EtcMatrix,
}

/// Opaque parsed problem. Task ids are kept as C strings so pointers handed
/// out stay valid until the problem is freed.
pub struct GridletProblem {
    inner: Problem,
    ids: Vec<CString>,
    name: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GridletStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<SchedError> for Failure {
    fn from(e: SchedError) -> Self {
        let status = match e {
            SchedError::DimensionMismatch(_) => GridletStatus::DimensionMismatch,
            _ => GridletStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Sched(e) => e.into(),
            other => Failure(GridletStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<PssError> for Failure {
    fn from(e: PssError) -> Self {
        Failure(GridletStatus::ParseError, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> GridletStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GridletStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GridletStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(GridletStatus::NullArgument, format!("{what} is null"))
}

unsafe fn etc_ref<'a>(etc: *const GridletEtc) -> FfiResult<&'a EtcMatrix> {
    etc.as_ref().map(|e| &e.inner).ok_or_else(|| null("etc"))
}

unsafe fn ready_times(ready: *const f64, machines: usize) -> FfiResult<ReadyTimes> {
    if ready.is_null() {
        return Ok(ReadyTimes::zeros(machines));
    }
    Ok(ReadyTimes::new(std::slice::from_raw_parts(ready, machines).to_vec())?)
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure(GridletStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes). Returns the full message length
/// without the terminator, or 0 when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gridlet_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn gridlet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a matrix from `tasks * machines` row-major entries.
///
/// # Safety
/// `data` must point to `tasks * machines` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gridlet_etc_new(
    tasks: usize,
    machines: usize,
    data: *const f64,
    out: *mut *mut GridletEtc,
) -> GridletStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = tasks
            .checked_mul(machines)
            .ok_or_else(|| Failure(GridletStatus::InvalidArgument, "matrix size overflows".into()))?;
        let inner = EtcMatrix::new(tasks, machines, std::slice::from_raw_parts(data, len).to_vec())?;
        *out = Box::into_raw(Box::new(GridletEtc { inner }));
        Ok(())
    })
}

/// Draws a random matrix of a named heterogeneity class such as `"u_c_hihi"`.
///
/// # Safety
/// `class_name` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gridlet_etc_generate(
    tasks: usize,
    machines: usize,
    class_name: *const c_char,
    seed: u64,
    out: *mut *mut GridletEtc,
) -> GridletStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let class: EtcClass = c_str(class_name, "class_name")?.parse()?;
        let inner = gen_etc(tasks, machines, class, seed)?;
        *out = Box::into_raw(Box::new(GridletEtc { inner }));
        Ok(())
    })
}

/// # Safety
/// `etc` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gridlet_etc_free(etc: *mut GridletEtc) {
    if !etc.is_null() {
        drop(Box::from_raw(etc));
    }
}

/// # Safety
/// `etc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_etc_tasks(etc: *const GridletEtc) -> usize {
    etc.as_ref().map_or(0, |e| e.inner.tasks())
}

/// # Safety
/// `etc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_etc_machines(etc: *const GridletEtc) -> usize {
    etc.as_ref().map_or(0, |e| e.inner.machines())
}

/// Maps every task to a machine. `ready` may be null for all-zero ready
/// times; otherwise it holds one entry per machine. `mapping_out` receives
/// one machine index per task. `makespan_out` may be null.
///
/// # Safety
/// Pointers must be valid for the sizes implied by the matrix dimensions.
#[no_mangle]
pub unsafe extern "C" fn gridlet_schedule(
    etc: *const GridletEtc,
    ready: *const f64,
    heuristic: GridletHeuristic,
    n_segments: usize,
    ga_seed: u64,
    mapping_out: *mut usize,
    makespan_out: *mut f64,
) -> GridletStatus {
    guard(|| {
        let etc = etc_ref(etc)?;
        if mapping_out.is_null() {
            return Err(null("mapping_out"));
        }
        let ready = ready_times(ready, etc.machines())?;
        let map = Heuristic::from(heuristic).run(etc, &ready, n_segments.max(1), &GaConfig::with_seed(ga_seed))?;
        let span = makespan(etc, &ready, &map)?;
        std::slice::from_raw_parts_mut(mapping_out, etc.tasks()).copy_from_slice(map.as_slice());
        if !makespan_out.is_null() {
            *makespan_out = span;
        }
        Ok(())
    })
}

/// Makespan of an explicit mapping.
///
/// # Safety
/// `mapping` must hold one entry per task; `ready` is null or one per machine.
#[no_mangle]
pub unsafe extern "C" fn gridlet_makespan(
    etc: *const GridletEtc,
    ready: *const f64,
    mapping: *const usize,
    out: *mut f64,
) -> GridletStatus {
    guard(|| {
        let etc = etc_ref(etc)?;
        if mapping.is_null() {
            return Err(null("mapping"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let ready = ready_times(ready, etc.machines())?;
        let map = Mapping(std::slice::from_raw_parts(mapping, etc.tasks()).to_vec());
        *out = makespan(etc, &ready, &map)?;
        Ok(())
    })
}

/// Per-task sympathy into `out`, one entry per task.
///
/// # Safety
/// `out` must hold one entry per task; `ready` is null or one per machine.
#[no_mangle]
pub unsafe extern "C" fn gridlet_sympathy(etc: *const GridletEtc, ready: *const f64, out: *mut f64) -> GridletStatus {
    guard(|| {
        let etc = etc_ref(etc)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ready = ready_times(ready, etc.machines())?;
        let s = sympathy(etc, &ready)?;
        std::slice::from_raw_parts_mut(out, etc.tasks()).copy_from_slice(s.as_slice());
        Ok(())
    })
}

/// Parses and validates a PSS document. Referenced files are resolved
/// relative to the document's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_load(path: *const c_char, out: *mut *mut GridletProblem) -> GridletStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = Path::new(c_str(path, "path")?);
        let xml = std::fs::read_to_string(path)
            .map_err(|e| Failure(GridletStatus::IoError, format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let inner = parse_pss(&xml, base)?;
        let ids = inner.tasks.iter().map(|t| CString::new(t.id.as_str()).unwrap_or_default()).collect();
        let name = CString::new(inner.name.replace('\0', " ")).unwrap_or_default();
        *out = Box::into_raw(Box::new(GridletProblem { inner, ids, name }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_free(problem: *mut GridletProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Problem name, owned by the handle. Null for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_name(problem: *const GridletProblem) -> *const c_char {
    problem.as_ref().map_or(ptr::null(), |p| p.name.as_ptr())
}

/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_task_count(problem: *const GridletProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.tasks.len())
}

/// Id of task `index`, owned by the handle. Null when out of range.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_task_id(problem: *const GridletProblem, index: usize) -> *const c_char {
    problem.as_ref().and_then(|p| p.ids.get(index)).map_or(ptr::null(), |id| id.as_ptr())
}

/// Returns 1 when task `i` depends on task `j`, 0 otherwise or when out of range.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_depends(problem: *const GridletProblem, i: usize, j: usize) -> i32 {
    match problem.as_ref() {
        Some(p) if i < p.inner.deps.len() && j < p.inner.deps.len() => i32::from(p.inner.deps.depends(i, j)),
        _ => 0,
    }
}

/// Writes task indices in dependency order, lower priority values first
/// among eligible tasks.
///
/// # Safety
/// `out` must hold one entry per task.
#[no_mangle]
pub unsafe extern "C" fn gridlet_problem_topo_order(problem: *const GridletProblem, out: *mut usize) -> GridletStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let order = topo_priority_indices(&p.inner);
        std::slice::from_raw_parts_mut(out, order.len()).copy_from_slice(&order);
        Ok(())
    })
}
