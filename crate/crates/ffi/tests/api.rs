use std::ffi::{CStr, CString};
use std::ptr;

use gridlet::bench::{gen_etc, EtcClass};
use gridlet::sched::{makespan, GaConfig, Heuristic, ReadyTimes};
use gridlet_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { gridlet_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0, "no error recorded");
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn etc_from(rows: &[&[f64]]) -> *mut GridletEtc {
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let mut out = ptr::null_mut();
    let status = unsafe { gridlet_etc_new(rows.len(), rows[0].len(), data.as_ptr(), &mut out) };
    assert_eq!(status, GridletStatus::Ok);
    out
}

#[test]
fn schedule_agrees_with_the_library() {
    let class: EtcClass = "u_i_hihi".parse().unwrap();
    let name = CString::new(class.to_string()).unwrap();
    let mut etc = ptr::null_mut();
    assert_eq!(unsafe { gridlet_etc_generate(20, 4, name.as_ptr(), 9, &mut etc) }, GridletStatus::Ok);
    let reference = gen_etc(20, 4, class, 9).unwrap();
    let ready = [0.0, 5.0, 10.0, 0.0];
    let rt = ReadyTimes::new(ready.to_vec()).unwrap();
    let pairs = [
        (GridletHeuristic::Mct, Heuristic::Mct),
        (GridletHeuristic::MinMin, Heuristic::MinMin),
        (GridletHeuristic::Sufferage, Heuristic::Sufferage),
        (GridletHeuristic::SegmentedMinMin, Heuristic::SegMinMin),
        (GridletHeuristic::SegmentedSympathy, Heuristic::SegSympathy),
        (GridletHeuristic::Genetic, Heuristic::Ga),
    ];
    for (c, h) in pairs {
        let mut map = vec![usize::MAX; 20];
        let mut span = 0.0;
        let status = unsafe { gridlet_schedule(etc, ready.as_ptr(), c, 4, 3, map.as_mut_ptr(), &mut span) };
        assert_eq!(status, GridletStatus::Ok);
        let expected = h.run(&reference, &rt, 4, &GaConfig::with_seed(3)).unwrap();
        assert_eq!(map, expected.0, "{h}");
        assert_eq!(span, makespan(&reference, &rt, &expected).unwrap());

        let mut again = 0.0;
        assert_eq!(unsafe { gridlet_makespan(etc, ready.as_ptr(), map.as_ptr(), &mut again) }, GridletStatus::Ok);
        assert_eq!(again, span);
    }
    unsafe { gridlet_etc_free(etc) };
}

#[test]
fn errors_set_status_and_message() {
    let mut out = ptr::null_mut();
    let data = [1.0, f64::NAN];
    assert_eq!(unsafe { gridlet_etc_new(1, 2, data.as_ptr(), &mut out) }, GridletStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("invalid ETC entry"));

    assert_eq!(unsafe { gridlet_etc_new(1, 2, ptr::null(), &mut out) }, GridletStatus::NullArgument);
    assert!(last_error().contains("data"));

    let bogus = CString::new("x_y_zz").unwrap();
    assert_eq!(unsafe { gridlet_etc_generate(4, 2, bogus.as_ptr(), 1, &mut out) }, GridletStatus::InvalidArgument);
    assert!(last_error().contains("x_y_zz"));

    let etc = etc_from(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let bad_map = [0usize, 7];
    let mut span = 0.0;
    assert_eq!(
        unsafe { gridlet_makespan(etc, ptr::null(), bad_map.as_ptr(), &mut span) },
        GridletStatus::DimensionMismatch
    );
    let neg_ready = [-1.0, 0.0];
    let mut s = [0.0; 2];
    assert_ne!(unsafe { gridlet_sympathy(etc, neg_ready.as_ptr(), s.as_mut_ptr()) }, GridletStatus::Ok);
    let mut map = [0usize; 2];
    assert_eq!(
        unsafe {
            gridlet_schedule(
                ptr::null(),
                ptr::null(),
                GridletHeuristic::MinMin,
                1,
                0,
                map.as_mut_ptr(),
                ptr::null_mut(),
            )
        },
        GridletStatus::NullArgument
    );
    unsafe { gridlet_etc_free(etc) };
    unsafe { gridlet_etc_free(ptr::null_mut()) };
}

#[test]
fn error_message_truncates_safely() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gridlet_etc_new(0, 0, [0.0].as_ptr(), &mut out) }, GridletStatus::InvalidArgument);
    let mut tiny = [1 as std::ffi::c_char; 4];
    let full = unsafe { gridlet_last_error_message(tiny.as_mut_ptr(), tiny.len()) };
    assert!(full > 3);
    assert_eq!(tiny[3], 0);
    assert_eq!(unsafe { gridlet_last_error_message(ptr::null_mut(), 0) }, full);
}

#[test]
fn errors_are_per_thread() {
    let mut out = ptr::null_mut();
    assert_ne!(unsafe { gridlet_etc_new(1, 1, ptr::null(), &mut out) }, GridletStatus::Ok);
    let other = std::thread::spawn(|| unsafe { gridlet_last_error_message(ptr::null_mut(), 0) }).join().unwrap();
    assert_eq!(other, 0);
}

#[test]
fn problem_handle_exposes_tasks_and_order() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.sh"), "echo a").unwrap();
    std::fs::write(
        dir.path().join("p.xml"),
        r#"<problem name="demo">
  <tasks>
    <task id="late" timeout="5" priority="0"><file>a.sh</file><execute>sh a.sh</execute></task>
    <task id="first" timeout="5" priority="9"><file>a.sh</file><execute>sh a.sh</execute></task>
  </tasks>
  <dependencies><row>0 1</row><row>0 0</row></dependencies>
  <rcp><execute>true</execute></rcp>
</problem>"#,
    )
    .unwrap();
    let path = CString::new(dir.path().join("p.xml").to_str().unwrap()).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { gridlet_problem_load(path.as_ptr(), &mut p) }, GridletStatus::Ok);
    unsafe {
        assert_eq!(CStr::from_ptr(gridlet_problem_name(p)).to_str().unwrap(), "demo");
        assert_eq!(gridlet_problem_task_count(p), 2);
        assert_eq!(CStr::from_ptr(gridlet_problem_task_id(p, 1)).to_str().unwrap(), "first");
        assert!(gridlet_problem_task_id(p, 2).is_null());
        assert_eq!(gridlet_problem_depends(p, 0, 1), 1);
        assert_eq!(gridlet_problem_depends(p, 1, 0), 0);
        assert_eq!(gridlet_problem_depends(p, 5, 0), 0);
        let mut order = [9usize; 2];
        assert_eq!(gridlet_problem_topo_order(p, order.as_mut_ptr()), GridletStatus::Ok);
        assert_eq!(order, [1, 0]);
        gridlet_problem_free(p);
    }
}

#[test]
fn problem_load_reports_io_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = ptr::null_mut();
    let missing = CString::new(dir.path().join("nope.xml").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gridlet_problem_load(missing.as_ptr(), &mut p) }, GridletStatus::IoError);
    std::fs::write(dir.path().join("bad.xml"), "<problem name=\"x\"><tasks>").unwrap();
    let bad = CString::new(dir.path().join("bad.xml").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gridlet_problem_load(bad.as_ptr(), &mut p) }, GridletStatus::ParseError);
    assert!(p.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(gridlet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
