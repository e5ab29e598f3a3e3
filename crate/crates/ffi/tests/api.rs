//! Round trips through the C ABI.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use avfric_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = avf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut AvfScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { avf_scenario_load(scenario_path(name).as_ptr(), &mut s) }, AvfStatus::Ok);
    assert!(avf_last_error_message().is_null());
    s
}

#[test]
fn load_errors_map_to_codes() {
    let mut s = ptr::null_mut();
    let missing = CString::new("/nonexistent.scn").unwrap();
    assert_eq!(unsafe { avf_scenario_load(missing.as_ptr(), &mut s) }, AvfStatus::Io);
    assert!(s.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { avf_scenario_load(scenario_path("bad_measure.scn").as_ptr(), &mut s) }, AvfStatus::Validation);
    assert!(last_error().contains("weight"));

    let junk = CString::new("not = [valid").unwrap();
    assert_eq!(unsafe { avf_scenario_parse(junk.as_ptr(), &mut s) }, AvfStatus::Parse);

    assert_eq!(unsafe { avf_scenario_load(ptr::null(), &mut s) }, AvfStatus::NullPointer);
    assert_eq!(unsafe { avf_scenario_load(missing.as_ptr(), ptr::null_mut()) }, AvfStatus::NullPointer);
}

#[test]
fn parse_matches_load() {
    let text = std::fs::read_to_string(scenario_path("planar.scn").to_str().unwrap()).unwrap();
    let text = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { avf_scenario_parse(text.as_ptr(), &mut s) }, AvfStatus::Ok);
    let l = load("planar.scn");
    unsafe {
        assert_eq!(avf_scenario_state_dim(s), avf_scenario_state_dim(l));
        assert_eq!(avf_scenario_control_dim(s), avf_scenario_control_dim(l));
        assert_eq!(avf_scenario_state_dim(ptr::null()), 0);
        avf_scenario_free(s);
        avf_scenario_free(l);
        avf_scenario_free(ptr::null_mut());
    }
}

#[test]
fn simulate_matches_the_core_integrator() {
    let s = load("toy.scn");
    let core = avfric::Scenario::load(scenario_path("toy.scn").to_str().unwrap()).unwrap();
    let times = [0.0, 0.3];
    let controls = [1.0, -0.5];
    let x0 = [-0.2];
    let mut tr = ptr::null_mut();
    let st = unsafe { avf_simulate(s, 0.0, x0.as_ptr(), 1, times.as_ptr(), controls.as_ptr(), 2, 0.6, 0.01, &mut tr) };
    assert_eq!(st, AvfStatus::Ok);
    let ctrl = avfric::integrator::ControlSignal::piecewise_constant(
        times.to_vec(),
        controls.iter().map(|u| avfric::geometry::point(&[*u])).collect(),
    )
    .unwrap();
    let want = avfric::integrator::integrate(&core, 0.0, &x0, &ctrl, 0.6, 0.01).unwrap();
    let n = unsafe { avf_trajectory_len(tr) };
    assert_eq!(n, want.times.len());
    for i in 0..n {
        let (mut t, mut x) = (0.0, [0.0]);
        assert_eq!(unsafe { avf_trajectory_node(tr, i, &mut t, x.as_mut_ptr(), 1) }, AvfStatus::Ok);
        assert_eq!(t, want.times[i]);
        assert_eq!(x[0], want.states[i][0]);
    }
    let (mut t, mut x) = (0.0, [0.0; 2]);
    assert_eq!(unsafe { avf_trajectory_node(tr, n, &mut t, x.as_mut_ptr(), 1) }, AvfStatus::InvalidArgument);
    assert_eq!(unsafe { avf_trajectory_node(tr, 0, &mut t, x.as_mut_ptr(), 2) }, AvfStatus::InvalidArgument);
    assert_eq!(
        unsafe { avf_simulate(s, 0.0, x0.as_ptr(), 1, times.as_ptr(), controls.as_ptr(), 0, 0.6, 0.01, &mut tr) },
        AvfStatus::InvalidArgument
    );
    let far = [100.0];
    let mut tr2 = ptr::null_mut();
    let st =
        unsafe { avf_simulate(s, 0.0, far.as_ptr(), 1, times.as_ptr(), controls.as_ptr(), 1, 0.6, 0.01, &mut tr2) };
    assert_eq!(st, AvfStatus::InvalidArgument);
    assert!(tr2.is_null());
    unsafe {
        avf_trajectory_free(tr);
        avf_scenario_free(s);
    }
}

#[test]
fn value_table_queries() {
    let s = load("toy.scn");
    let mut vt = ptr::null_mut();
    assert_eq!(unsafe { avf_value_solve(s, 0.01, 0.01, &mut vt) }, AvfStatus::Ok);
    let mut v = 0.0;
    let x = [2.0];
    assert_eq!(unsafe { avf_value_query(vt, 0.0, x.as_ptr(), 1, &mut v) }, AvfStatus::Ok);
    assert!((v - 0.25).abs() <= 1e-3, "{v}");
    let off = [50.0];
    assert_eq!(unsafe { avf_value_query(vt, 0.0, off.as_ptr(), 1, &mut v) }, AvfStatus::OutOfGrid);
    assert!(last_error().contains("outside the grid"));
    assert_eq!(unsafe { avf_value_query(vt, 0.0, x.as_ptr(), 2, &mut v) }, AvfStatus::InvalidArgument);
    assert_eq!(unsafe { avf_value_query(ptr::null(), 0.0, x.as_ptr(), 1, &mut v) }, AvfStatus::NullPointer);
    unsafe {
        avf_value_table_free(vt);
        avf_scenario_free(s);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(avf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Directory holding the library artifacts of the current profile.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libavfric_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = Path::new(env!("CARGO_TARGET_TMPDIR")).join("avfric_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).arg(scenario_path("toy.scn").to_str().unwrap()).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0], "51");
    assert!((fields[1].parse::<f64>().unwrap() - 0.25).abs() < 1e-9, "{text}");
}
