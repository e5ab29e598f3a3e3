//! C ABI over `avfric`: scenarios, trajectories and value tables behind
//! opaque handles. Every fallible call returns an [`AvfStatus`]; the message
//! of the last failure on the calling thread is available from
//! [`avf_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use avfric::geometry::Point;
use avfric::hjb::{solve_value, GridParams, ValueTable};
use avfric::integrator::{integrate, ControlSignal, Trajectory};
use avfric::{Error, Scenario};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvfStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Parse = 3,
    Validation = 4,
    Numeric = 5,
    OutOfGrid = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// Validated scenario.
pub struct AvfScenario(Scenario);

/// Integrated trajectory.
pub struct AvfTrajectory(Trajectory);

/// Tabulated value function.
pub struct AvfValueTable(ValueTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> AvfStatus {
    match e {
        Error::Io { .. } | Error::Csv(_) => AvfStatus::Io,
        Error::Parse(_) | Error::Expr { .. } => AvfStatus::Parse,
        Error::Validation { .. } | Error::DegenerateBox(_) => AvfStatus::Validation,
        Error::OutOfGrid { .. } => AvfStatus::OutOfGrid,
        Error::InvalidArgument(_) => AvfStatus::InvalidArgument,
        Error::NonFinite { .. }
        | Error::Budget(_)
        | Error::NoDecreasingDirection { .. }
        | Error::OutsideNeighborhood { .. }
        | Error::NoBoundary => AvfStatus::Numeric,
    }
}

enum Fail {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, recording failures and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AvfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AvfStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            AvfStatus::NullPointer
        }
        Ok(Err(Fail::Invalid(msg))) => {
            set_error(format!("invalid argument: {msg}"));
            AvfStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AvfStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail::Invalid(format!("{what} is not valid UTF-8")))
}

fn out_ptr<'a, T>(out: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    unsafe { out.as_mut() }.ok_or(Fail::Null("out"))
}

fn store<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), Fail> {
    if got == want {
        Ok(())
    } else {
        Err(Fail::Invalid(format!("{what} has length {got}, expected {want}")))
    }
}

/// Message of the last failure on this thread, or null after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn avf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn avf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn avf_scenario_load(path: *const c_char, out: *mut *mut AvfScenario) -> AvfStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let path = unsafe { string(path, "path") }?;
        store(out, AvfScenario(Scenario::load(Path::new(path))?));
        Ok(())
    })
}

/// Parses and validates a scenario from its text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn avf_scenario_parse(text: *const c_char, out: *mut *mut AvfScenario) -> AvfStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let text = unsafe { string(text, "text") }?;
        store(out, AvfScenario(Scenario::from_toml_str(text)?));
        Ok(())
    })
}

/// State dimension of a scenario, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn avf_scenario_state_dim(s: *const AvfScenario) -> usize {
    unsafe { s.as_ref() }.map_or(0, |s| s.0.dim)
}

/// Control dimension of a scenario, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn avf_scenario_control_dim(s: *const AvfScenario) -> usize {
    unsafe { s.as_ref() }.map_or(0, |s| s.0.control_dim())
}

/// # Safety
/// `s` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn avf_scenario_free(s: *mut AvfScenario) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Integrates from `(t0, x0)` to `t_end` under a piecewise-constant control.
/// `x0` must lie in the state box. `controls` holds `n_pieces` rows of the
/// control dimension, row `i` applied from `switch_times[i]` on, and
/// `switch_times[0]` must equal `t0`.
///
/// # Safety
/// Array arguments must hold the stated number of elements; `out` must be
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn avf_simulate(
    s: *const AvfScenario,
    t0: f64,
    x0: *const f64,
    x0_len: usize,
    switch_times: *const f64,
    controls: *const f64,
    n_pieces: usize,
    t_end: f64,
    h: f64,
    out: *mut *mut AvfTrajectory,
) -> AvfStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let s = &unsafe { nonnull(s, "scenario") }?.0;
        let x0 = unsafe { slice(x0, x0_len, "x0") }?;
        check_len("x0", x0.len(), s.dim)?;
        if !s.state_box.contains(x0) {
            return Err(Fail::Invalid(format!("initial state {x0:?} lies outside the state box")));
        }
        if n_pieces == 0 {
            return Err(Fail::Invalid("at least one control piece is required".into()));
        }
        let m = s.control_dim();
        let times = unsafe { slice(switch_times, n_pieces, "switch_times") }?.to_vec();
        let flat = unsafe { slice(controls, n_pieces * m, "controls") }?;
        let values: Vec<Point> = flat.chunks(m).map(Point::from).collect();
        let ctrl = if n_pieces == 1 {
            ControlSignal::constant(&values[0])
        } else {
            ControlSignal::piecewise_constant(times, values)?
        };
        store(out, AvfTrajectory(integrate(s, t0, x0, &ctrl, t_end, h)?));
        Ok(())
    })
}

/// Number of nodes in a trajectory, or 0 for a null handle.
///
/// # Safety
/// `tr` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn avf_trajectory_len(tr: *const AvfTrajectory) -> usize {
    unsafe { tr.as_ref() }.map_or(0, |t| t.0.times.len())
}

/// Time and state of node `i`; `x` receives `x_len` entries, which must equal
/// the state dimension.
///
/// # Safety
/// `t` must be writable; `x` must hold `x_len` elements.
#[no_mangle]
pub unsafe extern "C" fn avf_trajectory_node(
    tr: *const AvfTrajectory,
    i: usize,
    t: *mut f64,
    x: *mut f64,
    x_len: usize,
) -> AvfStatus {
    guard(|| {
        let tr = &unsafe { nonnull(tr, "trajectory") }?.0;
        if i >= tr.times.len() {
            return Err(Fail::Invalid(format!("node {i} out of range (len {})", tr.times.len())));
        }
        let state = &tr.states[i];
        check_len("x", x_len, state.len())?;
        if t.is_null() || x.is_null() {
            return Err(Fail::Null("output"));
        }
        unsafe {
            *t = tr.times[i];
            std::slice::from_raw_parts_mut(x, x_len).copy_from_slice(state);
        }
        Ok(())
    })
}

/// # Safety
/// `tr` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn avf_trajectory_free(tr: *mut AvfTrajectory) {
    if !tr.is_null() {
        drop(unsafe { Box::from_raw(tr) });
    }
}

/// Solves the value function on the scenario grid. Nonpositive `h` or
/// `delta` keeps the scenario's own setting.
///
/// # Safety
/// `s` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn avf_value_solve(
    s: *const AvfScenario,
    h: f64,
    delta: f64,
    out: *mut *mut AvfValueTable,
) -> AvfStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let s = &unsafe { nonnull(s, "scenario") }?.0;
        let mut p = GridParams::from_scenario(s);
        if h > 0.0 {
            p.h = h;
        }
        if delta > 0.0 {
            p.delta = delta;
        }
        store(out, AvfValueTable(solve_value(s, &p)?));
        Ok(())
    })
}

/// Interpolated value at `(t, x)`. Unreachable points yield `+inf` with
/// status OK; points off the grid yield `AVF_STATUS_OUT_OF_GRID`.
///
/// # Safety
/// `x` must hold `x_len` elements; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn avf_value_query(
    vt: *const AvfValueTable,
    t: f64,
    x: *const f64,
    x_len: usize,
    value: *mut f64,
) -> AvfStatus {
    guard(|| {
        let vt = &unsafe { nonnull(vt, "value table") }?.0;
        let x = unsafe { slice(x, x_len, "x") }?;
        check_len("x", x.len(), vt.grid.dim())?;
        if value.is_null() {
            return Err(Fail::Null("value"));
        }
        let v = vt.query(t, x)?;
        unsafe { *value = v };
        Ok(())
    })
}

/// # Safety
/// `vt` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn avf_value_table_free(vt: *mut AvfValueTable) {
    if !vt.is_null() {
        drop(unsafe { Box::from_raw(vt) });
    }
}
