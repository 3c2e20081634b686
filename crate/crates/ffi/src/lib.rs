//! C ABI for `cstirap`.
//!
//! Objects cross the boundary as opaque handles created by the `*_from_*`
//! constructors and [`cstirap_simulate`], and released by the matching `*_free`. Every fallible call
//! returns a [`CstirapStatus`]; the message of the most recent failure on the
//! calling thread is available from [`cstirap_last_error`].
//!
//! ```c
//! CstirapScenario *s = NULL;
//! CstirapRun *r = NULL;
//! if (cstirap_scenario_from_preset("rb2-seven", &s) != CSTIRAP_STATUS_OK) {
//!     fprintf(stderr, "%s\n", cstirap_last_error());
//! }
//! cstirap_scenario_set(s, "T=1.5 us");
//! cstirap_simulate(s, &r);
//! double eff;
//! cstirap_run_efficiency(r, &eff);
//! cstirap_run_free(r);
//! cstirap_scenario_free(s);
//! ```

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cstirap::config::{self, Override, RunConfig};
use cstirap::output::json_string;
use cstirap::scenarios::{simulate, Simulation};
use cstirap::Error;
use serde_json::Value;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CstirapStatus {
    Ok = 0,
    /// Invalid configuration, preset, parameter or argument.
    Config = 1,
    /// The integrator or the adiabatic frame failed.
    Integration = 2,
    Io = 3,
    /// A required pointer was null or a string was not UTF-8.
    InvalidPointer = 4,
    /// Level or buffer size out of range.
    OutOfRange = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

/// A resolved scenario: chain, grid and run options.
pub struct CstirapScenario {
    root: Value,
    overrides: Vec<Override>,
    config: RunConfig,
}

/// A finished simulation.
pub struct CstirapRun {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn fail(status: CstirapStatus, msg: &str) -> CstirapStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> CstirapStatus {
    let status = match e.exit_code() {
        2 => CstirapStatus::Integration,
        3 => CstirapStatus::Io,
        _ => CstirapStatus::Config,
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> CstirapStatus) -> CstirapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == CstirapStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(CstirapStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, CstirapStatus> {
    if s.is_null() {
        return Err(fail(
            CstirapStatus::InvalidPointer,
            &format!("{what} is null"),
        ));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        fail(
            CstirapStatus::InvalidPointer,
            &format!("{what} is not UTF-8"),
        )
    })
}

fn build(root: Value, overrides: Vec<Override>) -> Result<CstirapScenario, CstirapStatus> {
    match config::resolve(root.clone(), &overrides) {
        Ok(config) => Ok(CstirapScenario {
            root,
            overrides,
            config,
        }),
        Err(e) => Err(from_error(&e)),
    }
}

fn hand_out<T>(value: T, out: *mut *mut T) -> CstirapStatus {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    CstirapStatus::Ok
}

/// Message of the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn cstirap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cstirap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a scenario from a built-in preset name.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cstirap_scenario_from_preset(
    name: *const c_char,
    out: *mut *mut CstirapScenario,
) -> CstirapStatus {
    guard(|| {
        if out.is_null() {
            return fail(CstirapStatus::InvalidPointer, "out is null");
        }
        let name = match read_str(name, "name") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match build(serde_json::json!({ "preset": name }), Vec::new()) {
            Ok(s) => hand_out(s, out),
            Err(status) => status,
        }
    })
}

/// Create a scenario from config-file JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cstirap_scenario_from_config(
    json: *const c_char,
    out: *mut *mut CstirapScenario,
) -> CstirapStatus {
    guard(|| {
        if out.is_null() {
            return fail(CstirapStatus::InvalidPointer, "out is null");
        }
        let text = match read_str(json, "json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let root: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return fail(CstirapStatus::Config, &format!("invalid JSON: {e}")),
        };
        match build(root, Vec::new()) {
            Ok(s) => hand_out(s, out),
            Err(status) => status,
        }
    })
}

/// Apply a `key=value` override. On failure the scenario is unchanged.
///
/// # Safety
/// `scenario` must come from this library; `key_value` must be a valid string.
#[no_mangle]
pub unsafe extern "C" fn cstirap_scenario_set(
    scenario: *mut CstirapScenario,
    key_value: *const c_char,
) -> CstirapStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(CstirapStatus::InvalidPointer, "scenario is null");
        };
        let kv = match read_str(key_value, "key_value") {
            Ok(kv) => kv,
            Err(status) => return status,
        };
        let o = match Override::parse(kv) {
            Ok(o) => o,
            Err(e) => return from_error(&e),
        };
        let mut overrides = s.overrides.clone();
        overrides.push(o);
        match build(s.root.clone(), overrides) {
            Ok(next) => {
                *s = next;
                CstirapStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Number of levels in the chain, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cstirap_scenario_levels(scenario: *const CstirapScenario) -> usize {
    scenario
        .as_ref()
        .map_or(0, |s| s.config.scenario.system.len())
}

/// # Safety
/// `scenario` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cstirap_scenario_free(scenario: *mut CstirapScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run the density-matrix simulation of a scenario.
///
/// # Safety
/// `scenario` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cstirap_simulate(
    scenario: *const CstirapScenario,
    out: *mut *mut CstirapRun,
) -> CstirapStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(CstirapStatus::InvalidPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(CstirapStatus::InvalidPointer, "out is null");
        }
        let p = &s.config.scenario;
        match simulate(&p.system, &p.grid) {
            Ok(sim) => hand_out(CstirapRun { sim }, out),
            Err(e) => from_error(&e),
        }
    })
}

/// Final population of the target level.
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_efficiency(
    run: *const CstirapRun,
    out: *mut f64,
) -> CstirapStatus {
    guard(|| match (run.as_ref(), out.as_mut()) {
        (Some(r), Some(o)) => {
            *o = r.sim.report.efficiency;
            CstirapStatus::Ok
        }
        _ => fail(CstirapStatus::InvalidPointer, "run or out is null"),
    })
}

/// Number of output time points.
///
/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_time_points(run: *const CstirapRun) -> usize {
    run.as_ref().map_or(0, |r| r.sim.trajectory.len())
}

/// Number of levels.
///
/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_levels(run: *const CstirapRun) -> usize {
    run.as_ref().map_or(0, |r| r.sim.trajectory.levels())
}

/// # Safety
/// `buf` must point to `len` writable doubles.
unsafe fn copy_out(
    values: impl ExactSizeIterator<Item = f64>,
    buf: *mut f64,
    len: usize,
) -> CstirapStatus {
    if buf.is_null() {
        return fail(CstirapStatus::InvalidPointer, "buffer is null");
    }
    if len < values.len() {
        return fail(
            CstirapStatus::OutOfRange,
            &format!("buffer holds {len} values, need {}", values.len()),
        );
    }
    for (k, v) in values.enumerate() {
        *buf.add(k) = v;
    }
    CstirapStatus::Ok
}

/// Copy the output times (s) into `buf`, which holds `len` doubles.
///
/// # Safety
/// `run` must come from this library and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_times(
    run: *const CstirapRun,
    buf: *mut f64,
    len: usize,
) -> CstirapStatus {
    guard(|| match run.as_ref() {
        Some(r) => copy_out(r.sim.trajectory.times.iter().copied(), buf, len),
        None => fail(CstirapStatus::InvalidPointer, "run is null"),
    })
}

/// Copy the population of `level` at every output time into `buf`.
///
/// # Safety
/// `run` must come from this library and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_population(
    run: *const CstirapRun,
    level: usize,
    buf: *mut f64,
    len: usize,
) -> CstirapStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(CstirapStatus::InvalidPointer, "run is null");
        };
        let traj = &r.sim.trajectory;
        if level >= traj.levels() {
            return fail(
                CstirapStatus::OutOfRange,
                &format!("level {level} out of range (chain has {})", traj.levels()),
            );
        }
        copy_out(traj.populations.iter().map(|p| p[level]), buf, len)
    })
}

/// The transfer report as JSON. Release the string with [`cstirap_string_free`].
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_report_json(
    run: *const CstirapRun,
    out: *mut *mut c_char,
) -> CstirapStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(CstirapStatus::InvalidPointer, "run is null");
        };
        if out.is_null() {
            return fail(CstirapStatus::InvalidPointer, "out is null");
        }
        let text = match json_string(&r.sim.report) {
            Ok(t) => t,
            Err(e) => return from_error(&e),
        };
        match CString::new(text) {
            Ok(c) => {
                *out = c.into_raw();
                CstirapStatus::Ok
            }
            Err(_) => fail(CstirapStatus::Panic, "report contains NUL"),
        }
    })
}

/// # Safety
/// `s` must be null or come from [`cstirap_run_report_json`].
#[no_mangle]
pub unsafe extern "C" fn cstirap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `run` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cstirap_run_free(run: *mut CstirapRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
