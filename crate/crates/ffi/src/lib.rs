//! C interface to the particle and PDE solvers.
//!
//! Every fallible function returns an [`ScStatus`]; on failure the message is
//! kept per thread and can be copied out with [`sc_last_error_message`].
//! Handles are opaque and must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use supercool::frontier::cascade_scan;
use supercool::oracles::reflection_density;
use supercool::particle::run_particle;
use supercool::pde::run_pde;
use supercool::types::FrontierPath;
use supercool::{Config, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidInput = 4,
    Io = 5,
    BufferTooSmall = 6,
    Inconclusive = 7,
    Panic = 8,
}

/// Opaque solver configuration.
pub struct ScConfig {
    inner: Config,
}

/// Opaque result of a solver run.
pub struct ScRun {
    frontier: FrontierPath,
    residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ScStatus, msg: impl Into<String>) -> ScStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> ScStatus {
    let status = match &e {
        Error::Config(_) | Error::Density(_) => ScStatus::InvalidConfig,
        Error::Input(_) => ScStatus::InvalidInput,
        Error::Inconclusive(_) => ScStatus::Inconclusive,
        Error::Io { .. } | Error::Parse { .. } => ScStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> ScStatus) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ScStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ScStatus> {
    if s.is_null() {
        return Err(fail(ScStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(ScStatus::InvalidUtf8, e.to_string()))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length including the NUL,
/// or 0 if there is no error.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sc_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_config_from_toml(toml: *const c_char, out: *mut *mut ScConfig) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return fail(ScStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Config::from_toml_str(text).and_then(Config::validate) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(ScConfig { inner: c }));
                ScStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Applies a `key=value` override (dotted keys, TOML values) and revalidates.
/// The handle is unchanged on failure.
///
/// # Safety
/// `config` must come from `sc_config_from_toml`; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sc_config_set(config: *mut ScConfig, assignment: *const c_char) -> ScStatus {
    guard(|| {
        let Some(cfg) = config.as_mut() else {
            return fail(ScStatus::NullPointer, "null config");
        };
        let a = match read_str(assignment) {
            Ok(a) => a,
            Err(s) => return s,
        };
        match cfg.inner.with_override(a).and_then(Config::validate) {
            Ok(c) => {
                cfg.inner = c;
                ScStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `config` must be null or come from `sc_config_from_toml`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_config_free(config: *mut ScConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn start_run(
    config: *const ScConfig,
    out: *mut *mut ScRun,
    run: impl FnOnce(&Config) -> supercool::Result<ScRun>,
) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return fail(ScStatus::NullPointer, "null output pointer");
        }
        let Some(cfg) = config.as_ref() else {
            return fail(ScStatus::NullPointer, "null config");
        };
        match run(&cfg.inner) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(r));
                ScStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Runs the particle system.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_particle_run(config: *const ScConfig, out: *mut *mut ScRun) -> ScStatus {
    start_run(config, out, |c| {
        run_particle(c).map(|r| ScRun { frontier: r.frontier, residual: r.summary.max_conservation_residual })
    })
}

/// Runs the finite-difference solver.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_pde_run(config: *const ScConfig, out: *mut *mut ScRun) -> ScStatus {
    start_run(config, out, |c| {
        run_pde(c).map(|r| ScRun { frontier: r.frontier, residual: r.summary.max_conservation_residual })
    })
}

/// Number of recorded frontier points.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_run_len(run: *const ScRun, out: *mut usize) -> ScStatus {
    let (Some(r), false) = (run.as_ref(), out.is_null()) else {
        return fail(ScStatus::NullPointer, "null argument");
    };
    *out = r.frontier.len();
    ScStatus::Ok
}

/// Copies times and frontier values into caller buffers of length `cap`.
/// Returns `BufferTooSmall` (and copies nothing) if `cap < sc_run_len`.
///
/// # Safety
/// `times` and `values` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_run_frontier(run: *const ScRun, times: *mut f64, values: *mut f64, cap: usize) -> ScStatus {
    let Some(r) = run.as_ref() else {
        return fail(ScStatus::NullPointer, "null run");
    };
    if times.is_null() || values.is_null() {
        return fail(ScStatus::NullPointer, "null buffer");
    }
    let n = r.frontier.len();
    if cap < n {
        return fail(ScStatus::BufferTooSmall, format!("need {n} entries, got {cap}"));
    }
    ptr::copy_nonoverlapping(r.frontier.times.as_ptr(), times, n);
    ptr::copy_nonoverlapping(r.frontier.values.as_ptr(), values, n);
    ScStatus::Ok
}

/// Number of detected jumps.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_run_jump_count(run: *const ScRun, out: *mut usize) -> ScStatus {
    let (Some(r), false) = (run.as_ref(), out.is_null()) else {
        return fail(ScStatus::NullPointer, "null argument");
    };
    *out = r.frontier.jumps.len();
    ScStatus::Ok
}

/// Time and size of jump `index`.
///
/// # Safety
/// `run` must be a live handle; `time` and `size` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_run_jump(run: *const ScRun, index: usize, time: *mut f64, size: *mut f64) -> ScStatus {
    let Some(r) = run.as_ref() else {
        return fail(ScStatus::NullPointer, "null run");
    };
    if time.is_null() || size.is_null() {
        return fail(ScStatus::NullPointer, "null output pointer");
    }
    match r.frontier.jumps.get(index) {
        Some(j) => {
            *time = j.time;
            *size = j.size;
            ScStatus::Ok
        }
        None => fail(ScStatus::InvalidInput, format!("jump index {index} out of range")),
    }
}

/// Largest conservation residual seen during the run.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_run_residual(run: *const ScRun, out: *mut f64) -> ScStatus {
    let (Some(r), false) = (run.as_ref(), out.is_null()) else {
        return fail(ScStatus::NullPointer, "null argument");
    };
    *out = r.residual;
    ScStatus::Ok
}

/// # Safety
/// `run` must be null or a live handle, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_run_free(run: *mut ScRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Cascade on `m` sorted positions: frontier increment and absorbed count.
///
/// # Safety
/// `positions` must point to `m` doubles (may be null when `m == 0`);
/// `increment` and `absorbed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_cascade_scan(
    positions: *const f64,
    m: usize,
    alpha: f64,
    particle_mass: f64,
    increment: *mut f64,
    absorbed: *mut usize,
) -> ScStatus {
    guard(|| {
        if increment.is_null() || absorbed.is_null() || (positions.is_null() && m > 0) {
            return fail(ScStatus::NullPointer, "null argument");
        }
        let xs: &[f64] = if m == 0 { &[] } else { std::slice::from_raw_parts(positions, m) };
        match cascade_scan(xs, alpha, particle_mass) {
            Ok(r) => {
                *increment = r.increment;
                *absorbed = r.absorbed;
                ScStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Density at `y` of Brownian motion from `x0` killed at zero, at time `t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_reflection_density(t: f64, x0: f64, y: f64, out: *mut f64) -> ScStatus {
    if out.is_null() {
        return fail(ScStatus::NullPointer, "null output pointer");
    }
    match reflection_density(t, x0, y) {
        Ok(v) => {
            *out = v;
            ScStatus::Ok
        }
        Err(e) => from_error(e),
    }
}
