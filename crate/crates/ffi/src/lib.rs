//! C ABI over the farcast library: opaque handles for trajectories and
//! trained models, integer status codes, and a per-thread error message.
//!
//! Conventions:
//! - Every fallible call returns `FC_OK` (0) or a negative `FC_ERR_*` code
//!   and stores a message retrievable with [`fc_last_error_message`].
//! - Pointers returned through out-parameters are owned by the caller and
//!   must be released with the matching `fc_*_free` function.
//! - Buffers are caller-allocated; lengths are validated before writing.
//! - All functions are panic-safe: a caught panic reports `FC_ERR_PANIC`
//!   instead of unwinding across the boundary.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use libc::{c_char, c_int};
use ndarray::ArrayView2;

use farcast::closedform::{check_random_schedules, ScheduleCheckConfig};
use farcast::dataio::{import_external, load_trajectory, save_trajectory};
use farcast::error::Error;
use farcast::eval::{flops_farcast, flops_iterative};
use farcast::farcaster::{load_model, save_model, FarcastModel};
use farcast::trajgen::Trajectory;

/// Success.
pub const FC_OK: c_int = 0;
/// A required pointer argument was null.
pub const FC_ERR_NULL_ARGUMENT: c_int = -1;
/// A string argument was not valid UTF-8.
pub const FC_ERR_UTF8: c_int = -2;
/// The filesystem failed or a path does not exist.
pub const FC_ERR_IO: c_int = -3;
/// A stored file is malformed, has the wrong size, or an unknown schema.
pub const FC_ERR_FORMAT: c_int = -4;
/// Arguments or configuration are invalid (shapes, ranges, empty inputs).
pub const FC_ERR_INVALID: c_int = -5;
/// A numeric failure: divergence or non-finite values.
pub const FC_ERR_NUMERIC: c_int = -6;
/// An integer count overflowed the requested width.
pub const FC_ERR_OVERFLOW: c_int = -7;
/// A verification ran to completion but exceeded its tolerance.
pub const FC_ERR_TOLERANCE: c_int = -8;
/// An internal panic was caught at the boundary.
pub const FC_ERR_PANIC: c_int = -9;

/// Opaque handle to a stored optimizer trajectory.
pub struct FcTrajectory(Trajectory);

/// Opaque handle to a trained forecaster.
pub struct FcModel(FarcastModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs removed above");
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::default();
    });
}

fn code_of(error: &Error) -> c_int {
    match error {
        Error::Io { .. } | Error::MissingPath { .. } => FC_ERR_IO,
        Error::MalformedDescriptor { .. }
        | Error::UnsupportedSchema { .. }
        | Error::PayloadSizeMismatch { .. }
        | Error::MissingLosses { .. } => FC_ERR_FORMAT,
        Error::Divergence { .. } | Error::Numeric(_) | Error::NonFiniteLoss { .. } => {
            FC_ERR_NUMERIC
        }
        Error::Overflow(_) => FC_ERR_OVERFLOW,
        Error::InvalidConfig(_)
        | Error::ShapeMismatch(_)
        | Error::IndexOutOfRange(_)
        | Error::EmptyInput(_) => FC_ERR_INVALID,
    }
}

fn fail(error: &Error) -> c_int {
    set_error(&error.to_string());
    code_of(error)
}

fn fail_with(code: c_int, message: &str) -> c_int {
    set_error(message);
    code
}

/// Run `body` behind a panic guard; clears the error slot on entry.
fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail_with(FC_ERR_PANIC, "internal panic caught at the C boundary"),
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated C string.
unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, c_int> {
    if ptr.is_null() {
        return Err(fail_with(
            FC_ERR_NULL_ARGUMENT,
            &format!("{what} must not be null"),
        ));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail_with(
            FC_ERR_UTF8,
            &format!("{what} is not valid UTF-8"),
        )),
    }
}

fn require<T>(ptr: *const T, what: &str) -> Result<(), c_int> {
    if ptr.is_null() {
        Err(fail_with(
            FC_ERR_NULL_ARGUMENT,
            &format!("{what} must not be null"),
        ))
    } else {
        Ok(())
    }
}

fn require_mut<T>(ptr: *mut T, what: &str) -> Result<(), c_int> {
    require(ptr as *const T, what)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread (empty if none).
/// The pointer stays valid until the next farcast call on this thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a trajectory directory (manifest.json + payload files) into a new
/// handle written to `out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_load(
    dir: *const c_char,
    out: *mut *mut FcTrajectory,
) -> c_int {
    guarded(|| {
        let (path, ()) = match (path_arg(dir, "dir"), require_mut(out, "out")) {
            (Ok(p), Ok(())) => (p, ()),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match load_trajectory(&path) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(FcTrajectory(t)));
                FC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Import an externally produced trajectory given the path to its manifest
/// file; the handle is written to `out`.
///
/// # Safety
/// `manifest` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_import(
    manifest: *const c_char,
    out: *mut *mut FcTrajectory,
) -> c_int {
    guarded(|| {
        let (path, ()) = match (path_arg(manifest, "manifest"), require_mut(out, "out")) {
            (Ok(p), Ok(())) => (p, ()),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match import_external(&path) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(FcTrajectory(t)));
                FC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Persist a trajectory into `dir` (created if needed).
///
/// # Safety
/// `traj` must be a live handle from this library; `dir` a C string.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_save(
    traj: *const FcTrajectory,
    dir: *const c_char,
) -> c_int {
    guarded(|| {
        if let Err(c) = require(traj, "traj") {
            return c;
        }
        let path = match path_arg(dir, "dir") {
            Ok(p) => p,
            Err(c) => return c,
        };
        match save_trajectory(&(*traj).0, &path) {
            Ok(()) => FC_OK,
            Err(e) => fail(&e),
        }
    })
}

/// Release a trajectory handle. Null is a no-op.
///
/// # Safety
/// `traj` must be null or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_free(traj: *mut FcTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Dimension of the tracked weight vector.
///
/// # Safety
/// `traj` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_dim(traj: *const FcTrajectory, out: *mut usize) -> c_int {
    guarded(|| {
        if let Err(c) = require(traj, "traj").and(require_mut(out, "out")) {
            return c;
        }
        *out = (*traj).0.dim();
        FC_OK
    })
}

/// Number of recorded steps (updates + 1).
///
/// # Safety
/// `traj` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_steps(traj: *const FcTrajectory, out: *mut usize) -> c_int {
    guarded(|| {
        if let Err(c) = require(traj, "traj").and(require_mut(out, "out")) {
            return c;
        }
        *out = (*traj).0.steps();
        FC_OK
    })
}

/// Copy the full weight matrix, row-major (`steps` x `dim`), into `out`.
/// `len` must equal `steps * dim`.
///
/// # Safety
/// `traj` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_trajectory_copy_weights(
    traj: *const FcTrajectory,
    out: *mut f64,
    len: usize,
) -> c_int {
    guarded(|| {
        if let Err(c) = require(traj, "traj").and(require_mut(out, "out")) {
            return c;
        }
        let weights = &(*traj).0.weights;
        let needed = weights.len();
        if len != needed {
            return fail_with(
                FC_ERR_INVALID,
                &format!("buffer holds {len} values, trajectory has {needed}"),
            );
        }
        for (i, v) in weights.iter().enumerate() {
            *out.add(i) = *v;
        }
        FC_OK
    })
}

/// Load a model directory (model.json + params.f64le) into a new handle
/// written to `out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_model_load(dir: *const c_char, out: *mut *mut FcModel) -> c_int {
    guarded(|| {
        let (path, ()) = match (path_arg(dir, "dir"), require_mut(out, "out")) {
            (Ok(p), Ok(())) => (p, ()),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match load_model(&path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(FcModel(m)));
                FC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Persist a model into `dir` (created if needed).
///
/// # Safety
/// `model` must be a live handle; `dir` a C string.
#[no_mangle]
pub unsafe extern "C" fn fc_model_save(model: *const FcModel, dir: *const c_char) -> c_int {
    guarded(|| {
        if let Err(c) = require(model, "model") {
            return c;
        }
        let path = match path_arg(dir, "dir") {
            Ok(p) => p,
            Err(c) => return c,
        };
        match save_model(&(*model).0, &path) {
            Ok(()) => FC_OK,
            Err(e) => fail(&e),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fc_model_free(model: *mut FcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Observed steps the model expects per window.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_n_in(model: *const FcModel, out: *mut usize) -> c_int {
    guarded(|| {
        if let Err(c) = require(model, "model").and(require_mut(out, "out")) {
            return c;
        }
        *out = (*model).0.n_in;
        FC_OK
    })
}

/// Steps the model predicts per window.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_model_m_out(model: *const FcModel, out: *mut usize) -> c_int {
    guarded(|| {
        if let Err(c) = require(model, "model").and(require_mut(out, "out")) {
            return c;
        }
        *out = (*model).0.m_out;
        FC_OK
    })
}

/// Predict the horizon for `dim` independent channels.
///
/// `inputs` is row-major `dim` x `n_in` (the observed block); `out` receives
/// row-major `dim` x `m_out` and `out_len` must equal `dim * m_out`.
///
/// # Safety
/// `model` must be a live handle; `inputs` must hold `dim * n_in` doubles;
/// `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_model_predict(
    model: *const FcModel,
    inputs: *const f64,
    dim: usize,
    n_in: usize,
    out: *mut f64,
    out_len: usize,
) -> c_int {
    guarded(|| {
        if let Err(c) = require(model, "model")
            .and(require(inputs, "inputs"))
            .and(require_mut(out, "out"))
        {
            return c;
        }
        let model = &(*model).0;
        if dim == 0 {
            return fail_with(FC_ERR_INVALID, "dim must be >= 1");
        }
        let Some(in_len) = dim.checked_mul(n_in) else {
            return fail_with(FC_ERR_OVERFLOW, "dim * n_in overflows");
        };
        let expected_out = dim * model.m_out;
        if out_len != expected_out {
            return fail_with(
                FC_ERR_INVALID,
                &format!("out buffer holds {out_len} values, prediction needs {expected_out}"),
            );
        }
        let input_slice = std::slice::from_raw_parts(inputs, in_len);
        let x = match ArrayView2::from_shape((dim, n_in), input_slice) {
            Ok(x) => x,
            Err(e) => return fail_with(FC_ERR_INVALID, &e.to_string()),
        };
        match model.predict(x) {
            Ok(y) => {
                for (i, v) in y.iter().enumerate() {
                    *out.add(i) = *v;
                }
                FC_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// FLOPs for producing `m` optimizer steps of a `d`-dimensional weight
/// vector iteratively; fails with `FC_ERR_OVERFLOW` beyond 64 bits.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_flops_iterative(m: u64, d: u64, out: *mut u64) -> c_int {
    guarded(|| {
        if let Err(c) = require_mut(out, "out") {
            return c;
        }
        match flops_iterative(m, d) {
            Ok(v) if v <= u64::MAX as u128 => {
                *out = v as u64;
                FC_OK
            }
            Ok(_) => fail_with(FC_ERR_OVERFLOW, "flop count exceeds 64 bits"),
            Err(e) => fail(&e),
        }
    })
}

/// FLOPs for forecasting the same steps with a trained last-step model
/// (`4dm`, or `4d` when `last_only`); overflow handling as above.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_flops_farcast(m: u64, d: u64, last_only: bool, out: *mut u64) -> c_int {
    guarded(|| {
        if let Err(c) = require_mut(out, "out") {
            return c;
        }
        match flops_farcast(m, d, last_only) {
            Ok(v) if v <= u64::MAX as u128 => {
                *out = v as u64;
                FC_OK
            }
            Ok(_) => fail_with(FC_ERR_OVERFLOW, "flop count exceeds 64 bits"),
            Err(e) => fail(&e),
        }
    })
}

/// Simulate `trials` random scalar-affine schedules (scales uniform in
/// (-max_scale, max_scale)), build the exact forecaster for each, and write
/// the worst absolute prediction error to `out_max_error`. Returns `FC_OK`
/// when the error is below the library tolerance, `FC_ERR_TOLERANCE` when
/// the check ran but failed it.
///
/// # Safety
/// `out_max_error` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_verify_prop1(
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    max_scale: f64,
    out_max_error: *mut f64,
) -> c_int {
    guarded(|| {
        if let Err(c) = require_mut(out_max_error, "out_max_error") {
            return c;
        }
        let cfg = ScheduleCheckConfig {
            n,
            m,
            trials,
            seed,
            max_scale,
            ..ScheduleCheckConfig::default()
        };
        match check_random_schedules(&cfg) {
            Ok(report) => {
                *out_max_error = report.max_error;
                if report.passed {
                    FC_OK
                } else {
                    fail_with(
                        FC_ERR_TOLERANCE,
                        &format!("max error {} exceeds tolerance", report.max_error),
                    )
                }
            }
            Err(e) => fail(&e),
        }
    })
}
