//! C interface to the benchmark problems, the invariant-manifold projection
//! and the RK4 integrator.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`CpStatus`]; on failure the message is
//! available from [`cp_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conservative_pinn::problems::{Problem, ProblemError};
use conservative_pinn::projection::{
    project, projection_schedule, soft_weight, InvariantManifold, ProjectionError,
};
use conservative_pinn::reference::{rk4_integrate, ReferenceError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProblem = 3,
    Singular = 4,
    Diverged = 5,
    Numerical = 6,
    Panic = 7,
}

/// A benchmark system.
pub struct CpProblem(Problem);

/// The level set of a problem's first integrals through a fixed state.
pub struct CpManifold(InvariantManifold<Problem>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CpStatus, String);

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        let status = match e {
            ProblemError::UnknownProblem(_) => CpStatus::UnknownProblem,
            ProblemError::Shape { .. } => CpStatus::InvalidArgument,
            _ => CpStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<ProjectionError> for Failure {
    fn from(e: ProjectionError) -> Self {
        let status = match &e {
            ProjectionError::Singular { .. } => CpStatus::Singular,
            ProjectionError::Diverged { .. } => CpStatus::Diverged,
            ProjectionError::Shape { .. } | ProjectionError::TooManyIntegrals { .. } => {
                CpStatus::InvalidArgument
            }
            ProjectionError::Problem(_) => CpStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<ReferenceError> for Failure {
    fn from(e: ReferenceError) -> Self {
        match e {
            ReferenceError::Problem(p) => p.into(),
            ReferenceError::Projection { source, .. } => source.into(),
            other => Failure(CpStatus::InvalidArgument, other.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CpStatus::InvalidArgument, msg.into())
}

/// Runs `body`, recording any error or panic for [`cp_last_error`].
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CpStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure(CpStatus::NullPointer, "null input array".into()));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure(CpStatus::NullPointer, "null output array".into()));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| Failure(CpStatus::NullPointer, "null handle".into()))
}

fn copy_out(out: &mut [f64], values: &[f64]) -> Result<(), Failure> {
    if out.len() != values.len() {
        return Err(invalid(format!(
            "output has length {}, expected {}",
            out.len(),
            values.len()
        )));
    }
    out.copy_from_slice(values);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a problem with default parameters from its registered name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_new(name: *const c_char, out: *mut *mut CpProblem) -> CpStatus {
    guard(|| {
        if name.is_null() || out.is_null() {
            return Err(Failure(CpStatus::NullPointer, "null argument".into()));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| invalid("problem name is not UTF-8"))?;
        let problem = Problem::from_name(name)?;
        *out = Box::into_raw(Box::new(CpProblem(problem)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`cp_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_free(problem: *mut CpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_dim(problem: *const CpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.dim())
}

/// Number of first integrals, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_num_integrals(problem: *const CpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.num_integrals())
}

/// Writes `f(t, u)` into `out`.
///
/// # Safety
/// `u` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_rhs(
    problem: *const CpProblem,
    t: f64,
    u: *const f64,
    out: *mut f64,
    n: usize,
) -> CpStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let f = p.rhs(t, slice(u, n)?)?;
        copy_out(slice_mut(out, n)?, &f)
    })
}

/// Writes the first integrals at `u` into `out`.
///
/// # Safety
/// `u` must point to `n` doubles and `out` to `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_problem_invariants(
    problem: *const CpProblem,
    u: *const f64,
    n: usize,
    out: *mut f64,
    m: usize,
) -> CpStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let values = p.invariants(slice(u, n)?)?;
        copy_out(slice_mut(out, m)?, &values)
    })
}

/// Manifold through `u0` for `problem`. The problem handle may be freed
/// afterwards.
///
/// # Safety
/// `u0` must point to `n` doubles and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_manifold_new(
    problem: *const CpProblem,
    u0: *const f64,
    n: usize,
    out: *mut *mut CpManifold,
) -> CpStatus {
    guard(|| {
        let p = handle(problem)?.0.clone();
        if out.is_null() {
            return Err(Failure(CpStatus::NullPointer, "null output handle".into()));
        }
        let man = InvariantManifold::anchored(p, slice(u0, n)?)?;
        *out = Box::into_raw(Box::new(CpManifold(man)));
        Ok(())
    })
}

/// # Safety
/// `manifold` must come from [`cp_manifold_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_manifold_free(manifold: *mut CpManifold) {
    if !manifold.is_null() {
        drop(Box::from_raw(manifold));
    }
}

/// Applies `iterations` simplified Newton steps to `candidate`, writing the
/// result into `out`. Zero iterations copies the candidate.
///
/// # Safety
/// `candidate` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_project(
    manifold: *const CpManifold,
    candidate: *const f64,
    n: usize,
    iterations: usize,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let man = &handle(manifold)?.0;
        let u = project(man, slice(candidate, n)?, iterations)?;
        copy_out(slice_mut(out, n)?, &u)
    })
}

/// Projection steps used at `epoch` of `total`, capped at `cap`. Writes 0 and
/// fails when `total` is 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_projection_schedule(
    epoch: usize,
    total: usize,
    cap: usize,
    out: *mut usize,
) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(CpStatus::NullPointer, "null output".into()));
        }
        *out = 0;
        if total == 0 {
            return Err(invalid("schedule needs at least one epoch"));
        }
        *out = projection_schedule(epoch, total, cap);
        Ok(())
    })
}

/// Blend weight of the newest projection iterate at `epoch` of `total`, or
/// NaN when `total` is 0.
#[no_mangle]
pub extern "C" fn cp_soft_weight(epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return f64::NAN;
    }
    soft_weight(epoch, total)
}

/// Integrates `steps` uniform RK4 steps from `t0` to `tf`. `out` receives the
/// `(steps + 1) × n` states row by row, starting with `u0`.
///
/// # Safety
/// `u0` must point to `n` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_rk4_integrate(
    problem: *const CpProblem,
    u0: *const f64,
    n: usize,
    t0: f64,
    tf: f64,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> CpStatus {
    guard(|| {
        let p = &handle(problem)?.0;
        let expected = steps
            .checked_add(1)
            .and_then(|s| s.checked_mul(n))
            .ok_or_else(|| invalid("output size overflows"))?;
        if out_len != expected {
            return Err(invalid(format!("output has length {out_len}, expected {expected}")));
        }
        let out = slice_mut(out, out_len)?;
        let traj = rk4_integrate(p, slice(u0, n)?, t0, tf, steps)?;
        for (row, state) in out.chunks_exact_mut(n.max(1)).zip(&traj.states) {
            row.copy_from_slice(state);
        }
        Ok(())
    })
}
