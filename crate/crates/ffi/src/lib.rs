//! C ABI for `ercontrol`.
//!
//! Every function returns an [`ErcStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and can be read with
//! [`erc_last_error`]. Models and Riccati solutions are opaque handles that
//! the caller frees with the matching `_free` function. Matrices are dense
//! row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ercontrol::config::parse_config;
use ercontrol::evaluate::{cost_monte_carlo, cost_of_exploration, ControlTerm};
use ercontrol::model::{kl_gaussian, validate_model, LqModel, TimeGrid, ValidatedModel};
use ercontrol::policy::{gibbs_density, lagrange_beta, optimal_policy_rule, ControlGrid};
use ercontrol::riccati::{solve_riccati, RiccatiSolution};
use ercontrol::simulate::simulate_hamiltonian_system;
use ercontrol::{bsde, Error};
use nalgebra::{DMatrix, DVector};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErcStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad shapes, sigma, grids or config text.
    InvalidArgument = 2,
    /// Non-PSD weights, singular resolvent, blow-up and similar.
    Numerical = 3,
    Unsupported = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Opaque validated model.
pub struct ErcModel(ValidatedModel);

/// Opaque Riccati solution.
pub struct ErcRiccati(RiccatiSolution);

/// Monte-Carlo cost of the optimal policy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErcCostReport {
    pub total: f64,
    pub state_cost: f64,
    pub control_cost: f64,
    pub z_cost: f64,
    pub entropy_cost: f64,
    pub endpoint_cost: f64,
    pub std_error: f64,
    pub coe: f64,
    pub n_paths: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(ErcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.is_numerical() {
            ErcStatus::Numerical
        } else if matches!(e, Error::Unsupported(_)) {
            ErcStatus::Unsupported
        } else {
            ErcStatus::InvalidArgument
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ErcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ErcStatus::InvalidArgument, msg.into())
}

/// Run `f`, catching panics and recording the error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ErcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ErcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside ercontrol".into());
            ErcStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` is null or valid for `len` reads.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` is null or valid for `len` writes.
unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and return its full length in bytes,
/// excluding the terminator. `buf` may be null to query the length.
///
/// # Safety
/// `buf` is null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn erc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn erc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a model from a NUL-terminated JSON experiment config (only the
/// `model` and `grid` sections are used).
///
/// # Safety
/// `json` is a valid C string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn erc_model_from_json(json: *const c_char, out: *mut *mut ErcModel) -> ErcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let bytes = CStr::from_ptr(json).to_bytes();
        let cfg = parse_config(bytes).map_err(|e| invalid(e.to_string()))?;
        let model = cfg.validated_model().map_err(|e| match e {
            ercontrol::config::ConfigError::Model(err) => Fail::from(err),
            other => invalid(other.to_string()),
        })?;
        write_out(out, Box::into_raw(Box::new(ErcModel(model))), "out")
    })
}

/// Scalar model with constant coefficients, deterministic terminal value
/// `xi` and a standard Gaussian prior on `[0, t_end]` with `n_steps` steps.
///
/// # Safety
/// `out` is valid for one write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn erc_model_scalar(
    a: f64,
    b: f64,
    c: f64,
    h: f64,
    n: f64,
    r: f64,
    g: f64,
    sigma: f64,
    xi: f64,
    t_end: f64,
    n_steps: usize,
    out: *mut *mut ErcModel,
) -> ErcStatus {
    guard(|| {
        let grid = TimeGrid::new(t_end, n_steps)?;
        let m = validate_model(LqModel::scalar(a, b, c, h, n, r, g, sigma, xi, grid))?;
        write_out(out, Box::into_raw(Box::new(ErcModel(m))), "out")
    })
}

/// # Safety
/// `model` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn erc_model_free(model: *mut ErcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension, control dimension and number of time knots.
///
/// # Safety
/// `model` is a live handle; the out-pointers are valid for one write.
#[no_mangle]
pub unsafe extern "C" fn erc_model_dims(
    model: *const ErcModel,
    state_dim: *mut usize,
    control_dim: *mut usize,
    n_knots: *mut usize,
) -> ErcStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        write_out(state_dim, m.state_dim, "state_dim")?;
        write_out(control_dim, m.control_dim, "control_dim")?;
        write_out(n_knots, m.grid.n_knots(), "n_knots")
    })
}

/// Relative entropy of `N(v, Sigma)` with respect to `N(0, I)`, `v` of
/// length `p`, `Sigma` p x p row-major.
///
/// # Safety
/// `v` has `p` readable values, `sigma` has `p * p`; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn erc_kl_gaussian(p: usize, v: *const f64, sigma: *const f64, out: *mut f64) -> ErcStatus {
    guard(|| {
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let v = DVector::from_column_slice(slice(v, p, "v")?);
        let s = DMatrix::from_row_slice(p, p, slice(sigma, p * p, "sigma")?);
        write_out(out, kl_gaussian(&v, &s)?, "out")
    })
}

/// Solve the Riccati equation of `model`.
///
/// # Safety
/// `model` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn erc_riccati_solve(model: *const ErcModel, out: *mut *mut ErcRiccati) -> ErcStatus {
    guard(|| {
        let sol = solve_riccati(&handle(model, "model")?.0)?;
        write_out(out, Box::into_raw(Box::new(ErcRiccati(sol))), "out")
    })
}

/// # Safety
/// `riccati` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn erc_riccati_free(riccati: *mut ErcRiccati) {
    if !riccati.is_null() {
        drop(Box::from_raw(riccati));
    }
}

/// Copy `Theta` at knot `k` (n x n, row-major) into `buf` of length `len`.
///
/// # Safety
/// `riccati` is a live handle; `buf` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn erc_riccati_theta_at(
    riccati: *const ErcRiccati,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> ErcStatus {
    guard(|| {
        let sol = &handle(riccati, "riccati")?.0;
        let Some(theta) = sol.theta.get(k) else {
            return Err(invalid(format!("knot {k} outside 0..{}", sol.theta.len())));
        };
        let n = theta.nrows();
        if len < n * n {
            return Err(Fail(ErcStatus::BufferTooSmall, format!("need {} values, got {len}", n * n)));
        }
        let out = slice_mut(buf, len, "buf")?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = theta[(i, j)];
            }
        }
        Ok(())
    })
}

/// Cost of exploration of the optimal policy of `model`.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn erc_coe(model: *const ErcModel, out: *mut f64) -> ErcStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let rule = optimal_policy_rule(m)?;
        write_out(out, cost_of_exploration(m, &rule.covariance)?, "out")
    })
}

/// Simulate `n_paths` paths with master seed `seed` and estimate the cost
/// of the optimal policy.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn erc_simulate_and_cost(
    model: *const ErcModel,
    n_paths: usize,
    seed: u64,
    out: *mut ErcCostReport,
) -> ErcStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let th = solve_riccati(m)?;
        let ph = bsde::solve_phi(m, &th)?;
        let ens = simulate_hamiltonian_system(m, &th, &ph, n_paths, seed)?;
        let rule = optimal_policy_rule(m)?;
        let r = cost_monte_carlo(m, &ens, &rule, ControlTerm::Analytic)?;
        let report = ErcCostReport {
            total: r.total,
            state_cost: r.components.state_cost,
            control_cost: r.components.control_cost,
            z_cost: r.components.z_cost,
            entropy_cost: r.components.entropy_cost,
            endpoint_cost: r.components.endpoint_cost,
            std_error: r.std_error,
            coe: r.coe,
            n_paths: r.n_paths as u64,
        };
        write_out(out, report, "out")
    })
}

fn control_grid(a_min: f64, a_max: f64, n_points: usize) -> Result<ControlGrid, Fail> {
    Ok(ControlGrid::new(a_min, a_max, n_points)?)
}

/// Gibbs density `exp(-(2/sigma^2) h - U)`, normalized on the uniform grid
/// of `n_points` points on `[a_min, a_max]`, written to `mu`.
///
/// # Safety
/// `h` and `u` have `n_points` readable values; `mu` has `n_points`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn erc_gibbs_density(
    a_min: f64,
    a_max: f64,
    n_points: usize,
    h: *const f64,
    u: *const f64,
    sigma: f64,
    mu: *mut f64,
) -> ErcStatus {
    guard(|| {
        let grid = control_grid(a_min, a_max, n_points)?;
        let d = gibbs_density(&grid, slice(h, n_points, "h")?, slice(u, n_points, "u")?, sigma)?;
        slice_mut(mu, n_points, "mu")?.copy_from_slice(d.values());
        Ok(())
    })
}

/// Lagrange multiplier `beta` of the Gibbs density and the sup residual of
/// the stationarity identity on the grid.
///
/// # Safety
/// `h` and `u` have `n_points` readable values; `beta` and `residual_sup`
/// are writable.
#[no_mangle]
pub unsafe extern "C" fn erc_lagrange_beta(
    a_min: f64,
    a_max: f64,
    n_points: usize,
    h: *const f64,
    u: *const f64,
    sigma: f64,
    beta: *mut f64,
    residual_sup: *mut f64,
) -> ErcStatus {
    guard(|| {
        let grid = control_grid(a_min, a_max, n_points)?;
        let r = lagrange_beta(&grid, slice(h, n_points, "h")?, slice(u, n_points, "u")?, sigma)?;
        write_out(beta, r.beta, "beta")?;
        write_out(residual_sup, r.residual_sup, "residual_sup")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_values_are_stable() {
        assert_eq!(ErcStatus::Ok as i32, 0);
        assert_eq!(ErcStatus::Numerical as i32, 3);
        assert_eq!(ErcStatus::Panic as i32, 6);
    }

    #[test]
    fn panics_are_caught() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, ErcStatus::Panic);
        let len = unsafe { erc_last_error(std::ptr::null_mut(), 0) };
        assert!(len > 0);
    }

    #[test]
    fn error_classes() {
        assert_eq!(Fail::from(Error::BlowUp { knot: 0, norm: 1e9 }).0, ErcStatus::Numerical);
        assert_eq!(Fail::from(Error::Unsupported("x".into())).0, ErcStatus::Unsupported);
        assert_eq!(Fail::from(Error::NonPositiveSigma(0.0)).0, ErcStatus::InvalidArgument);
    }
}
