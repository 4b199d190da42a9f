//! C ABI over `sturm-core`.
//!
//! Objects are opaque handles created by `sturm_*_new`/`sturm_find_*`/
//! `sturm_integrate` and released by the matching `*_free`. Every fallible
//! call returns a [`SturmStatus`]; on failure the message is kept per thread
//! and can be copied out with [`sturm_last_error_message`]. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sturm_core::attractor::assemble_attractor;
use sturm_core::coeff::{build_cutoff, CoefficientSpec};
use sturm_core::config::ScenarioConfig;
use sturm_core::equilibria::{find_equilibria, EquilibriumRecord};
use sturm_core::infinity::{growup_direction, infinity_equilibria, GrowupDirection};
use sturm_core::integrator::{integrate, Outcome, StepController, TrajectoryRecord};
use sturm_core::{Error, SpatialGrid, StateField};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SturmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    /// Loss of numerical fidelity: step underflow, Newton or eigen-solver failure.
    NumericalError = 4,
    /// A hypothesis of the theory fails: non-hyperbolic or non-generic data.
    HypothesisViolation = 5,
    DroppingViolation = 6,
    /// Index out of range or caller buffer too small.
    OutOfRange = 7,
    Panic = 8,
}

/// How an integration ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SturmOutcomeKind {
    Converged = 0,
    GrowUp = 1,
    LeftBall = 2,
    TimeLimit = 3,
}

/// Coefficient specification (opaque).
pub struct SturmSpec(CoefficientSpec);
/// Bounded equilibria in ascending `u(0)` order (opaque).
pub struct SturmEquilibria(Vec<EquilibriumRecord>);
/// Recorded trajectory (opaque).
pub struct SturmTrajectory(TrajectoryRecord);

/// Scalar data of one equilibrium.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SturmEquilibriumInfo {
    pub id: usize,
    pub eta: f64,
    pub u_pi: f64,
    pub morse_index: usize,
    pub hyperbolic: bool,
    pub critical_eigenvalue: f64,
    pub residual: f64,
}

/// Integration controls. Obtain defaults from [`sturm_step_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SturmStepOptions {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub growup_threshold: f64,
    pub t_max: f64,
    /// Stop once `max(|u|, |u_x|)` exceeds this; `<= 0` disables.
    pub escape_radius: f64,
    pub track_modes: usize,
}

/// Limit direction of a grow-up trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SturmDirection {
    pub j: usize,
    pub sign: i32,
    pub projection: f64,
    /// The trailing projection passed the 0.999 threshold.
    pub determined: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SturmStatus {
    match e {
        Error::InvalidArgument(_) | Error::GridMismatch { .. } | Error::OutsideChart(_) | Error::AtInfinity => {
            SturmStatus::InvalidArgument
        }
        Error::Config(_) | Error::Expression(_) | Error::CoefficientViolation(_) | Error::Json(_) | Error::Io(_) => {
            SturmStatus::ConfigError
        }
        Error::NonHyperbolic { .. } | Error::NonGeneric(_) => SturmStatus::HypothesisViolation,
        Error::DroppingViolation { .. } => SturmStatus::DroppingViolation,
        Error::StepUnderflow { .. } | Error::EigenFailure(_) | Error::NewtonFailure(_) => SturmStatus::NumericalError,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (SturmStatus, String)>>(f: F) -> SturmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SturmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SturmStatus::Panic
        }
    }
}

fn core(e: Error) -> (SturmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SturmStatus, String) {
    (SturmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SturmStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (SturmStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `src` into a caller buffer of `cap` elements; fails when too small.
unsafe fn copy_out(src: &[f64], dst: *mut f64, cap: usize) -> Result<(), (SturmStatus, String)> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if cap < src.len() {
        return Err((
            SturmStatus::OutOfRange,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

// ---------------------------------------------------------------- errors

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `cap`) and returns its full length without the NUL.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn sturm_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => {
            if !buf.is_null() && cap > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sturm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ----------------------------------------------------------------- specs

/// `a == a_inf`, `f == 0`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_linear(b: f64, a_inf: f64, out: *mut *mut SturmSpec) -> SturmStatus {
    guard(|| put(out, SturmSpec(CoefficientSpec::linear(b, a_inf).map_err(core)?)))
}

/// `a == a_inf`, `f = -c tanh(u)`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_tanh_reaction(b: f64, c: f64, a_inf: f64, out: *mut *mut SturmSpec) -> SturmStatus {
    guard(|| put(out, SturmSpec(CoefficientSpec::tanh_reaction(b, c, a_inf).map_err(core)?)))
}

/// Coefficients from the `coeff` object of a scenario file, given as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_from_json(json: *const c_char, out: *mut *mut SturmSpec) -> SturmStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (SturmStatus::InvalidArgument, format!("json is not UTF-8: {e}")))?;
        let wrapped = format!("{{\"coeff\": {text}}}");
        let cfg = ScenarioConfig::from_json(&wrapped).map_err(core)?;
        put(out, SturmSpec(cfg.coefficients().map_err(core)?))
    })
}

/// Dissipative cut-off of `spec` at radius `r`, as a new handle.
///
/// # Safety
/// `spec` must be a live handle; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_cutoff(spec: *const SturmSpec, r: f64, out: *mut *mut SturmSpec) -> SturmStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        put(out, SturmSpec(build_cutoff(&s.0, r).map_err(core)?))
    })
}

/// `N_inf = floor(sqrt(b / a_inf))` of a spec.
///
/// # Safety
/// `spec` must be a live handle; `out` valid for one value.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_n_infinity(spec: *const SturmSpec, out: *mut usize) -> SturmStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.0.n_infinity();
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sturm_spec_free(spec: *mut SturmSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

// -------------------------------------------------------------- infinity

/// Number of equilibria at infinity, `2 (N_inf + 1)`.
///
/// # Safety
/// `out` must be valid for one value.
#[no_mangle]
pub unsafe extern "C" fn sturm_infinity_count(a_inf: f64, b: f64, out: *mut usize) -> SturmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = infinity_equilibria(a_inf, b).map_err(core)?.len();
        Ok(())
    })
}

// ------------------------------------------------------------ equilibria

/// Bounded equilibria with `u(0)` in `[eta_min, eta_max]`.
///
/// # Safety
/// `spec` must be a live handle; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_find_equilibria(
    spec: *const SturmSpec,
    eta_min: f64,
    eta_max: f64,
    scan_n: usize,
    out: *mut *mut SturmEquilibria,
) -> SturmStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        let eqs = find_equilibria(eta_min, eta_max, scan_n, &s.0).map_err(core)?;
        put(out, SturmEquilibria(eqs))
    })
}

/// # Safety
/// `eqs` must be a live handle or null (then 0).
#[no_mangle]
pub unsafe extern "C" fn sturm_equilibria_len(eqs: *const SturmEquilibria) -> usize {
    eqs.as_ref().map_or(0, |e| e.0.len())
}

/// # Safety
/// `eqs` must be a live handle; `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn sturm_equilibria_get(
    eqs: *const SturmEquilibria,
    index: usize,
    out: *mut SturmEquilibriumInfo,
) -> SturmStatus {
    guard(|| {
        let e = handle(eqs, "equilibria")?;
        let r = e
            .0
            .get(index)
            .ok_or_else(|| (SturmStatus::OutOfRange, format!("index {index} of {}", e.0.len())))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = SturmEquilibriumInfo {
            id: r.id,
            eta: r.eta,
            u_pi: r.right_value,
            morse_index: r.morse_index,
            hyperbolic: r.hyperbolic,
            critical_eigenvalue: r.critical_eigenvalue(),
            residual: r.residual,
        };
        Ok(())
    })
}

/// Copies the profile of equilibrium `index` (grid values) into `buf`.
/// `*len` receives the number of values, also when `buf` is too small.
///
/// # Safety
/// `eqs` live; `buf` valid for `cap` doubles; `len` valid for one value.
#[no_mangle]
pub unsafe extern "C" fn sturm_equilibria_profile(
    eqs: *const SturmEquilibria,
    index: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SturmStatus {
    guard(|| {
        let e = handle(eqs, "equilibria")?;
        let r = e
            .0
            .get(index)
            .ok_or_else(|| (SturmStatus::OutOfRange, format!("index {index} of {}", e.0.len())))?;
        let v = r.profile.values();
        if !len.is_null() {
            *len = v.len();
        }
        copy_out(v, buf, cap)
    })
}

/// # Safety
/// `eqs` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sturm_equilibria_free(eqs: *mut SturmEquilibria) {
    if !eqs.is_null() {
        drop(Box::from_raw(eqs));
    }
}

// ------------------------------------------------------------ trajectories

/// Default integration controls.
#[no_mangle]
pub extern "C" fn sturm_step_options_default() -> SturmStepOptions {
    let c = StepController::default();
    SturmStepOptions {
        dt_init: c.dt_init,
        dt_min: c.dt_min,
        dt_max: c.dt_max,
        rtol: c.rtol,
        atol: c.atol,
        growup_threshold: c.growup_norm_threshold,
        t_max: c.t_max,
        escape_radius: 0.0,
        track_modes: c.track_modes,
    }
}

/// Integrates from `u0` given on the uniform grid of `n` nodes on `[0, pi]`.
/// `opts` may be null for defaults.
///
/// # Safety
/// `spec` live; `u0` valid for `n` doubles; `opts` null or valid; `out`
/// valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_integrate(
    spec: *const SturmSpec,
    u0: *const f64,
    n: usize,
    opts: *const SturmStepOptions,
    out: *mut *mut SturmTrajectory,
) -> SturmStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        if u0.is_null() {
            return Err(null("u0"));
        }
        let grid = SpatialGrid::new(n).map_err(core)?;
        let u = StateField::new(grid, slice::from_raw_parts(u0, n).to_vec()).map_err(core)?;
        let o = opts.as_ref().copied().unwrap_or_else(|| sturm_step_options_default());
        let ctrl = StepController {
            dt_init: o.dt_init,
            dt_min: o.dt_min,
            dt_max: o.dt_max,
            rtol: o.rtol,
            atol: o.atol,
            growup_norm_threshold: o.growup_threshold,
            t_max: o.t_max,
            escape_radius: (o.escape_radius > 0.0).then_some(o.escape_radius),
            track_modes: o.track_modes,
            ..StepController::default()
        };
        put(out, SturmTrajectory(integrate(&u, &ctrl, &s.0, None).map_err(core)?))
    })
}

/// Number of recorded samples.
///
/// # Safety
/// `tr` must be a live handle or null (then 0).
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_len(tr: *const SturmTrajectory) -> usize {
    tr.as_ref().map_or(0, |t| t.0.len())
}

/// Outcome kind and end time.
///
/// # Safety
/// `tr` live; `kind` and `t` valid for one value each.
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_outcome(
    tr: *const SturmTrajectory,
    kind: *mut SturmOutcomeKind,
    t: *mut f64,
) -> SturmStatus {
    guard(|| {
        let r = handle(tr, "trajectory")?;
        if kind.is_null() || t.is_null() {
            return Err(null("out"));
        }
        let o = r.0.outcome;
        *kind = match o {
            Outcome::Converged { .. } => SturmOutcomeKind::Converged,
            Outcome::GrowUp { .. } => SturmOutcomeKind::GrowUp,
            Outcome::LeftBall { .. } => SturmOutcomeKind::LeftBall,
            Outcome::TimeLimit { .. } => SturmOutcomeKind::TimeLimit,
        };
        *t = o.time();
        Ok(())
    })
}

/// Copies sample times and L2 norms (each `sturm_trajectory_len` values).
/// Either buffer may be null to skip it.
///
/// # Safety
/// `tr` live; non-null buffers valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_series(
    tr: *const SturmTrajectory,
    times: *mut f64,
    norms: *mut f64,
    cap: usize,
) -> SturmStatus {
    guard(|| {
        let r = handle(tr, "trajectory")?;
        if !times.is_null() {
            copy_out(&r.0.times, times, cap)?;
        }
        if !norms.is_null() {
            copy_out(&r.0.norms, norms, cap)?;
        }
        Ok(())
    })
}

/// Copies the final state (grid values).
///
/// # Safety
/// `tr` live; `buf` valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_final(tr: *const SturmTrajectory, buf: *mut f64, cap: usize) -> SturmStatus {
    guard(|| {
        let r = handle(tr, "trajectory")?;
        copy_out(r.0.last().values(), buf, cap)
    })
}

/// Grow-up direction; fails with `InvalidArgument` unless the run grew up.
///
/// # Safety
/// `tr` live; `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_growup_direction(
    tr: *const SturmTrajectory,
    out: *mut SturmDirection,
) -> SturmStatus {
    guard(|| {
        let r = handle(tr, "trajectory")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match growup_direction(&r.0).map_err(core)? {
            GrowupDirection::Determined { j, sign, projection } => SturmDirection {
                j,
                sign,
                projection,
                determined: true,
            },
            GrowupDirection::Undetermined { j, sign, projection } => SturmDirection {
                j,
                sign,
                projection,
                determined: false,
            },
        };
        Ok(())
    })
}

/// # Safety
/// `tr` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sturm_trajectory_free(tr: *mut SturmTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

// ------------------------------------------------------------------ graph

/// Assembles the attractor of a full scenario file (JSON text) and returns
/// the report as a newly allocated JSON string, released with
/// [`sturm_string_free`].
///
/// # Safety
/// `config_json` NUL-terminated; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sturm_graph_report_json(config_json: *const c_char, out: *mut *mut c_char) -> SturmStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| (SturmStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let cfg = ScenarioConfig::from_json(text).map_err(core)?;
        let report = assemble_attractor(&cfg.scenario().map_err(core)?).map_err(core)?;
        let json = serde_json_string(&report)?;
        *out = CString::new(json)
            .map_err(|e| (SturmStatus::Panic, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> Result<String, (SturmStatus, String)> {
    serde_json::to_string(v).map_err(|e| core(Error::Json(e)))
}

/// # Safety
/// `s` must be null or a string returned by this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn sturm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
