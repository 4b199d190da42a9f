//! Method-of-lines time integration, event detection and zero-number
//! monitoring of differences of solutions.
//!
//! One step freezes `a` at the start of the step and treats `a u_xx + b u`
//! implicitly (one tridiagonal solve) and `f` explicitly. The driver adapts
//! the step by step doubling and records norms, mode projections and, when a
//! reference field is attached, `z(u(t) - reference)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientSpec;
use crate::error::{Error, Result};
use crate::expr::Point;
use crate::field::{self, ModeBasis, SpatialGrid, StateField, ZeroKind};
use crate::linalg::{ls_slope, Tridiagonal};

/// Relative noise floor below which a mode projection is treated as absent.
pub const MODE_NOISE_FLOOR: f64 = 1e-8;
/// Absolute floor, relative to the solution scale, for zero counting of
/// differences.
pub const DIFFERENCE_FLOOR: f64 = 1e-10;

/// Step-size and termination controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepController {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub growup_norm_threshold: f64,
    pub convergence_tol: f64,
    pub t_max: f64,
    /// Consecutive accepted steps with `||du||/dt < convergence_tol`.
    pub convergence_window: usize,
    /// Trailing samples used for the grow-up log-slope.
    pub growup_window: usize,
    /// Record only at multiples of this interval (steps land on them).
    pub record_interval: Option<f64>,
    /// Stop once `max(|u|, |u_x|)` exceeds this radius.
    pub escape_radius: Option<f64>,
    /// Number of tracked modes `phi_0 .. phi_{J}` in the history.
    pub track_modes: usize,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 1e-2,
            rtol: 1e-5,
            atol: 1e-10,
            growup_norm_threshold: 1e6,
            convergence_tol: 1e-9,
            t_max: 100.0,
            convergence_window: 10,
            growup_window: 20,
            record_interval: None,
            escape_radius: None,
            track_modes: 8,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.rtol > 0.0
            && self.atol > 0.0
            && self.convergence_tol > 0.0
            && self.t_max > 0.0
            && self.growup_norm_threshold > 0.0
            && self.convergence_window > 0
            && self.growup_window > 1
            && self.record_interval.map_or(true, |r| r > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid step controller: {self:?}"
            )))
        }
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Converged { t: f64 },
    GrowUp { t: f64 },
    /// Left the ball of [`StepController::escape_radius`].
    LeftBall { t: f64 },
    /// `t_max` reached with neither convergence nor grow-up.
    TimeLimit { t: f64 },
}

impl Outcome {
    pub fn time(&self) -> f64 {
        match *self {
            Outcome::Converged { t }
            | Outcome::GrowUp { t }
            | Outcome::LeftBall { t }
            | Outcome::TimeLimit { t } => t,
        }
    }

    pub fn is_growup(&self) -> bool {
        matches!(self, Outcome::GrowUp { .. })
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Outcome::Converged { .. })
    }
}

/// Recorded history of one integration.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub snapshots: Vec<StateField>,
    pub norms: Vec<f64>,
    /// `<u(t), phi_j>` for `j = 0 .. track_modes`.
    pub mode_history: Vec<Vec<f64>>,
    /// `z(u(t) - reference)` when a reference is attached.
    pub zero_history: Option<Vec<i64>>,
    /// `u(t, 0) - reference(0)` when a reference is attached.
    pub boundary_difference: Option<Vec<f64>>,
    pub outcome: Outcome,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &StateField {
        self.snapshots.last().expect("trajectory records the initial state")
    }

    pub fn tracked_modes(&self) -> usize {
        self.mode_history.first().map_or(0, Vec::len)
    }

    /// Index of the last sample at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Trajectory CSV: `t,norm,z,u_0,...,u_J`; `z` is empty without a reference.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let modes = self.tracked_modes();
        let mut header = String::from("t,norm,z");
        for j in 0..modes {
            header.push_str(&format!(",u_{j}"));
        }
        writeln!(w, "{header}")?;
        for (i, t) in self.times.iter().enumerate() {
            let z = self
                .zero_history
                .as_ref()
                .map(|zh| zh[i].to_string())
                .unwrap_or_default();
            write!(w, "{:.16e},{:.16e},{}", t, self.norms[i], z)?;
            for c in &self.mode_history[i] {
                write!(w, ",{:.16e}", c)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Coefficient samples of `a` and `f` along a field.
pub(crate) fn sample_coefficients(u: &StateField, c: &CoefficientSpec) -> (Vec<f64>, Vec<f64>) {
    let grid = u.grid();
    let ux = u.derivative();
    let norm = if c.uses_norm { u.norm() } else { 0.0 };
    let n = grid.len();
    let mut a = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let pt = Point {
            x: grid.node(i),
            u: u.values()[i],
            p: ux[i],
            norm,
        };
        a.push(c.a(&pt));
        f.push(c.f(&pt));
    }
    (a, f)
}

/// Discrete right-hand side `a u_xx + b u + f`.
pub fn vector_field(u: &StateField, c: &CoefficientSpec) -> StateField {
    let (a, f) = sample_coefficients(u, c);
    let uxx = u.second_derivative();
    let values = (0..u.len())
        .map(|i| a[i] * uxx[i] + c.b * u.values()[i] + f[i])
        .collect();
    StateField::from_raw(u.grid(), values)
}

/// One IMEX step of size `dt`.
pub fn step(u: &StateField, dt: f64, c: &CoefficientSpec) -> Result<StateField> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if dt * c.b >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} too large for the implicit growth term (need dt * b < 1, b = {})",
            c.b
        )));
    }
    let grid = u.grid();
    let n = grid.len();
    let h = grid.spacing();
    let r = dt / (h * h);
    let (a, f) = sample_coefficients(u, c);
    let mut m = Tridiagonal::new(n);
    for i in 0..n {
        if !(a[i] > 0.0) {
            return Err(Error::CoefficientViolation(format!(
                "diffusion a = {} at node {i} is not positive",
                a[i]
            )));
        }
        m.diag[i] = 1.0 - dt * c.b + 2.0 * r * a[i];
    }
    for i in 0..n - 1 {
        m.upper[i] = -r * a[i];
        m.lower[i] = -r * a[i + 1];
    }
    m.upper[0] = -2.0 * r * a[0];
    m.lower[n - 2] = -2.0 * r * a[n - 1];
    let rhs: Vec<f64> = u
        .values()
        .iter()
        .zip(&f)
        .map(|(v, fv)| v + dt * fv)
        .collect();
    let mut next = m.solve(&rhs)?;
    // one refinement sweep keeps rounding from seeding fast-growing modes
    let r: Vec<f64> = rhs.iter().zip(m.mul_vec(&next)).map(|(b, ax)| b - ax).collect();
    let corr = m.solve(&r)?;
    next.iter_mut().zip(corr).for_each(|(x, d)| *x += d);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::CoefficientViolation(
            "non-finite state after implicit solve".into(),
        ));
    }
    Ok(StateField::from_raw(grid, next))
}

/// Band below which entries of `u - reference` are suppressed when counting
/// zeros of a difference of solutions.
pub fn difference_tolerance(u: &StateField, reference: &StateField, diff: &StateField) -> f64 {
    let scale = u.sup_norm().max(reference.sup_norm()).max(1.0);
    (field::DEFAULT_ZERO_REL_TOL * diff.sup_norm()).max(DIFFERENCE_FLOOR * scale)
}

/// `z(u - reference)` with [`difference_tolerance`].
pub fn difference_zeros(u: &StateField, reference: &StateField) -> Result<i64> {
    let diff = u.sub(reference)?;
    let tol = difference_tolerance(u, reference, &diff);
    Ok(field::sign_changes(diff.values(), tol))
}

struct Recorder<'a> {
    basis: ModeBasis,
    reference: Option<&'a StateField>,
    rec: TrajectoryRecord,
}

impl<'a> Recorder<'a> {
    fn new(grid: SpatialGrid, modes: usize, reference: Option<&'a StateField>) -> Self {
        Self {
            basis: ModeBasis::new(grid, modes),
            reference,
            rec: TrajectoryRecord {
                grid,
                times: Vec::new(),
                snapshots: Vec::new(),
                norms: Vec::new(),
                mode_history: Vec::new(),
                zero_history: reference.map(|_| Vec::new()),
                boundary_difference: reference.map(|_| Vec::new()),
                outcome: Outcome::TimeLimit { t: 0.0 },
                accepted_steps: 0,
                rejected_steps: 0,
            },
        }
    }

    fn push(&mut self, t: f64, u: &StateField) {
        if self.rec.times.last() == Some(&t) {
            return;
        }
        self.rec.times.push(t);
        self.rec.norms.push(u.norm());
        self.rec.mode_history.push(self.basis.project(u.values()));
        if let Some(reference) = self.reference {
            let diff = u.sub(reference).expect("grid checked at start");
            let tol = difference_tolerance(u, reference, &diff);
            self.rec
                .zero_history
                .as_mut()
                .unwrap()
                .push(field::sign_changes(diff.values(), tol));
            self.rec
                .boundary_difference
                .as_mut()
                .unwrap()
                .push(diff.values()[0]);
        }
        self.rec.snapshots.push(u.clone().with_time(t));
    }

    fn trailing_log_slope(&self, window: usize) -> Option<f64> {
        let n = self.rec.times.len();
        let start = n.saturating_sub(window);
        let ts = &self.rec.times[start..];
        let ls: Vec<f64> = self.rec.norms[start..].iter().map(|v| v.max(1e-300).ln()).collect();
        ls_slope(ts, &ls)
    }
}

/// Integrates from `u0` until `t_max`, grow-up, convergence, or leaving the
/// escape ball.
pub fn integrate(
    u0: &StateField,
    ctrl: &StepController,
    c: &CoefficientSpec,
    reference: Option<&StateField>,
) -> Result<TrajectoryRecord> {
    ctrl.validate()?;
    if let Some(r) = reference {
        u0.check_same_grid(r)?;
    }
    let grid = u0.grid();
    let mut rec = Recorder::new(grid, ctrl.track_modes, reference);
    let mut u = u0.clone();
    let mut t = 0.0;
    rec.push(t, &u);

    let dt_cap = ctrl.dt_max.min(0.5 / c.b);
    let mut dt = ctrl.dt_init.min(dt_cap);
    let mut still = 0usize;
    let eps_t = 1e-12 * ctrl.t_max.max(1.0);
    let mut next_record = ctrl.record_interval;

    let outcome = loop {
        if t >= ctrl.t_max - eps_t {
            break Outcome::TimeLimit { t };
        }
        let mut dt_try = dt.min(ctrl.t_max - t);
        if let Some(nr) = next_record {
            dt_try = dt_try.min(nr - t);
        }
        let clipped = dt_try < dt;
        let full = step(&u, dt_try, c)?;
        let half = step(&step(&u, 0.5 * dt_try, c)?, 0.5 * dt_try, c)?;
        let scale = ctrl.atol + ctrl.rtol * half.sup_norm();
        let err = full
            .values()
            .iter()
            .zip(half.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;

        if err > 1.0 {
            rec.rec.rejected_steps += 1;
            if dt_try <= ctrl.dt_min * (1.0 + 1e-12) {
                return Err(Error::StepUnderflow { t, dt: dt_try, err });
            }
            dt = (dt_try * (0.9 / err.sqrt()).max(0.2)).max(ctrl.dt_min);
            continue;
        }

        rec.rec.accepted_steps += 1;
        let change = half.sub(&u)?.norm() / dt_try;
        t += dt_try;
        u = half;
        let factor = if err == 0.0 { 2.0 } else { (0.9 / err.sqrt()).clamp(0.2, 2.0) };
        let proposal = (dt_try * factor).clamp(ctrl.dt_min, dt_cap);
        dt = if clipped { dt.max(proposal) } else { proposal };

        let landed = match next_record {
            Some(nr) if (t - nr).abs() <= eps_t => {
                t = nr;
                next_record = Some(nr + ctrl.record_interval.unwrap());
                true
            }
            Some(_) => false,
            None => true,
        };
        if landed {
            rec.push(t, &u);
        }

        still = if change < ctrl.convergence_tol { still + 1 } else { 0 };
        let norm = u.norm();
        if norm >= ctrl.growup_norm_threshold {
            rec.push(t, &u);
            if rec.trailing_log_slope(ctrl.growup_window).is_some_and(|s| s > 0.0) {
                break Outcome::GrowUp { t };
            }
        }
        if let Some(radius) = ctrl.escape_radius {
            let grad = u.derivative().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if u.sup_norm().max(grad) > radius {
                rec.push(t, &u);
                break Outcome::LeftBall { t };
            }
        }
        if still >= ctrl.convergence_window {
            rec.push(t, &u);
            break Outcome::Converged { t };
        }
    };
    rec.push(t, &u);
    rec.rec.outcome = outcome;
    Ok(rec.rec)
}

/// Result of [`detect_growup`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowupStatus {
    GrowUp { t_cross: f64 },
    Bounded,
}

/// First time the recorded norm crosses the threshold with a positive
/// trailing log-slope.
pub fn detect_growup(tr: &TrajectoryRecord, ctrl: &StepController) -> GrowupStatus {
    if !ctrl.growup_norm_threshold.is_finite() {
        return GrowupStatus::Bounded;
    }
    for i in 0..tr.len() {
        if tr.norms[i] < ctrl.growup_norm_threshold {
            continue;
        }
        let start = (i + 1).saturating_sub(ctrl.growup_window);
        let ts = &tr.times[start..=i];
        let ls: Vec<f64> = tr.norms[start..=i].iter().map(|v| v.ln()).collect();
        if ls_slope(ts, &ls).is_some_and(|s| s > 0.0) {
            return GrowupStatus::GrowUp { t_cross: tr.times[i] };
        }
    }
    GrowupStatus::Bounded
}

/// Samples in the trailing half (in time) of the record.
pub fn trailing_window(tr: &TrajectoryRecord) -> std::ops::Range<usize> {
    let t0 = tr.times[0];
    let t1 = *tr.times.last().unwrap();
    let cut = t0 + 0.5 * (t1 - t0);
    let start = tr.times.partition_point(|&t| t < cut);
    start..tr.len()
}

/// Fitted exponential rate of mode `j`, or `None` when the mode stays below
/// the noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRate {
    pub j: usize,
    pub rate: Option<f64>,
}

/// Least-squares slope of `ln |u_j(t)|` over the trailing window.
pub fn mode_growth_rates(tr: &TrajectoryRecord, j_list: &[usize]) -> Vec<ModeRate> {
    mode_growth_rates_in(tr, j_list, trailing_window(tr))
}

/// Least-squares slope of `ln |u_j(t)|` over the samples in `window`, using
/// only samples above the noise floor `MODE_NOISE_FLOOR * max(||u||, 1)`.
pub fn mode_growth_rates_in(
    tr: &TrajectoryRecord,
    j_list: &[usize],
    window: std::ops::Range<usize>,
) -> Vec<ModeRate> {
    j_list
        .iter()
        .map(|&j| {
            if j >= tr.tracked_modes() {
                return ModeRate { j, rate: None };
            }
            let mut ts = Vec::new();
            let mut ls = Vec::new();
            for i in window.clone() {
                let c = tr.mode_history[i][j].abs();
                if c > MODE_NOISE_FLOOR * tr.norms[i].max(1.0) {
                    ts.push(tr.times[i]);
                    ls.push(c.ln());
                }
            }
            let rate = if ts.len() >= 5 { ls_slope(&ts, &ls) } else { None };
            ModeRate { j, rate }
        })
        .collect()
}

/// `sup |a - a_inf|` over nodes and samples in the trailing window.
pub fn measured_delta(tr: &TrajectoryRecord, c: &CoefficientSpec) -> f64 {
    let mut delta = 0.0_f64;
    for i in trailing_window(tr) {
        let (a, _) = sample_coefficients(&tr.snapshots[i], c);
        for v in a {
            delta = delta.max((v - c.a_inf).abs());
        }
    }
    delta
}

/// `[(a_inf + delta) lambda_j + b, (a_inf - delta) lambda_j + b]`.
pub fn rate_band(j: usize, a_inf: f64, b: f64, delta: f64) -> (f64, f64) {
    let lambda = field::eigenvalue(j);
    ((a_inf + delta) * lambda + b, (a_inf - delta) * lambda + b)
}

/// A strict decrease of the difference zero number between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropEvent {
    pub t_before: f64,
    pub t_after: f64,
    pub from: i64,
    pub to: i64,
    /// A near-multiple zero was visible at one of the bracketing samples.
    pub multiple_zero_seen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMonitor {
    pub samples: Vec<(f64, i64)>,
    pub drops: Vec<DropEvent>,
}

fn usable_until(tr: &TrajectoryRecord) -> f64 {
    if tr.outcome.is_converged() {
        f64::INFINITY
    } else {
        *tr.times.last().unwrap()
    }
}

fn near_multiple_zero(v: &StateField) -> bool {
    let sup = v.sup_norm();
    if sup == 0.0 {
        return false;
    }
    let dv = v.derivative();
    let dsup = dv.iter().fold(0.0_f64, |m, d| m.max(d.abs())).max(1e-300);
    (0..v.len()).any(|i| {
        matches!(
            field::classify_zero(v, i, 1e-2 * sup, 1e-2 * dsup),
            Ok(ZeroKind::Multiple)
        )
    })
}

/// Index of the snapshot of `tr` taken at `t`, if any. A converged
/// trajectory is extended by its final state.
fn sample_at(tr: &TrajectoryRecord, t: f64) -> Option<usize> {
    let last = *tr.times.last()?;
    let tol = 1e-9 * t.abs().max(1.0);
    if tr.outcome.is_converged() && t >= last - tol {
        return Some(tr.times.len() - 1);
    }
    let i = tr.times.partition_point(|&s| s < t - tol);
    (i < tr.times.len() && (tr.times[i] - t).abs() <= tol).then_some(i)
}

/// `z(u1(t) - u2(t))` on the sample times shared by both records (record
/// both with the same `record_interval`). A converged trajectory is extended
/// by its final state. Fails on any increase of the zero number.
///
/// Pairing snapshots taken at different times is not an option: early on the
/// mismatch alone creates spurious zeros.
pub fn difference_zero_monitor(
    tr1: &TrajectoryRecord,
    tr2: &TrajectoryRecord,
) -> Result<DifferenceMonitor> {
    if tr1.grid != tr2.grid {
        return Err(Error::GridMismatch {
            left: tr1.grid.len(),
            right: tr2.grid.len(),
        });
    }
    if tr1.is_empty() || tr2.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let end = usable_until(tr1).min(usable_until(tr2));
    let mut times: Vec<f64> = tr1
        .times
        .iter()
        .chain(&tr2.times)
        .copied()
        .filter(|&t| t <= end && sample_at(tr1, t).is_some() && sample_at(tr2, t).is_some())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|b, a| (*b - *a).abs() <= 1e-9 * a.abs().max(1.0));
    if times.len() < 2 {
        return Err(Error::InvalidArgument(
            "trajectories share fewer than two sample times; record both with the same record_interval".into(),
        ));
    }

    let mut samples = Vec::with_capacity(times.len());
    let mut drops = Vec::new();
    let mut prev: Option<(f64, i64, StateField)> = None;
    for t in times {
        let u1 = &tr1.snapshots[sample_at(tr1, t).expect("filtered above")];
        let u2 = &tr2.snapshots[sample_at(tr2, t).expect("filtered above")];
        let diff = u1.sub(u2)?;
        let tol = difference_tolerance(u1, u2, &diff);
        let z = field::sign_changes(diff.values(), tol);
        if let Some((t0, z0, ref d0)) = prev {
            if z > z0 {
                return Err(Error::DroppingViolation {
                    t0,
                    t1: t,
                    before: z0,
                    after: z,
                });
            }
            if z < z0 {
                drops.push(DropEvent {
                    t_before: t0,
                    t_after: t,
                    from: z0,
                    to: z,
                    multiple_zero_seen: near_multiple_zero(d0) || near_multiple_zero(&diff),
                });
            }
        }
        samples.push((t, z));
        prev = Some((t, z, diff));
    }
    Ok(DifferenceMonitor { samples, drops })
}
