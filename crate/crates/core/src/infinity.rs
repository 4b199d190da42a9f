//! Poincare compactification, the flow on the sphere at infinity, the
//! equilibria `+-Phi_j`, hyperplane charts and grow-up directions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeff::{self, CoeffFn};
use crate::error::{Error, Result};
use crate::expr::Point;
use crate::field::{self, EigenMode, ModeBasis, SpatialGrid, StateField};
use crate::integrator::TrajectoryRecord;

/// Galerkin truncation of the sphere flow.
pub const SPHERE_MODES: usize = 32;
/// Largest tolerated norm drift of one explicit sphere step.
pub const MAX_NORM_DRIFT: f64 = 1e-3;
/// A grow-up direction is accepted once the normalized projection exceeds this.
pub const DIRECTION_THRESHOLD: f64 = 1.0 - 1e-3;
/// Samples at the end of a record over which a direction must persist.
pub const DIRECTION_WINDOW: usize = 10;

/// `(chi, z) = (u, 1) / sqrt(1 + ||u||^2)`.
#[derive(Debug, Clone)]
pub struct ProjectedState {
    pub chi: StateField,
    pub z: f64,
}

pub fn project(u: &StateField) -> ProjectedState {
    let s = 1.0 / (1.0 + u.norm_sq()).sqrt();
    ProjectedState {
        chi: u.scaled(s),
        z: s,
    }
}

/// Inverse of [`project`]; fails on the equator `z = 0`.
pub fn unproject(p: &ProjectedState) -> Result<StateField> {
    if !(p.z > 0.0) {
        return Err(Error::AtInfinity);
    }
    Ok(p.chi.scaled(1.0 / p.z))
}

/// Hyperplane chart `(xi, zeta) = (u, 1) / <u, phi_{j*}>`.
#[derive(Debug, Clone)]
pub struct PlaneState {
    pub xi: StateField,
    pub zeta: f64,
    pub j_star: usize,
}

fn chart_tol(u: &StateField) -> f64 {
    1e-12 * u.norm().max(1e-300)
}

pub fn plane_project(u: &StateField, j_star: usize) -> Result<PlaneState> {
    let anchor = field::project_mode(u, j_star);
    if anchor <= chart_tol(u) {
        return Err(Error::OutsideChart(anchor));
    }
    Ok(PlaneState {
        xi: u.scaled(1.0 / anchor),
        zeta: 1.0 / anchor,
        j_star,
    })
}

/// Change of coordinates `(xi, zeta) = (chi, z) / <chi, phi_{j*}>`; valid on
/// the equator as well.
pub fn sphere_to_plane(p: &ProjectedState, j_star: usize) -> Result<PlaneState> {
    let anchor = field::project_mode(&p.chi, j_star);
    if anchor <= chart_tol(&p.chi) {
        return Err(Error::OutsideChart(anchor));
    }
    Ok(PlaneState {
        xi: p.chi.scaled(1.0 / anchor),
        zeta: p.z / anchor,
        j_star,
    })
}

/// Inverse change of coordinates.
pub fn plane_to_sphere(ps: &PlaneState) -> ProjectedState {
    let s = 1.0 / (ps.xi.norm_sq() + ps.zeta * ps.zeta).sqrt();
    ProjectedState {
        chi: ps.xi.scaled(s),
        z: ps.zeta * s,
    }
}

/// Equilibrium at infinity `sign * Phi_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InfinityEquilibrium {
    pub j: usize,
    pub sign: i32,
}

impl InfinityEquilibrium {
    pub fn direction(&self, grid: SpatialGrid) -> EigenMode {
        EigenMode::new(grid, self.j)
    }

    /// `sign * phi_j` as a field.
    pub fn signed_direction(&self, grid: SpatialGrid) -> StateField {
        EigenMode::new(grid, self.j).field().scaled(f64::from(self.sign))
    }

    pub fn label(&self) -> String {
        format!("{}Phi{}", if self.sign > 0 { '+' } else { '-' }, self.j)
    }
}

/// `+-Phi_j` for `j = 0 ..= floor(sqrt(b / a_inf))`.
pub fn infinity_equilibria(a_inf: f64, b: f64) -> Result<Vec<InfinityEquilibrium>> {
    if !(a_inf > 0.0) || !(b > 0.0) || !a_inf.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need a_inf > 0 and b > 0, got a_inf = {a_inf}, b = {b}"
        )));
    }
    let n = coeff::n_infinity(a_inf, b);
    Ok((0..=n)
        .flat_map(|j| [InfinityEquilibrium { j, sign: 1 }, InfinityEquilibrium { j, sign: -1 }])
        .collect())
}

// ------------------------------------------------------------ sphere flow

/// Limiting diffusion `a_inf` on the sphere at infinity.
#[derive(Clone)]
pub enum LimitingDiffusion {
    Constant(f64),
    /// `a_inf(x, chi, chi_x)` evaluated pointwise.
    Field(CoeffFn),
}

impl std::fmt::Debug for LimitingDiffusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitingDiffusion::Constant(a) => write!(f, "Constant({a})"),
            LimitingDiffusion::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Result of [`sphere_flow_step`].
#[derive(Debug, Clone)]
pub struct SphereStep {
    pub chi: StateField,
    /// Step actually taken after halvings.
    pub dt: f64,
}

fn check_unit(chi: &StateField) -> Result<()> {
    let n = chi.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "sphere state must have unit norm, got {n}"
        )));
    }
    Ok(())
}

fn normalize(c: &mut [f64]) {
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= n);
}

/// Galerkin form of `a chi_xx - chi <a chi_xx, chi>` in `M` modes.
fn sphere_vector_field(c: &[f64], basis: &ModeBasis, a: &LimitingDiffusion) -> Vec<f64> {
    match a {
        LimitingDiffusion::Constant(a) => {
            let mean: f64 = c
                .iter()
                .enumerate()
                .map(|(j, v)| field::eigenvalue(j) * v * v)
                .sum();
            c.iter()
                .enumerate()
                .map(|(j, v)| a * (field::eigenvalue(j) - mean) * v)
                .collect()
        }
        LimitingDiffusion::Field(af) => {
            let grid = basis.grid();
            let chi = basis.synthesize(c);
            // chi_xx from the modes, chi_x pointwise
            let lap: Vec<f64> = c.iter().enumerate().map(|(j, v)| field::eigenvalue(j) * v).collect();
            let chi_xx = basis.synthesize(&lap);
            let chi_x = field::gradient(grid, &chi);
            let norm = field::weighted_dot(grid, &chi, &chi).sqrt();
            let term: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let pt = Point {
                        x: grid.node(i),
                        u: chi[i],
                        p: chi_x[i],
                        norm,
                    };
                    af(&pt) * chi_xx[i]
                })
                .collect();
            let proj = basis.project(&term);
            let bracket: f64 = proj.iter().zip(c).map(|(p, v)| p * v).sum();
            proj.iter().zip(c).map(|(p, v)| p - bracket * v).collect()
        }
    }
}

/// Coefficient step in `M` modes. Constant `a_inf` uses the exact flow
/// `chi_j <- exp(a lambda_j dt) chi_j` followed by renormalization; a
/// pointwise `a_inf` takes an explicit Euler step and halves `dt` while the
/// norm drifts by more than [`MAX_NORM_DRIFT`].
pub fn sphere_coefficient_step(c: &[f64], dt: f64, basis: &ModeBasis, a: &LimitingDiffusion) -> Result<(Vec<f64>, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    match a {
        LimitingDiffusion::Constant(av) => {
            let mut out: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(j, v)| (av * field::eigenvalue(j) * dt).exp() * v)
                .collect();
            normalize(&mut out);
            Ok((out, dt))
        }
        LimitingDiffusion::Field(_) => {
            let rhs = sphere_vector_field(c, basis, a);
            let mut h = dt;
            for _ in 0..40 {
                let mut out: Vec<f64> = c.iter().zip(&rhs).map(|(v, r)| v + h * r).collect();
                let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() <= MAX_NORM_DRIFT {
                    normalize(&mut out);
                    return Ok((out, h));
                }
                h *= 0.5;
            }
            Err(Error::StepUnderflow {
                t: f64::NAN,
                dt: h,
                err: f64::INFINITY,
            })
        }
    }
}

/// One step of the flow on the sphere at infinity.
pub fn sphere_flow_step(chi: &StateField, dt: f64, a: &LimitingDiffusion) -> Result<SphereStep> {
    check_unit(chi)?;
    let basis = ModeBasis::new(chi.grid(), SPHERE_MODES.min(chi.len()));
    let c = basis.project(chi.values());
    let (next, dt) = sphere_coefficient_step(&c, dt, &basis, a)?;
    Ok(SphereStep {
        chi: StateField::from_raw(chi.grid(), basis.synthesize(&next)),
        dt,
    })
}

/// `||chi_t||` of the truncated sphere flow.
pub fn sphere_residual(chi: &StateField, a: &LimitingDiffusion) -> f64 {
    let basis = ModeBasis::new(chi.grid(), SPHERE_MODES.min(chi.len()));
    let c = basis.project(chi.values());
    sphere_vector_field(&c, &basis, a)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Dirichlet energy `E_inf = int |chi_x|^2 / 2`, with cell differences
/// (equal to `-<chi, Lap_h chi> / 2` by summation by parts).
pub fn energy_infinity(chi: &StateField) -> f64 {
    let h = chi.grid().spacing();
    let v = chi.values();
    0.5 * v.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / h
}

/// Record of a sphere-flow run in `M` modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereRun {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// Largest single-step increase of `E_inf` (negative when strictly decreasing).
    pub max_energy_increase: f64,
    pub coefficients: Vec<Vec<f64>>,
    /// Limit `sign * phi_j` when the run converged.
    pub limit: Option<InfinityEquilibrium>,
    /// `||chi - sign phi_j||` at the end.
    pub limit_distance: f64,
    pub converged: bool,
}

impl SphereRun {
    /// `t,z,chi_0..chi_{M-1}`, with `z = 0` on the equator.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.coefficients.first().map_or(0, Vec::len);
        let mut header = String::from("t,z");
        for j in 0..m {
            header.push_str(&format!(",chi_{j}"));
        }
        writeln!(w, "{header}")?;
        for (t, c) in self.times.iter().zip(&self.coefficients) {
            write!(w, "{t:.16e},0")?;
            for v in c {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Settings of [`run_sphere_flow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSettings {
    pub dt: f64,
    pub t_max: f64,
    /// Converged once `||chi - sign phi_j|| <= limit_tol`.
    pub limit_tol: f64,
    /// Record every `record_every` accepted steps.
    pub record_every: usize,
}

impl Default for SphereSettings {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_max: 200.0,
            limit_tol: 1e-7,
            record_every: 1,
        }
    }
}

fn nearest_mode(c: &[f64]) -> (usize, f64, f64) {
    let (j, v) = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, v)| (j, *v))
        .unwrap_or((0, 0.0));
    let s = v.signum();
    let dist = c
        .iter()
        .enumerate()
        .map(|(k, w)| if k == j { (w - s) * (w - s) } else { w * w })
        .sum::<f64>()
        .sqrt();
    (j, s, dist)
}

/// Integrates the sphere flow from unit-norm mode coefficients `c0`.
pub fn run_sphere_flow(
    c0: &[f64],
    grid: SpatialGrid,
    a: &LimitingDiffusion,
    settings: &SphereSettings,
) -> Result<SphereRun> {
    let m = c0.len();
    if m == 0 || m > grid.len() {
        return Err(Error::InvalidArgument(format!("invalid mode count {m}")));
    }
    let basis = ModeBasis::new(grid, m);
    let mut c = c0.to_vec();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "sphere state must have unit norm, got {norm}"
        )));
    }
    let energy = |c: &[f64]| energy_infinity(&StateField::from_raw(grid, basis.synthesize(c)));
    let mut t = 0.0;
    let mut e = energy(&c);
    let mut run = SphereRun {
        times: vec![0.0],
        energies: vec![e],
        max_energy_increase: f64::NEG_INFINITY,
        coefficients: vec![c.clone()],
        limit: None,
        limit_distance: f64::INFINITY,
        converged: false,
    };
    let mut steps = 0usize;
    while t < settings.t_max {
        let (next, used) = sphere_coefficient_step(&c, settings.dt.min(settings.t_max - t), &basis, a)?;
        t += used;
        c = next;
        let e_next = energy(&c);
        run.max_energy_increase = run.max_energy_increase.max(e_next - e);
        e = e_next;
        steps += 1;
        let (_, _, dist) = nearest_mode(&c);
        let done = dist <= settings.limit_tol;
        if done || steps % settings.record_every.max(1) == 0 || t >= settings.t_max {
            run.times.push(t);
            run.energies.push(e);
            run.coefficients.push(c.clone());
        }
        if done {
            break;
        }
    }
    let (j, s, dist) = nearest_mode(&c);
    run.limit_distance = dist;
    run.converged = dist <= settings.limit_tol;
    if run.converged {
        run.limit = Some(InfinityEquilibrium { j, sign: s as i32 });
    }
    Ok(run)
}

// ------------------------------------------------------------ plane flows

/// `a_inf (lambda_j - lambda_{j*}) = a_inf (j*^2 - j^2)`: rate of `xi_j` at
/// `Phi_{j*}` in the hyperplane chart.
pub fn plane_flow_rates(j_star: usize, a_inf: f64, j_list: &[usize]) -> Vec<(usize, f64)> {
    j_list
        .iter()
        .map(|&j| (j, a_inf * (field::eigenvalue(j) - field::eigenvalue(j_star))))
        .collect()
}

/// Exact step of the hyperplane chart for `a == a_inf`, `f == 0` in `M`
/// modes: `xi_j' = a_inf (lambda_j - lambda_{j*}) xi_j`,
/// `zeta' = -(a_inf lambda_{j*} + b) zeta`.
pub fn plane_flow_step(ps: &PlaneState, dt: f64, a_inf: f64, b: f64, modes: usize) -> PlaneState {
    let grid = ps.xi.grid();
    let basis = ModeBasis::new(grid, modes);
    let lj = field::eigenvalue(ps.j_star);
    let c: Vec<f64> = basis
        .project(ps.xi.values())
        .into_iter()
        .enumerate()
        .map(|(j, v)| (a_inf * (field::eigenvalue(j) - lj) * dt).exp() * v)
        .collect();
    PlaneState {
        xi: StateField::from_raw(grid, basis.synthesize(&c)),
        zeta: (-(a_inf * lj + b) * dt).exp() * ps.zeta,
        j_star: ps.j_star,
    }
}

// ---------------------------------------------------- grow-up diagnostics

/// Mode `j` maximizing `|<u, phi_j>| / ||u||` among the first `modes`, with
/// its sign and normalized projection.
pub fn dominant_mode(u: &StateField, modes: usize) -> (usize, i32, f64) {
    let norm = u.norm();
    if norm == 0.0 {
        return (0, 0, 0.0);
    }
    let basis = ModeBasis::new(u.grid(), modes.min(u.len()));
    let c = basis.project(u.values());
    let (j, v) = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, v)| (j, *v))
        .unwrap();
    (j, if v >= 0.0 { 1 } else { -1 }, v.abs() / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GrowupDirection {
    /// `|<u/||u||, phi_j>| >= 1 - 1e-3` over the trailing samples.
    Determined { j: usize, sign: i32, projection: f64 },
    /// No mode dominates yet; the best candidate is reported.
    Undetermined { j: usize, sign: i32, projection: f64 },
}

impl GrowupDirection {
    pub fn target(&self) -> Option<InfinityEquilibrium> {
        match *self {
            GrowupDirection::Determined { j, sign, .. } => Some(InfinityEquilibrium { j, sign }),
            GrowupDirection::Undetermined { .. } => None,
        }
    }
}

/// Limit direction of a grow-up trajectory from its tracked modes.
pub fn growup_direction(tr: &TrajectoryRecord) -> Result<GrowupDirection> {
    if !tr.outcome.is_growup() {
        return Err(Error::InvalidArgument(format!(
            "grow-up direction needs a grow-up trajectory, got {:?}",
            tr.outcome
        )));
    }
    if tr.tracked_modes() == 0 {
        return Err(Error::InvalidArgument("trajectory tracks no modes".into()));
    }
    let last = tr.len() - 1;
    let hist = &tr.mode_history[last];
    let (j, v) = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, v)| (j, *v))
        .unwrap();
    let sign = if v >= 0.0 { 1 } else { -1 };
    let start = tr.len().saturating_sub(DIRECTION_WINDOW);
    let projection = (start..tr.len())
        .map(|i| f64::from(sign) * tr.mode_history[i][j] / tr.norms[i])
        .fold(f64::INFINITY, f64::min);
    Ok(if projection >= DIRECTION_THRESHOLD {
        GrowupDirection::Determined { j, sign, projection }
    } else {
        GrowupDirection::Undetermined { j, sign, projection }
    })
}

/// Theory prediction: smallest `j` with `a_inf j^2 < b` and a nonzero
/// projection of the initial datum, signed by that projection. The marginal
/// case `a_inf j^2 = b` is excluded.
pub fn predicted_direction(u0: &StateField, a_inf: f64, b: f64) -> Option<InfinityEquilibrium> {
    let floor = 1e-12 * u0.norm().max(1e-300);
    (0..u0.len())
        .take_while(|&j| a_inf * ((j * j) as f64) < b)
        .find_map(|j| {
            let p = field::project_mode(u0, j);
            (p.abs() > floor).then_some(InfinityEquilibrium {
                j,
                sign: if p > 0.0 { 1 } else { -1 },
            })
        })
}

/// `sup_t ||u(t) - P_m u(t)||` with `P_m` the projection on `phi_0..phi_m`.
/// Computed from the snapshots directly rather than as
/// `sqrt(||u||^2 - sum u_j^2)`, which cancels catastrophically at large norms.
pub fn tail_bound(tr: &TrajectoryRecord, m_cut: usize) -> f64 {
    let basis = ModeBasis::new(tr.grid, (m_cut + 1).min(tr.grid.len()));
    tr.snapshots
        .iter()
        .map(|u| {
            let c = basis.project(u.values());
            let low = basis.synthesize(&c);
            let tail: Vec<f64> = u.values().iter().zip(&low).map(|(a, b)| a - b).collect();
            field::weighted_dot(tr.grid, &tail, &tail).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Projected history `(t, z, <chi, phi_j>)` of a trajectory.
pub fn write_projected_csv<W: Write>(tr: &TrajectoryRecord, modes: usize, mut w: W) -> Result<()> {
    let basis = ModeBasis::new(tr.grid, modes.min(tr.grid.len()));
    let mut header = String::from("t,z");
    for j in 0..basis.len() {
        header.push_str(&format!(",chi_{j}"));
    }
    writeln!(w, "{header}")?;
    for (t, u) in tr.times.iter().zip(&tr.snapshots) {
        let p = project(u);
        write!(w, "{t:.16e},{:.16e}", p.z)?;
        for v in basis.project(p.chi.values()) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Behaviour of the projected trajectory near the equator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquatorDiagnostics {
    /// First sample time after which `z(t)` decreases at every sample.
    pub z_decreasing_from: Option<f64>,
    pub z_final: f64,
    /// `sup_t |<a chi_xx, chi>|` over the record.
    pub bracket_sup: f64,
}

pub fn equator_diagnostics(tr: &TrajectoryRecord, c: &crate::coeff::CoefficientSpec) -> EquatorDiagnostics {
    let zs: Vec<f64> = tr.snapshots.iter().map(|u| project(u).z).collect();
    let mut from = None;
    for i in (0..zs.len()).rev() {
        if i + 1 < zs.len() && zs[i + 1] >= zs[i] {
            break;
        }
        from = Some(tr.times[i]);
    }
    let mut bracket_sup = 0.0_f64;
    for u in &tr.snapshots {
        let p = project(u);
        let (a, _) = crate::integrator::sample_coefficients(u, c);
        let chi_xx = p.chi.second_derivative();
        let term: Vec<f64> = a.iter().zip(&chi_xx).map(|(a, x)| a * x).collect();
        bracket_sup = bracket_sup.max(field::weighted_dot(tr.grid, &term, p.chi.values()).abs());
    }
    EquatorDiagnostics {
        z_decreasing_from: from,
        z_final: *zs.last().unwrap_or(&1.0),
        bracket_sup,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientSpec;
    use crate::integrator::{integrate, StepController};
    use proptest::prelude::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::default()
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let p = project(&StateField::zeros(g));
        assert_eq!(p.z, 1.0);
        assert_eq!(p.chi.sup_norm(), 0.0);
        let phi1 = EigenMode::new(g, 1).field().clone();
        assert!((project(&phi1).z - 0.5f64.sqrt()).abs() < 1e-12);
        let phi0 = EigenMode::new(g, 0).field().clone();
        let p = project(&phi0.scaled(1e6));
        assert!(p.chi.sub(&phi0).unwrap().norm() <= 2e-12);
        assert!(p.z <= 1e-6);
        assert!((p.chi.norm_sq() + p.z * p.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unproject_examples() {
        let g = grid();
        let origin = ProjectedState {
            chi: StateField::zeros(g),
            z: 1.0,
        };
        assert_eq!(unproject(&origin).unwrap().sup_norm(), 0.0);
        let eq = ProjectedState {
            chi: EigenMode::new(g, 0).field().clone(),
            z: 0.0,
        };
        assert!(matches!(unproject(&eq), Err(Error::AtInfinity)));
    }

    #[test]
    fn infinity_counts() {
        assert_eq!(infinity_equilibria(1.0, 5.0).unwrap().len(), 6);
        assert_eq!(infinity_equilibria(3.0, 2.0).unwrap().len(), 2);
        assert_eq!(infinity_equilibria(2.0, 2.0).unwrap().len(), 4);
        assert!(infinity_equilibria(0.0, 2.0).is_err());
    }

    #[test]
    fn sphere_fixed_points_and_symmetry() {
        let g = grid();
        let a = LimitingDiffusion::Constant(1.0);
        for j in 0..6 {
            let phi = EigenMode::new(g, j).field().clone();
            let next = sphere_flow_step(&phi, 0.01, &a).unwrap().chi;
            assert!(next.sub(&phi).unwrap().norm() <= 1e-8);
            assert!(sphere_residual(&phi, &a) <= 1e-8);
        }
        let chi = StateField::from_modes(g, &[(0, 0.5f64.sqrt()), (1, 0.5f64.sqrt())]);
        let next = sphere_flow_step(&chi, 0.01, &a).unwrap().chi;
        assert!(field::project_mode(&next, 0) > field::project_mode(&chi, 0));
        let neg = sphere_flow_step(&chi.scaled(-1.0), 0.01, &a).unwrap().chi;
        assert!(neg.add(&next).unwrap().norm() < 1e-14);
    }

    #[test]
    fn pointwise_diffusion_step_agrees_with_constant() {
        let g = grid();
        let chi = StateField::from_modes(g, &[(0, 0.6), (2, 0.8)]);
        let exact = sphere_flow_step(&chi, 1e-4, &LimitingDiffusion::Constant(1.0)).unwrap();
        let field_a = LimitingDiffusion::Field(std::sync::Arc::new(|_| 1.0));
        let euler = sphere_flow_step(&chi, 1e-4, &field_a).unwrap();
        assert_eq!(euler.dt, 1e-4);
        assert!(exact.chi.sub(&euler.chi).unwrap().norm() < 1e-6);
    }

    #[test]
    fn energy_examples() {
        let g = grid();
        assert_eq!(energy_infinity(EigenMode::new(g, 0).field()), 0.0);
        assert!((energy_infinity(EigenMode::new(g, 1).field()) - 0.5).abs() < 1e-4);
        for j in 2..6 {
            let e = energy_infinity(EigenMode::new(g, j).field());
            let exact = (j * j) as f64 / 2.0;
            assert!((e - exact).abs() < 1e-3 * exact, "j={j}: {e}");
        }
    }

    #[test]
    fn plane_examples() {
        let g = grid();
        let phi2 = EigenMode::new(g, 2).field().clone();
        let ps = plane_project(&phi2.scaled(5.0), 2).unwrap();
        assert!(ps.xi.sub(&phi2).unwrap().norm() < 1e-12);
        assert!((ps.zeta - 0.2).abs() < 1e-12);
        assert!(matches!(plane_project(&phi2, 1), Err(Error::OutsideChart(_))));
        assert_eq!(plane_flow_rates(2, 1.0, &[0])[0].1, 4.0);
        assert_eq!(plane_flow_rates(2, 1.0, &[2])[0].1, 0.0);
        assert_eq!(plane_flow_rates(1, 2.0, &[3])[0].1, -16.0);
    }

    #[test]
    fn chart_equivalence_on_equator() {
        let g = grid();
        let a = LimitingDiffusion::Constant(1.0);
        let chi0 = {
            let f = StateField::from_modes(g, &[(1, 0.5), (2, 0.7), (3, -0.4), (5, 0.2)]);
            f.scaled(1.0 / f.norm())
        };
        let mut chi = chi0.clone();
        let mut plane = sphere_to_plane(&ProjectedState { chi: chi0, z: 0.0 }, 2).unwrap();
        for _ in 0..100 {
            chi = sphere_flow_step(&chi, 0.01, &a).unwrap().chi;
            plane = plane_flow_step(&plane, 0.01, 1.0, 5.0, SPHERE_MODES);
            let mapped = sphere_to_plane(&ProjectedState { chi: chi.clone(), z: 0.0 }, 2).unwrap();
            assert!(mapped.xi.sub(&plane.xi).unwrap().sup_norm() < 1e-6);
            assert_eq!(plane.zeta, 0.0);
        }
    }

    #[test]
    fn sphere_run_reaches_lowest_mode() {
        let g = grid();
        let mut c = vec![0.0; SPHERE_MODES];
        c[1] = 0.1;
        c[4] = 0.9;
        c[7] = -0.3;
        normalize(&mut c);
        let run = run_sphere_flow(&c, g, &LimitingDiffusion::Constant(1.0), &SphereSettings::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.limit, Some(InfinityEquilibrium { j: 1, sign: 1 }));
        assert!(run.max_energy_increase <= 1e-12);
        for w in run.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    fn linear_growup(u0: &StateField, threshold: f64) -> TrajectoryRecord {
        let c = CoefficientSpec::linear(5.0, 1.0).unwrap();
        let ctrl = StepController {
            growup_norm_threshold: threshold,
            t_max: 50.0,
            ..Default::default()
        };
        integrate(u0, &ctrl, &c, None).unwrap()
    }

    #[test]
    fn growup_direction_examples() {
        let g = grid();
        // rounding seeds phi_0, which outgrows phi_2 at relative rate 4, so
        // the invariant-subspace case is read at a lower threshold
        let cases = [
            (StateField::from_modes(g, &[(1, 1.0), (2, 1.0)]), 1, 1, 1e12),
            (StateField::from_modes(g, &[(0, -1.0), (1, 0.5)]), 0, -1, 1e12),
            (StateField::from_modes(g, &[(2, 1.0)]), 2, 1, 1e3),
        ];
        for (u0, j, sign, threshold) in cases {
            let tr = linear_growup(&u0, threshold);
            let dir = growup_direction(&tr).unwrap();
            assert_eq!(dir.target(), Some(InfinityEquilibrium { j, sign }), "{dir:?}");
            assert_eq!(predicted_direction(&u0, 1.0, 5.0), Some(InfinityEquilibrium { j, sign }));
        }
    }

    #[test]
    fn tail_examples() {
        let g = grid();
        let tr = linear_growup(&StateField::from_modes(g, &[(0, 0.3), (2, 1.0)]), 1e6);
        assert!(tail_bound(&tr, 2) < 1e-12 * 1e6);
        let tr = linear_growup(&StateField::from_modes(g, &[(0, 0.3), (5, 1.0)]), 1e6);
        assert!((tail_bound(&tr, 2) - 1.0).abs() < 1e-6);
        // exp(-20 t) decay of the phi_5 component
        let late = TrajectoryRecord {
            snapshots: tr.snapshots[tr.index_at(1.0)..].to_vec(),
            ..tr.clone()
        };
        assert!(tail_bound(&late, 2) < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn roundtrip_and_chart_consistency(coeffs in prop::collection::vec(-3.0f64..3.0, 6), anchor in 0.1f64..5.0) {
            let g = SpatialGrid::new(65).unwrap();
            let mut modes: Vec<(usize, f64)> = coeffs.iter().enumerate().map(|(j, v)| (j, *v)).collect();
            modes[1].1 = anchor;
            let u = StateField::from_modes(g, &modes);
            let p = project(&u);
            prop_assert!((p.chi.norm_sq() + p.z * p.z - 1.0).abs() < 1e-9);
            let back = unproject(&p).unwrap();
            prop_assert!(back.sub(&u).unwrap().sup_norm() <= 1e-9 * (1.0 + u.sup_norm()));
            let p2 = project(&back);
            prop_assert!(p2.chi.sub(&p.chi).unwrap().sup_norm() < 1e-9);
            prop_assert!((p2.z - p.z).abs() < 1e-9);
            let direct = plane_project(&back, 1).unwrap();
            let via = sphere_to_plane(&p, 1).unwrap();
            prop_assert!(direct.xi.sub(&via.xi).unwrap().sup_norm() < 1e-9 * (1.0 + direct.xi.sup_norm()));
            prop_assert!((direct.zeta - via.zeta).abs() < 1e-9);
        }

        #[test]
        fn random_unit_fields_are_not_fixed(coeffs in prop::collection::vec(-1.0f64..1.0, 8)) {
            let g = SpatialGrid::new(65).unwrap();
            let modes: Vec<(usize, f64)> = coeffs.iter().enumerate().map(|(j, v)| (j, *v)).collect();
            let u = StateField::from_modes(g, &modes);
            prop_assume!(u.norm() > 0.1);
            let chi = u.scaled(1.0 / u.norm());
            let (_, _, dist) = nearest_mode(&ModeBasis::new(g, SPHERE_MODES).project(chi.values()));
            prop_assume!(dist > 1e-2);
            prop_assert!(sphere_residual(&chi, &LimitingDiffusion::Constant(1.0)) >= 1e-3);
        }
    }
}
