//! Bounded equilibria by shooting, their linearized spectra, the Sturm
//! permutation and the adjacency relation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientSpec;
use crate::error::{Error, Result};
use crate::expr::Point;
use crate::field::{self, SpatialGrid, StateField};
use crate::integrator::vector_field;
use crate::linalg::Tridiagonal;

/// Number of eigenvalues computed per equilibrium.
pub const DEFAULT_M_EIGS: usize = 16;
/// Shooting trajectories are abandoned once `|u|` exceeds this.
pub const ESCAPE_LEVEL: f64 = 1e8;
/// Acceptance level of the stationary residual, relative to `1 + ||u||_inf`.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Roots of the miss function are refined to `|miss| <= MISS_TOL (1 + |eta|)`.
pub const MISS_TOL: f64 = 1e-10;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-8;

const RK_TOL: f64 = 1e-13;
const RK_MAX_HALVINGS: u32 = 24;

/// `1e-6 max(1, b)`.
pub fn hyperbolicity_tol(b: f64) -> f64 {
    1e-6 * b.max(1.0)
}

/// A bounded equilibrium with its spectrum.
#[derive(Debug, Clone)]
pub struct EquilibriumRecord {
    pub id: usize,
    /// Newton-polished stationary state of the discrete operator.
    pub profile: StateField,
    /// `u(0)` of the shooting solution.
    pub eta: f64,
    /// `u(pi)` of the shooting solution.
    pub right_value: f64,
    /// Leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions matching `eigenvalues`, unit L2 norm, positive at `x = 0`.
    pub eigenfunctions: Vec<StateField>,
    pub morse_index: usize,
    pub hyperbolic: bool,
    /// Threshold below which an eigenvalue counts as zero.
    pub hyperbolicity_tol: f64,
    /// `||a u_xx + b u + f||_inf` of `profile`.
    pub residual: f64,
    /// Part of a continuum of stationary solutions found by the scan.
    pub degenerate: bool,
}

impl EquilibriumRecord {
    /// Eigenvalue of smallest modulus.
    pub fn critical_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(f64::NAN)
    }

    pub fn summary(&self) -> EquilibriumSummary {
        EquilibriumSummary {
            id: self.id,
            eta: self.eta,
            u_pi: self.right_value,
            morse: self.morse_index,
            hyperbolic: self.hyperbolic,
            eigenvalues: self.eigenvalues.clone(),
            residual: self.residual,
        }
    }
}

/// Serializable view of an [`EquilibriumRecord`] without profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub id: usize,
    pub eta: f64,
    pub u_pi: f64,
    pub morse: usize,
    pub hyperbolic: bool,
    pub eigenvalues: Vec<f64>,
    pub residual: f64,
}

/// Equilibria table: `id,eta,u_pi,morse,hyperbolic,lambda_0..lambda_{m-1}`.
pub fn write_table_csv<W: Write>(eqs: &[EquilibriumRecord], m_eigs: usize, mut w: W) -> Result<()> {
    let mut header = String::from("id,eta,u_pi,morse,hyperbolic");
    for k in 0..m_eigs {
        header.push_str(&format!(",lambda_{k}"));
    }
    writeln!(w, "{header}")?;
    for e in eqs {
        write!(
            w,
            "{},{:.16e},{:.16e},{},{}",
            e.id, e.eta, e.right_value, e.morse_index, e.hyperbolic
        )?;
        for k in 0..m_eigs {
            match e.eigenvalues.get(k) {
                Some(v) => write!(w, ",{v:.16e}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- shooting

#[derive(Debug, Clone)]
struct Shot {
    /// Samples at grid nodes; truncated on escape.
    values: Vec<f64>,
    slope_end: f64,
    escaped: bool,
    norm: f64,
}

fn ode_rhs(c: &CoefficientSpec, x: f64, u: f64, p: f64, norm: f64) -> (f64, f64) {
    let pt = Point { x, u, p, norm };
    (p, -(c.b * u + c.f(&pt)) / c.a(&pt))
}

fn rk4(c: &CoefficientSpec, x: f64, y: (f64, f64), h: f64, norm: f64) -> (f64, f64) {
    let k1 = ode_rhs(c, x, y.0, y.1, norm);
    let k2 = ode_rhs(c, x + 0.5 * h, y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1, norm);
    let k3 = ode_rhs(c, x + 0.5 * h, y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1, norm);
    let k4 = ode_rhs(c, x + h, y.0 + h * k3.0, y.1 + h * k3.1, norm);
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Adaptive RK4 (step doubling) across `[x0, x1]`.
fn advance(c: &CoefficientSpec, x0: f64, x1: f64, mut y: (f64, f64), norm: f64, h_hint: &mut f64) -> (f64, f64) {
    let mut x = x0;
    let h_floor = (x1 - x0) / f64::from(1u32 << RK_MAX_HALVINGS);
    while x < x1 {
        let mut h = h_hint.min(x1 - x);
        loop {
            let full = rk4(c, x, y, h, norm);
            let mid = rk4(c, x, y, 0.5 * h, norm);
            let half = rk4(c, x + 0.5 * h, mid, 0.5 * h, norm);
            let err = ((full.0 - half.0).abs() / (1.0 + half.0.abs()))
                .max((full.1 - half.1).abs() / (1.0 + half.1.abs()))
                / 15.0;
            if err <= RK_TOL || h <= h_floor {
                // local extrapolation of the doubled step
                y = (half.0 + (half.0 - full.0) / 15.0, half.1 + (half.1 - full.1) / 15.0);
                x = if x1 - x - h <= 1e-15 * x1 { x1 } else { x + h };
                *h_hint = if err < RK_TOL / 32.0 { 2.0 * h } else { h };
                break;
            }
            h *= 0.5;
        }
    }
    y
}

fn shoot_fixed_norm(eta: f64, c: &CoefficientSpec, grid: SpatialGrid, norm: f64) -> Shot {
    let n = grid.len();
    let mut values = Vec::with_capacity(n);
    values.push(eta);
    let mut y = (eta, 0.0);
    let mut h_hint = grid.spacing();
    for i in 1..n {
        y = advance(c, grid.node(i - 1), grid.node(i), y, norm, &mut h_hint);
        if !(y.0.abs() <= ESCAPE_LEVEL) || !y.1.is_finite() {
            let s = if y.1 != 0.0 && y.1.is_finite() { y.1.signum() } else { y.0.signum() };
            return Shot {
                values,
                slope_end: s * f64::INFINITY,
                escaped: true,
                norm: f64::INFINITY,
            };
        }
        values.push(y.0);
    }
    let norm = field::weighted_dot(grid, &values, &values).sqrt();
    Shot {
        values,
        slope_end: y.1,
        escaped: false,
        norm,
    }
}

/// Shooting with the `||u||` argument iterated to a fixed point when the
/// coefficients read it.
fn shoot_profile(eta: f64, c: &CoefficientSpec, grid: SpatialGrid) -> Shot {
    if !c.uses_norm {
        return shoot_fixed_norm(eta, c, grid, 0.0);
    }
    let mut norm = eta.abs() * std::f64::consts::PI.sqrt();
    let mut shot = shoot_fixed_norm(eta, c, grid, norm);
    for _ in 0..100 {
        if shot.escaped {
            break;
        }
        let next = shot.norm;
        if (next - norm).abs() <= 1e-13 * (1.0 + next) {
            break;
        }
        norm = next;
        shot = shoot_fixed_norm(eta, c, grid, norm);
    }
    shot
}

/// Miss distance `u'(pi)` of the Neumann shooting problem from `u(0) = eta`.
/// An escaping trajectory returns an infinity signed by its final slope.
pub fn shoot(eta: f64, c: &CoefficientSpec) -> f64 {
    shoot_profile(eta, c, SpatialGrid::default()).slope_end
}

// ------------------------------------------------------------ newton polish

fn samples(u: &[f64], grid: SpatialGrid, c: &CoefficientSpec) -> Vec<(Point, f64)> {
    let ux = field::gradient(grid, u);
    let uxx = field::laplacian(grid, u);
    let norm = if c.uses_norm { field::weighted_dot(grid, u, u).sqrt() } else { 0.0 };
    (0..grid.len())
        .map(|i| {
            (
                Point {
                    x: grid.node(i),
                    u: u[i],
                    p: ux[i],
                    norm,
                },
                uxx[i],
            )
        })
        .collect()
}

/// Discrete linearization `a v_xx + (a_p e_xx + f_p) v_x + (a_u e_xx + b + f_u) v`
/// with Neumann closure. The dependence on `||u||` is frozen.
fn linear_operator(e: &[f64], grid: SpatialGrid, c: &CoefficientSpec) -> Tridiagonal {
    let n = grid.len();
    let h = grid.spacing();
    let mut m = Tridiagonal::new(n);
    for (i, (pt, exx)) in samples(e, grid, c).into_iter().enumerate() {
        let a = c.a(&pt);
        let c1 = c.a_p(&pt) * exx + c.f_p(&pt);
        let c0 = c.a_u(&pt) * exx + c.b + c.f_u(&pt);
        m.diag[i] = -2.0 * a / (h * h) + c0;
        if i == 0 {
            m.upper[0] = 2.0 * a / (h * h);
        } else if i == n - 1 {
            m.lower[n - 2] = 2.0 * a / (h * h);
        } else {
            m.lower[i - 1] = a / (h * h) - c1 / (2.0 * h);
            m.upper[i] = a / (h * h) + c1 / (2.0 * h);
        }
    }
    m
}

fn residual_of(u: &StateField, c: &CoefficientSpec) -> f64 {
    vector_field(u, c).sup_norm()
}

/// Newton iteration onto a zero of the discrete vector field.
fn newton_polish(u0: Vec<f64>, grid: SpatialGrid, c: &CoefficientSpec) -> Result<(StateField, f64)> {
    let n = grid.len();
    let mut u = StateField::from_raw(grid, u0);
    let mut res = residual_of(&u, c);
    for _ in 0..60 {
        let scale = 1.0 + u.sup_norm();
        if res <= 1e-12 * scale {
            break;
        }
        let g = vector_field(&u, c);
        let jac = linear_operator(u.values(), grid, c);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = jac.diag[i];
            if i + 1 < n {
                dense[(i, i + 1)] = jac.upper[i];
                dense[(i + 1, i)] = jac.lower[i];
            }
        }
        let rhs = DVector::from_column_slice(g.values());
        let Some(delta) = dense.lu().solve(&rhs) else {
            break;
        };
        let mut next = u.clone();
        for i in 0..n {
            next.values_mut()[i] -= delta[i];
        }
        let next_res = residual_of(&next, c);
        if !(next_res < res) {
            break;
        }
        u = next;
        res = next_res;
    }
    if res > RESIDUAL_TOL * (1.0 + u.sup_norm()) {
        return Err(Error::NewtonFailure(res));
    }
    Ok((u, res))
}

/// Discrete equilibrium on `grid` started from the shooting profile.
pub fn polished_profile(eta: f64, c: &CoefficientSpec, grid: SpatialGrid) -> Result<(StateField, f64)> {
    let shot = shoot_profile(eta, c, grid);
    if shot.escaped {
        return Err(Error::InvalidArgument(format!(
            "shooting from eta = {eta} escapes before x = pi"
        )));
    }
    newton_polish(shot.values, grid, c)
}

// ------------------------------------------------------------ linearization

/// Spectrum of the linearization at an equilibrium.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Richardson-extrapolated eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions on the record's grid.
    pub eigenfunctions: Vec<StateField>,
    /// Raw eigenvalues on the record's grid.
    pub coarse: Vec<f64>,
}

fn eigen_on(profile: &[f64], grid: SpatialGrid, c: &CoefficientSpec, m: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    linear_operator(profile, grid, c).top_eigenpairs(m)
}

/// The `m_eigs` largest eigenvalues of the linearization at `e`.
///
/// Eigenvalues are extrapolated from the record's grid and its refinement,
/// `(4 lambda_fine - lambda_coarse) / 3`, which removes the `O(h^2)` error of
/// the difference operator.
pub fn linearize(e: &EquilibriumRecord, c: &CoefficientSpec, m_eigs: usize) -> Result<Spectrum> {
    linearize_profile(&e.profile, e.eta, c, m_eigs)
}

fn linearize_profile(profile: &StateField, eta: f64, c: &CoefficientSpec, m_eigs: usize) -> Result<Spectrum> {
    let grid = profile.grid();
    let m = m_eigs.min(grid.len() / 4).max(1);
    let (coarse, vecs) = eigen_on(profile.values(), grid, c, m)?;
    let fine_grid = grid.refined();
    let fine_profile = if profile.sup_norm() == 0.0 {
        StateField::zeros(fine_grid)
    } else {
        polished_profile(eta, c, fine_grid)?.0
    };
    let (fine, _) = eigen_on(fine_profile.values(), fine_grid, c, m)?;
    let eigenvalues: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(lc, lf)| (4.0 * lf - lc) / 3.0)
        .collect();
    let eigenfunctions = vecs
        .into_iter()
        .map(|v| {
            let norm = field::weighted_dot(grid, &v, &v).sqrt();
            let lead = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
            let s = lead.signum() / norm;
            StateField::from_raw(grid, v.into_iter().map(|x| x * s).collect())
        })
        .collect();
    Ok(Spectrum {
        eigenvalues,
        eigenfunctions,
        coarse,
    })
}

// --------------------------------------------------------------- discovery

/// Parameters of [`find_equilibria_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSearch {
    pub eta_min: f64,
    pub eta_max: f64,
    pub scan_n: usize,
    pub n_points: usize,
    pub m_eigs: usize,
    /// Require the scan to cover the a-priori equilibrium range.
    pub require_coverage: bool,
}

impl Default for EquilibriumSearch {
    fn default() -> Self {
        Self {
            eta_min: -1.0,
            eta_max: 1.0,
            scan_n: 400,
            n_points: field::DEFAULT_POINTS,
            m_eigs: DEFAULT_M_EIGS,
            require_coverage: false,
        }
    }
}

impl EquilibriumSearch {
    /// Symmetric scan over [`equilibrium_bound`].
    pub fn covering(c: &CoefficientSpec) -> Self {
        let r = equilibrium_bound(c);
        Self {
            eta_min: -r,
            eta_max: r,
            require_coverage: true,
            ..Self::default()
        }
    }
}

/// A-priori bound for `|u(0)|` of bounded equilibria.
///
/// For bounded `f` this is `3 f_bound / d + 1` with `d` the distance of `b`
/// from the spectrum `{a_inf j^2}`; it always contains
/// `[-f_bound / b - 1, f_bound / b + 1]`. Cut-off systems have all their
/// equilibria inside `R + 1`.
pub fn equilibrium_bound(c: &CoefficientSpec) -> f64 {
    if let Some(r) = c.cutoff_radius {
        return r + 2.0;
    }
    let n = c.n_infinity();
    let d = (0..=n + 1)
        .map(|j| (c.b - c.a_inf * (j * j) as f64).abs())
        .fold(f64::INFINITY, f64::min)
        .max(1e-3);
    (3.0 * c.f_bound / d + 1.0).max(c.f_bound / c.b + 1.0)
}

fn refine_root(c: &CoefficientSpec, grid: SpatialGrid, mut lo: f64, mut hi: f64, mut f_lo: f64, mut f_hi: f64) -> Option<f64> {
    // bisection with secant (Illinois) steps whenever both ends are finite
    let mut side = 0i8;
    for _ in 0..300 {
        let width = hi - lo;
        if width <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mut mid = 0.5 * (lo + hi);
        if f_lo.is_finite() && f_hi.is_finite() {
            let s = hi - f_hi * (hi - lo) / (f_hi - f_lo);
            if s > lo && s < hi {
                mid = s;
            }
        }
        let fm = shoot_profile(mid, c, grid).slope_end;
        if fm.abs() <= MISS_TOL * (1.0 + mid.abs()) {
            return Some(mid);
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
            if side == -1 && f_hi.is_finite() {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = fm;
            if side == 1 && f_lo.is_finite() {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = shoot_profile(mid, c, grid).slope_end;
    (fm.abs() <= MISS_TOL * (1.0 + mid.abs()) * 1e3).then_some(mid)
}

/// Bounded equilibria with `u(0)` in `[eta_min, eta_max]`, sorted by `u(0)`.
pub fn find_equilibria(eta_min: f64, eta_max: f64, scan_n: usize, c: &CoefficientSpec) -> Result<Vec<EquilibriumRecord>> {
    find_equilibria_with(
        &EquilibriumSearch {
            eta_min,
            eta_max,
            scan_n,
            ..EquilibriumSearch::default()
        },
        c,
    )
}

pub fn find_equilibria_with(s: &EquilibriumSearch, c: &CoefficientSpec) -> Result<Vec<EquilibriumRecord>> {
    if !(s.eta_min < s.eta_max) || !s.eta_min.is_finite() || !s.eta_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scan range [{}, {}] is empty",
            s.eta_min, s.eta_max
        )));
    }
    if s.scan_n < 100 {
        return Err(Error::InvalidArgument(format!(
            "scan_n must be at least 100, got {}",
            s.scan_n
        )));
    }
    if s.require_coverage && c.f_bound.is_finite() {
        let need = c.f_bound / c.b + 1.0;
        if s.eta_min > -need || s.eta_max < need {
            return Err(Error::InvalidArgument(format!(
                "scan range [{}, {}] does not cover [-{need}, {need}]",
                s.eta_min, s.eta_max
            )));
        }
    }
    let grid = SpatialGrid::new(s.n_points)?;
    let etas: Vec<f64> = (0..=s.scan_n)
        .map(|i| {
            let v = s.eta_min + (s.eta_max - s.eta_min) * i as f64 / s.scan_n as f64;
            if v.abs() < 1e-14 * (s.eta_max - s.eta_min) {
                0.0
            } else {
                v
            }
        })
        .collect();
    let misses: Vec<f64> = etas.par_iter().map(|&e| shoot_profile(e, c, grid).slope_end).collect();
    let is_root: Vec<bool> = etas
        .iter()
        .zip(&misses)
        .map(|(e, m)| m.abs() <= MISS_TOL * (1.0 + e.abs()))
        .collect();

    // roots on scan nodes; runs of three or more are continua, kept once
    let mut roots: Vec<(f64, bool)> = Vec::new();
    let mut i = 0;
    while i < etas.len() {
        if is_root[i] {
            let start = i;
            while i + 1 < etas.len() && is_root[i + 1] {
                i += 1;
            }
            if i - start >= 2 {
                roots.push((etas[(start + i) / 2], true));
            } else {
                for k in start..=i {
                    roots.push((etas[k], false));
                }
            }
        }
        i += 1;
    }
    let brackets: Vec<usize> = (0..s.scan_n)
        .filter(|&k| {
            !is_root[k]
                && !is_root[k + 1]
                && !misses[k].is_nan()
                && !misses[k + 1].is_nan()
                && misses[k].signum() != misses[k + 1].signum()
        })
        .collect();
    let refined: Vec<Option<f64>> = brackets
        .par_iter()
        .map(|&k| refine_root(c, grid, etas[k], etas[k + 1], misses[k], misses[k + 1]))
        .collect();
    roots.extend(refined.into_iter().flatten().map(|r| (r, false)));
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|b, a| (b.0 - a.0).abs() < DEDUP_TOL);

    let tol = hyperbolicity_tol(c.b);
    let built: Vec<Result<EquilibriumRecord>> = roots
        .par_iter()
        .map(|&(eta, degenerate)| {
            let shot = shoot_profile(eta, c, grid);
            let right_value = *shot.values.last().unwrap();
            let (profile, residual) = newton_polish(shot.values, grid, c)?;
            let spec = linearize_profile(&profile, eta, c, s.m_eigs)?;
            let morse_index = spec.eigenvalues.iter().filter(|&&l| l > tol).count();
            let hyperbolic = spec.eigenvalues.iter().all(|l| l.abs() > tol);
            Ok(EquilibriumRecord {
                id: 0,
                profile,
                eta,
                right_value,
                eigenvalues: spec.eigenvalues,
                eigenfunctions: spec.eigenfunctions,
                morse_index,
                hyperbolic,
                hyperbolicity_tol: tol,
                residual,
                degenerate,
            })
        })
        .collect();
    let mut out = Vec::with_capacity(built.len());
    for (id, r) in built.into_iter().enumerate() {
        let mut e = r?;
        e.id = id;
        out.push(e);
    }
    Ok(out)
}

// ------------------------------------------------------ Sturm permutation

/// `sigma[k]` is the rank (1-based) by `u(pi)` of the equilibrium that is
/// `k`-th by `u(0)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SturmPermutation {
    pub sigma: Vec<usize>,
}

impl SturmPermutation {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.sigma.iter().enumerate().all(|(k, &s)| s == k + 1)
    }
}

fn check_distinct(values: &[f64], what: &str) -> Result<()> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    for w in v.windows(2) {
        if (w[1] - w[0]).abs() <= DEDUP_TOL {
            return Err(Error::NonGeneric(format!(
                "two equilibria share {what} = {} within {DEDUP_TOL:e}",
                w[0]
            )));
        }
    }
    Ok(())
}

pub fn sturm_permutation(eqs: &[EquilibriumRecord]) -> Result<SturmPermutation> {
    let left: Vec<f64> = eqs.iter().map(|e| e.eta).collect();
    let right: Vec<f64> = eqs.iter().map(|e| e.right_value).collect();
    check_distinct(&left, "u(0)")?;
    check_distinct(&right, "u(pi)")?;
    let mut by_left: Vec<usize> = (0..eqs.len()).collect();
    by_left.sort_by(|&a, &b| left[a].total_cmp(&left[b]));
    let mut by_right: Vec<usize> = (0..eqs.len()).collect();
    by_right.sort_by(|&a, &b| right[a].total_cmp(&right[b]));
    let mut rank_right = vec![0; eqs.len()];
    for (r, &i) in by_right.iter().enumerate() {
        rank_right[i] = r + 1;
    }
    Ok(SturmPermutation {
        sigma: by_left.iter().map(|&i| rank_right[i]).collect(),
    })
}

// -------------------------------------------------------------- adjacency

/// Second argument of [`adjacent`].
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Bounded(&'a EquilibriumRecord),
    /// `sign * Phi_j`.
    Infinity { j: usize, sign: i32 },
}

/// `z(u - v)` with the default tolerance.
pub fn difference_zero_number(u: &StateField, v: &StateField) -> Result<i64> {
    Ok(field::zero_number_default(&u.sub(v)?))
}

/// No bounded `u_*` with `u_*(0)` strictly between the two boundary values
/// satisfies `z(e- - u_*) = z(e- - e+) = z(e+ - u_*)`. At infinity,
/// `z(e - sign Phi_k) = k` and `+Phi_k(0) = +inf`, `-Phi_k(0) = -inf`.
pub fn adjacent(e_minus: &EquilibriumRecord, e_plus: Target<'_>, all_bounded: &[EquilibriumRecord]) -> Result<bool> {
    Ok(blockers(e_minus, e_plus, all_bounded)?.is_empty())
}

/// Ids of the equilibria that block the pair, in the order of `all_bounded`.
pub fn blockers(e_minus: &EquilibriumRecord, e_plus: Target<'_>, all_bounded: &[EquilibriumRecord]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    match e_plus {
        Target::Bounded(ep) => {
            if ep.id == e_minus.id || (ep.eta - e_minus.eta).abs() <= DEDUP_TOL {
                return Err(Error::InvalidArgument(
                    "adjacency needs two distinct equilibria".into(),
                ));
            }
            let (lo, hi) = if e_minus.eta < ep.eta {
                (e_minus.eta, ep.eta)
            } else {
                (ep.eta, e_minus.eta)
            };
            let z_mp = difference_zero_number(&e_minus.profile, &ep.profile)?;
            for u in all_bounded {
                if !(u.eta > lo && u.eta < hi) {
                    continue;
                }
                let z_m = difference_zero_number(&e_minus.profile, &u.profile)?;
                let z_p = difference_zero_number(&ep.profile, &u.profile)?;
                if z_m == z_mp && z_p == z_mp {
                    out.push(u.id);
                }
            }
        }
        Target::Infinity { j, sign } => {
            if sign != 1 && sign != -1 {
                return Err(Error::InvalidArgument(format!("sign must be +-1, got {sign}")));
            }
            let k = j as i64;
            for u in all_bounded {
                if u.id == e_minus.id {
                    continue;
                }
                let between = if sign > 0 { u.eta > e_minus.eta } else { u.eta < e_minus.eta };
                if between && difference_zero_number(&e_minus.profile, &u.profile)? == k {
                    out.push(u.id);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::build_cutoff;

    #[test]
    fn shoot_linear_closed_form() {
        let c = CoefficientSpec::linear(2.0, 1.0).unwrap();
        let r2 = 2f64.sqrt();
        let exact = -r2 * (r2 * std::f64::consts::PI).sin();
        assert!((shoot(1.0, &c) - exact).abs() < 1e-4);
        assert!((exact - 1.3632).abs() < 1e-4);
        assert_eq!(shoot(0.0, &c), 0.0);
    }

    #[test]
    fn shoot_matches_fixed_step_oracle() {
        let c = CoefficientSpec::tanh_reaction(2.0, 1.0, 1.0).unwrap();
        // fixed-step RK4 with 20000 steps
        let steps = 20_000;
        let h = std::f64::consts::PI / steps as f64;
        let g = |u: f64| -(2.0 * u - u.tanh());
        let (mut u, mut p) = (0.5_f64, 0.0_f64);
        for _ in 0..steps {
            let k1 = (p, g(u));
            let k2 = (p + 0.5 * h * k1.1, g(u + 0.5 * h * k1.0));
            let k3 = (p + 0.5 * h * k2.1, g(u + 0.5 * h * k2.0));
            let k4 = (p + h * k3.1, g(u + h * k3.0));
            u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            p += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        assert!((shoot(0.5, &c) - p).abs() < 1e-6, "{} vs {p}", shoot(0.5, &c));
    }

    #[test]
    fn linear_b2_has_only_zero() {
        let c = CoefficientSpec::linear(2.0, 1.0).unwrap();
        let eqs = find_equilibria_with(&EquilibriumSearch::covering(&c), &c).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].eta, 0.0);
        assert_eq!(eqs[0].morse_index, 2);
    }

    #[test]
    fn linear_spectrum_b5() {
        let c = CoefficientSpec::linear(5.0, 1.0).unwrap();
        let eqs = find_equilibria(-1.0, 1.0, 100, &c).unwrap();
        assert_eq!(eqs.len(), 1);
        let e = &eqs[0];
        for (j, l) in e.eigenvalues.iter().enumerate() {
            let exact = 5.0 - (j * j) as f64;
            assert!((l - exact).abs() < 1e-3 * (1.0 + exact.abs()), "j={j}: {l}");
        }
        assert_eq!(e.morse_index, 3);
        assert!(e.hyperbolic);
        for (k, v) in e.eigenfunctions.iter().enumerate() {
            assert_eq!(field::zero_number_default(v), k as i64);
        }
    }

    #[test]
    fn b4_is_not_hyperbolic() {
        let c = CoefficientSpec::linear(4.0, 1.0).unwrap();
        let eqs = find_equilibria(-1.0, 1.0, 100, &c).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(eqs[0].degenerate);
        assert!(!eqs[0].hyperbolic);
        assert!(eqs[0].critical_eigenvalue().abs() < 1e-6);
    }

    #[test]
    fn empty_range_gives_nothing() {
        let c = CoefficientSpec::linear(2.0, 1.0).unwrap();
        assert!(find_equilibria(0.5, 1.0, 100, &c).unwrap().is_empty());
        assert!(find_equilibria(1.0, 0.5, 100, &c).is_err());
    }

    #[test]
    fn coverage_is_asserted() {
        let c = CoefficientSpec::tanh_reaction(5.0, 2.0, 1.0).unwrap();
        let s = EquilibriumSearch {
            require_coverage: true,
            ..EquilibriumSearch::default()
        };
        assert!(find_equilibria_with(&s, &c).is_err());
    }

    fn cutoff_three() -> (CoefficientSpec, Vec<EquilibriumRecord>) {
        let base = CoefficientSpec::tanh_reaction(0.5, 1.0, 1.0).unwrap();
        let c = build_cutoff(&base, 4.0).unwrap();
        let all = find_equilibria_with(&EquilibriumSearch::covering(&c), &c).unwrap();
        // the cut-off adds one outer equilibrium per sign beyond R
        assert_eq!(all.len(), 5);
        assert!(all[0].eta < -4.0 && all[4].eta > 4.0);
        assert_eq!(all[0].morse_index, 0);
        let mut eqs: Vec<EquilibriumRecord> = all[1..4].to_vec();
        for (id, e) in eqs.iter_mut().enumerate() {
            e.id = id;
        }
        (c, eqs)
    }

    #[test]
    fn cutoff_scenario_equilibria() {
        let (_, eqs) = cutoff_three();
        assert_eq!(eqs.len(), 3, "{:?}", eqs.iter().map(|e| e.eta).collect::<Vec<_>>());
        assert_eq!(eqs[1].eta, 0.0);
        assert_eq!(eqs[1].morse_index, 0);
        assert_eq!(eqs[0].morse_index, 1);
        assert_eq!(eqs[2].morse_index, 1);
        for e in &eqs {
            assert!(e.residual <= RESIDUAL_TOL * (1.0 + e.profile.sup_norm()));
        }
        let sigma = sturm_permutation(&eqs).unwrap();
        assert!(sigma.is_identity());
    }

    #[test]
    fn cutoff_adjacency_matches_triple_loop() {
        let (_, eqs) = cutoff_three();
        let z = |a: &EquilibriumRecord, b: &EquilibriumRecord| {
            field::zero_number_default(&a.profile.sub(&b.profile).unwrap())
        };
        for a in &eqs {
            for b in &eqs {
                if a.id == b.id {
                    assert!(adjacent(a, Target::Bounded(b), &eqs).is_err());
                    continue;
                }
                let (lo, hi) = (a.eta.min(b.eta), a.eta.max(b.eta));
                let blocked = eqs.iter().any(|u| {
                    u.eta > lo && u.eta < hi && z(a, u) == z(a, b) && z(b, u) == z(a, b)
                });
                let adj = adjacent(a, Target::Bounded(b), &eqs).unwrap();
                assert_eq!(adj, !blocked);
                assert_eq!(adj, adjacent(b, Target::Bounded(a), &eqs).unwrap());
            }
        }
        assert!(!adjacent(&eqs[0], Target::Bounded(&eqs[2]), &eqs).unwrap());
        assert!(adjacent(&eqs[0], Target::Bounded(&eqs[1]), &eqs).unwrap());
        assert!(!adjacent(&eqs[0], Target::Infinity { j: 0, sign: 1 }, &eqs).unwrap());
        assert!(adjacent(&eqs[0], Target::Infinity { j: 0, sign: -1 }, &eqs).unwrap());
        assert!(!adjacent(&eqs[1], Target::Infinity { j: 0, sign: 1 }, &eqs).unwrap());
    }

    #[test]
    fn single_equilibrium_adjacent_to_infinity() {
        let c = CoefficientSpec::linear(0.5, 1.0).unwrap();
        let eqs = find_equilibria(-1.0, 1.0, 100, &c).unwrap();
        assert!(adjacent(&eqs[0], Target::Infinity { j: 0, sign: 1 }, &eqs).unwrap());
        assert!(sturm_permutation(&eqs).unwrap().is_identity());
    }

    #[test]
    fn table_csv_layout() {
        let c = CoefficientSpec::linear(0.5, 1.0).unwrap();
        let eqs = find_equilibria(-1.0, 1.0, 100, &c).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&eqs, 16, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("id,eta,u_pi,morse,hyperbolic,lambda_0,"));
        assert!(header.ends_with("lambda_15"));
    }
}
