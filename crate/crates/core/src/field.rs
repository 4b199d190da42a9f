//! Spatial discretization of `[0, pi]` with Neumann closure, L2 quadrature,
//! cosine eigenmodes and nodal (zero-number) analysis.
//!
//! Every field lives on a uniform grid with an odd number of nodes, so that
//! `x = pi/2` is always a node. Second derivatives use the ghost-node
//! closure `u[-1] = u[1]`, `u[n] = u[n-2]`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Smallest admissible grid.
pub const MIN_POINTS: usize = 33;
/// Default resolution; resolves cosine modes well beyond `j = 30`.
pub const DEFAULT_POINTS: usize = 257;
/// Default relative band for zero suppression in [`zero_number`].
pub const DEFAULT_ZERO_REL_TOL: f64 = 1e-9;

/// Uniform grid on `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpatialGrid {
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        if n_points % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be odd so that pi/2 is a node, got {n_points}"
            )));
        }
        Ok(Self { n_points })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        PI / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_points - 1 {
            PI
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Grid with half the spacing (`2n - 1` points); used for Richardson
    /// extrapolation.
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
        }
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i == self.n_points - 1 {
            0.5 * h
        } else {
            h
        }
    }
}

impl Default for SpatialGrid {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_POINTS,
        }
    }
}

/// A sampled profile `u(x_i)` on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: SpatialGrid,
    values: Vec<f64>,
    pub time: Option<f64>,
}

impl StateField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        Ok(Self {
            grid,
            values,
            time: None,
        })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            time: None,
        }
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.len()).map(|i| f(grid.node(i))).collect(),
            time: None,
        }
    }

    /// Linear combination `sum c_j phi_j` of normalized cosine modes.
    pub fn from_modes(grid: SpatialGrid, coeffs: &[(usize, f64)]) -> Self {
        let mut out = Self::zeros(grid);
        for &(j, c) in coeffs {
            let mode = EigenMode::new(grid, j);
            out.axpy(c, mode.field());
        }
        out
    }

    pub(crate) fn from_raw(grid: SpatialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid,
            values,
            time: None,
        }
    }

    #[inline]
    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn check_same_grid(&self, other: &StateField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.len(),
                right: other.grid.len(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &StateField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &StateField) -> Result<StateField> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &StateField) -> Result<StateField> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// L2 norm under trapezoid quadrature.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        weighted_dot(self.grid, &self.values, &self.values)
    }

    /// Centered first derivative; zero at both ends (Neumann closure).
    pub fn derivative(&self) -> Vec<f64> {
        gradient(self.grid, &self.values)
    }

    /// Second derivative with ghost-node Neumann closure.
    pub fn second_derivative(&self) -> Vec<f64> {
        laplacian(self.grid, &self.values)
    }

    /// Value at an arbitrary `x` by linear interpolation.
    pub fn interpolate(&self, x: f64) -> f64 {
        let h = self.grid.spacing();
        let s = (x / h).clamp(0.0, (self.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.len() - 2);
        let w = s - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    /// Writes `# n=..,h=..` metadata, a `x,u` header, and one row per node
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={},h={:.16e}", self.grid.len(), self.grid.spacing())?;
        writeln!(w, "x,u")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.node(i), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<StateField> {
        let mut n = None;
        let mut values = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split(',') {
                    if let Some(v) = kv.trim().strip_prefix("n=") {
                        n = Some(v.parse::<usize>().map_err(|e| {
                            Error::InvalidArgument(format!("bad grid size {v:?}: {e}"))
                        })?);
                    }
                }
                continue;
            }
            if line.starts_with('x') {
                continue;
            }
            let mut parts = line.split(',');
            let _x = parts.next();
            let u = parts
                .next()
                .ok_or_else(|| Error::InvalidArgument(format!("malformed row {line:?}")))?;
            values.push(u.trim().parse::<f64>().map_err(|e| {
                Error::InvalidArgument(format!("bad value {u:?}: {e}"))
            })?);
        }
        let n = n.unwrap_or(values.len());
        let grid = SpatialGrid::new(n)?;
        StateField::new(grid, values)
    }
}

/// Normalized cosine eigenmode of the Neumann Laplacian:
/// `phi_0 = 1/sqrt(pi)`, `phi_j = sqrt(2/pi) cos(j x)`, eigenvalue `-j^2`.
#[derive(Debug, Clone)]
pub struct EigenMode {
    pub index: usize,
    field: StateField,
}

impl EigenMode {
    pub fn new(grid: SpatialGrid, index: usize) -> Self {
        let field = StateField::from_fn(grid, |x| mode_value(index, x));
        Self { index, field }
    }

    #[inline]
    pub fn eigenvalue(&self) -> f64 {
        eigenvalue(self.index)
    }

    #[inline]
    pub fn field(&self) -> &StateField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }
}

/// `lambda_j = -j^2`.
#[inline]
pub fn eigenvalue(j: usize) -> f64 {
    -((j * j) as f64)
}

/// Closed-form value of the normalized mode `phi_j(x)`.
#[inline]
pub fn mode_value(j: usize, x: f64) -> f64 {
    if j == 0 {
        1.0 / PI.sqrt()
    } else {
        (2.0 / PI).sqrt() * (j as f64 * x).cos()
    }
}

/// Precomputed samples of `phi_0 .. phi_{m-1}` for repeated projections.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: SpatialGrid,
    modes: Vec<Vec<f64>>,
}

impl ModeBasis {
    pub fn new(grid: SpatialGrid, count: usize) -> Self {
        let modes = (0..count)
            .map(|j| (0..grid.len()).map(|i| mode_value(j, grid.node(i))).collect())
            .collect();
        Self { grid, modes }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        &self.modes[j]
    }

    /// `<u, phi_j>` for every stored mode.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| weighted_dot(self.grid, values, m))
            .collect()
    }

    /// `sum_j c_j phi_j` sampled on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, m) in coeffs.iter().zip(&self.modes) {
            if *c != 0.0 {
                for (o, v) in out.iter_mut().zip(m) {
                    *o += c * v;
                }
            }
        }
        out
    }
}

pub(crate) fn weighted_dot(grid: SpatialGrid, a: &[f64], b: &[f64]) -> f64 {
    let n = grid.len();
    let h = grid.spacing();
    let interior: f64 = a[1..n - 1]
        .iter()
        .zip(&b[1..n - 1])
        .map(|(x, y)| x * y)
        .sum();
    h * (interior + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
}

pub(crate) fn gradient(grid: SpatialGrid, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let inv2h = 0.5 / grid.spacing();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - u[i - 1]) * inv2h;
    }
    out
}

pub(crate) fn laplacian(grid: SpatialGrid, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = vec![0.0; n];
    out[0] = 2.0 * (u[1] - u[0]) * inv_h2;
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2;
    }
    out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * inv_h2;
    out
}

/// L2 pairing by composite trapezoid quadrature.
pub fn inner(u: &StateField, v: &StateField) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(weighted_dot(u.grid, &u.values, &v.values))
}

/// `<u, phi_j>` with the normalized basis.
pub fn project_mode(u: &StateField, j: usize) -> f64 {
    let n = u.grid.len();
    let h = u.grid.spacing();
    let mut acc = 0.0;
    for (i, v) in u.values.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * v * mode_value(j, u.grid.node(i));
    }
    acc * h
}

/// Number of strict sign changes after suppressing entries with `|u_i| <= tol`;
/// `-1` when every entry is suppressed.
pub fn zero_number(u: &StateField, tol: f64) -> i64 {
    sign_changes(u.values(), tol)
}

/// [`zero_number`] with the default band `1e-9 * ||u||_inf`.
pub fn zero_number_default(u: &StateField) -> i64 {
    sign_changes(u.values(), DEFAULT_ZERO_REL_TOL * u.sup_norm())
}

pub(crate) fn sign_changes(values: &[f64], tol: f64) -> i64 {
    let mut last = 0i8;
    let mut changes = 0i64;
    let mut seen = false;
    for &v in values {
        if v.abs() <= tol {
            continue;
        }
        let s = if v > 0.0 { 1 } else { -1 };
        if seen && s != last {
            changes += 1;
        }
        last = s;
        seen = true;
    }
    if seen {
        changes
    } else {
        -1
    }
}

/// Classification of a grid node as a zero of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ZeroKind {
    Simple,
    Multiple,
    NotAZero,
}

/// Simple zero iff `|u_i| <= tol_val` and `|u_x| > tol_deriv`; multiple zero
/// iff both are within tolerance. Boundary nodes use one-sided second-order
/// stencils.
pub fn classify_zero(u: &StateField, i: usize, tol_val: f64, tol_deriv: f64) -> Result<ZeroKind> {
    let n = u.len();
    if i >= n {
        return Err(Error::InvalidArgument(format!(
            "node {i} outside grid of {n} points"
        )));
    }
    let v = u.values();
    if v[i].abs() > tol_val {
        return Ok(ZeroKind::NotAZero);
    }
    let h = u.grid.spacing();
    let d = if i == 0 {
        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
    } else {
        (v[i + 1] - v[i - 1]) / (2.0 * h)
    };
    Ok(if d.abs() > tol_deriv {
        ZeroKind::Simple
    } else {
        ZeroKind::Multiple
    })
}
