use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. `lower[i]` couples row `i + 1` to
/// column `i`; `upper[i]` couples row `i` to column `i + 1`.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n - 1],
            diag: vec![0.0; n],
            upper: vec![0.0; n - 1],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Thomas algorithm. Fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot.abs() < 1e-300 {
            return Err(Error::CoefficientViolation("singular tridiagonal system".into()));
        }
        if n > 1 {
            c[0] = self.upper[0] / pivot;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::CoefficientViolation(format!(
                    "singular tridiagonal system at row {i}"
                )));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    /// Eigenpairs of a tridiagonal matrix with `lower[i] * upper[i] > 0`, via
    /// the diagonal similarity `S = D A D^-1` that makes it symmetric.
    /// Returns the `count` largest eigenvalues in descending order with
    /// eigenvectors of `A` normalized to unit Euclidean length.
    pub fn top_eigenpairs(&self, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.len();
        let mut log_d = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let prod = self.lower[i] * self.upper[i];
            if !(prod > 0.0) {
                return Err(Error::EigenFailure(format!(
                    "off-diagonal product {prod:e} at row {i} is not positive; refine the grid"
                )));
            }
            off[i] = self.upper[i].signum() * prod.sqrt();
            log_d[i + 1] = log_d[i] + 0.5 * (self.upper[i] / self.lower[i]).abs().ln();
        }
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = self.diag[i];
            if i + 1 < n {
                s[(i, i + 1)] = off[i];
                s[(i + 1, i)] = off[i];
            }
        }
        let eig = SymmetricEigen::try_new(s, 1e-14, 10_000).ok_or_else(|| {
            Error::EigenFailure("symmetric eigen-solver did not converge".into())
        })?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let count = count.min(n);
        let mut values = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count);
        let shift = log_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &k in order.iter().take(count) {
            values.push(eig.eigenvalues[k]);
            // A v = mu v  <=>  S (D v) = mu (D v), D = diag(exp(log_d))
            let w = eig.eigenvectors.column(k);
            let mut v: Vec<f64> = (0..n).map(|i| w[i] * (shift - log_d[i]).exp()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::EigenFailure(
                    "eigenvector back-transformation under/overflowed".into(),
                ));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            vectors.push(v);
        }
        Ok((values, vectors))
    }
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
