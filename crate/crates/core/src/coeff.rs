//! Coefficients `a`, `f`, `b` of the equation and the dissipative cut-off.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, Point};

pub type CoeffFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Step for finite-difference partials when no analytic partial is given.
pub const FD_PARTIAL_STEP: f64 = 1e-6;

const PROBE_X: [f64; 5] = [0.0, 0.7, PI / 2.0, 2.3, PI];
const PROBE_U: [f64; 9] = [-1e4, -50.0, -3.0, -0.5, 0.0, 0.5, 3.0, 50.0, 1e4];
const PROBE_NORM: [f64; 6] = [0.0, 0.5, 1.0, 10.0, 1e3, 1e8];

/// Coefficients of `u_t = a u_xx + b u + f`.
#[derive(Clone)]
pub struct CoefficientSpec {
    pub name: String,
    a: CoeffFn,
    f: CoeffFn,
    pub b: f64,
    a_u: Option<CoeffFn>,
    a_p: Option<CoeffFn>,
    f_u: Option<CoeffFn>,
    f_p: Option<CoeffFn>,
    /// Limiting diffusion outside large balls.
    pub a_inf: f64,
    /// Certified `sup |f|`; infinite for cut-off specs.
    pub f_bound: f64,
    /// Declared lower bound of `a`.
    pub epsilon: f64,
    /// `Some(v)` when `a` is identically `v`.
    pub constant_diffusion: Option<f64>,
    /// Whether `a` or `f` read `||u||`.
    pub uses_norm: bool,
    /// Radius `R` when built by [`build_cutoff`].
    pub cutoff_radius: Option<f64>,
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSpec")
            .field("name", &self.name)
            .field("b", &self.b)
            .field("a_inf", &self.a_inf)
            .field("f_bound", &self.f_bound)
            .field("epsilon", &self.epsilon)
            .field("constant_diffusion", &self.constant_diffusion)
            .field("uses_norm", &self.uses_norm)
            .field("cutoff_radius", &self.cutoff_radius)
            .finish()
    }
}

/// Builder for [`CoefficientSpec`]; validation happens in [`Self::build`].
pub struct SpecBuilder {
    spec: CoefficientSpec,
}

impl SpecBuilder {
    pub fn partials(
        mut self,
        a_u: Option<CoeffFn>,
        a_p: Option<CoeffFn>,
        f_u: Option<CoeffFn>,
        f_p: Option<CoeffFn>,
    ) -> Self {
        self.spec.a_u = a_u;
        self.spec.a_p = a_p;
        self.spec.f_u = f_u;
        self.spec.f_p = f_p;
        self
    }

    pub fn a_inf(mut self, a_inf: f64) -> Self {
        self.spec.a_inf = a_inf;
        self
    }

    pub fn f_bound(mut self, f_bound: f64) -> Self {
        self.spec.f_bound = f_bound;
        self
    }

    pub fn epsilon(mut self, eps: f64) -> Self {
        self.spec.epsilon = eps;
        self
    }

    pub fn constant_diffusion(mut self, v: f64) -> Self {
        self.spec.constant_diffusion = Some(v);
        self
    }

    pub fn uses_norm(mut self, yes: bool) -> Self {
        self.spec.uses_norm = yes;
        self
    }

    pub fn build(self) -> Result<CoefficientSpec> {
        self.spec.validate()?;
        Ok(self.spec)
    }
}

impl CoefficientSpec {
    pub fn builder(name: impl Into<String>, a: CoeffFn, f: CoeffFn, b: f64) -> SpecBuilder {
        SpecBuilder {
            spec: CoefficientSpec {
                name: name.into(),
                a,
                f,
                b,
                a_u: None,
                a_p: None,
                f_u: None,
                f_p: None,
                a_inf: 1.0,
                f_bound: 0.0,
                epsilon: 1e-3,
                constant_diffusion: None,
                uses_norm: false,
                cutoff_radius: None,
            },
        }
    }

    /// `a == a_inf`, `f == 0`.
    pub fn linear(b: f64, a_inf: f64) -> Result<Self> {
        Self::builder("linear", Arc::new(move |_| a_inf), Arc::new(|_| 0.0), b)
            .partials(Some(zero()), Some(zero()), Some(zero()), Some(zero()))
            .a_inf(a_inf)
            .f_bound(0.0)
            .epsilon(a_inf)
            .constant_diffusion(a_inf)
            .build()
    }

    /// `a == a_inf`, `f = -c tanh(u)`.
    pub fn tanh_reaction(b: f64, c: f64, a_inf: f64) -> Result<Self> {
        Self::builder(
            "tanh-reaction",
            Arc::new(move |_| a_inf),
            Arc::new(move |pt| -c * pt.u.tanh()),
            b,
        )
        .partials(
            Some(zero()),
            Some(zero()),
            Some(Arc::new(move |pt| {
                let s = 1.0 / pt.u.cosh();
                -c * s * s
            })),
            Some(zero()),
        )
        .a_inf(a_inf)
        .f_bound(c.abs())
        .epsilon(a_inf)
        .constant_diffusion(a_inf)
        .build()
    }

    /// `a = a_inf (2/pi) atan(||u|| + 1)`, `f = -c tanh(u)`.
    ///
    /// The `2/pi` factor makes `a -> a_inf` as `||u|| -> infinity`.
    pub fn arctan_diffusion(b: f64, a_inf: f64, c: f64) -> Result<Self> {
        let scale = a_inf * 2.0 / PI;
        Self::builder(
            "arctan-diffusion",
            Arc::new(move |pt| scale * (pt.norm + 1.0).atan()),
            Arc::new(move |pt| -c * pt.u.tanh()),
            b,
        )
        .partials(
            Some(zero()),
            Some(zero()),
            Some(Arc::new(move |pt| {
                let s = 1.0 / pt.u.cosh();
                -c * s * s
            })),
            Some(zero()),
        )
        .a_inf(a_inf)
        .f_bound(c.abs())
        .epsilon(0.5 * a_inf)
        .uses_norm(true)
        .build()
    }

    /// `a = a_inf + (sin ||u|| + c) / (||u|| + 1)` with `c > 1`, `f = -r tanh(u)`.
    pub fn oscillating_diffusion(b: f64, a_inf: f64, c: f64, r: f64) -> Result<Self> {
        if c <= 1.0 {
            return Err(Error::CoefficientViolation(format!(
                "oscillating-diffusion needs c > 1, got {c}"
            )));
        }
        Self::builder(
            "oscillating-diffusion",
            Arc::new(move |pt| a_inf + (pt.norm.sin() + c) / (pt.norm + 1.0)),
            Arc::new(move |pt| -r * pt.u.tanh()),
            b,
        )
        .partials(
            Some(zero()),
            Some(zero()),
            Some(Arc::new(move |pt| {
                let s = 1.0 / pt.u.cosh();
                -r * s * s
            })),
            Some(zero()),
        )
        .a_inf(a_inf)
        .f_bound(r.abs())
        .epsilon(a_inf)
        .uses_norm(true)
        .build()
    }

    /// Coefficients from inline expressions over `x, u, p, norm`.
    pub fn from_expressions(
        a: &str,
        f: &str,
        b: f64,
        a_inf: f64,
        f_bound: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let a_expr = Expr::parse(a)?;
        let f_expr = Expr::parse(f)?;
        let uses_norm = a_expr.uses_norm() || f_expr.uses_norm();
        let constant = if a_expr.uses_u() || a_expr.uses_p() || a_expr.uses_norm() {
            None
        } else {
            Some(a_expr.eval(&Point::default()))
        };
        let mut builder = Self::builder(
            format!("a={a}; f={f}"),
            Arc::new(move |pt| a_expr.eval(pt)),
            Arc::new(move |pt| f_expr.eval(pt)),
            b,
        )
        .a_inf(a_inf)
        .f_bound(f_bound)
        .epsilon(epsilon)
        .uses_norm(uses_norm);
        if let Some(v) = constant {
            builder = builder
                .constant_diffusion(v)
                .partials(Some(zero()), Some(zero()), None, None);
        }
        builder.build()
    }

    fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::CoefficientViolation(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        if !(self.a_inf > 0.0) {
            return Err(Error::CoefficientViolation(format!(
                "a_inf must be positive, got {}",
                self.a_inf
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::CoefficientViolation(format!(
                "parabolicity bound must be positive, got {}",
                self.epsilon
            )));
        }
        let check_f = self.f_bound.is_finite();
        for &x in &PROBE_X {
            for &u in &PROBE_U {
                for &p in &PROBE_U {
                    for &norm in &PROBE_NORM {
                        let pt = Point { x, u, p, norm };
                        let a = self.a(&pt);
                        if !(a >= self.epsilon * (1.0 - 1e-12)) {
                            return Err(Error::CoefficientViolation(format!(
                                "a({x}, {u}, {p}; ||u||={norm}) = {a} below parabolicity bound {}",
                                self.epsilon
                            )));
                        }
                        let f = self.f(&pt);
                        if !f.is_finite() || (check_f && f.abs() > self.f_bound * (1.0 + 1e-12)) {
                            return Err(Error::CoefficientViolation(format!(
                                "|f({x}, {u}, {p}; ||u||={norm})| = {} exceeds declared bound {}",
                                f.abs(),
                                self.f_bound
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn a(&self, pt: &Point) -> f64 {
        (self.a)(pt)
    }

    #[inline]
    pub fn f(&self, pt: &Point) -> f64 {
        (self.f)(pt)
    }

    pub fn a_u(&self, pt: &Point) -> f64 {
        partial(&self.a_u, &self.a, pt, |q, h| q.u += h)
    }

    pub fn a_p(&self, pt: &Point) -> f64 {
        partial(&self.a_p, &self.a, pt, |q, h| q.p += h)
    }

    pub fn f_u(&self, pt: &Point) -> f64 {
        partial(&self.f_u, &self.f, pt, |q, h| q.u += h)
    }

    pub fn f_p(&self, pt: &Point) -> f64 {
        partial(&self.f_p, &self.f, pt, |q, h| q.p += h)
    }

    /// `N_inf = floor(sqrt(b / a_inf))`.
    pub fn n_infinity(&self) -> usize {
        n_infinity(self.a_inf, self.b)
    }

    pub fn is_cutoff(&self) -> bool {
        self.cutoff_radius.is_some()
    }
}

fn zero() -> CoeffFn {
    Arc::new(|_| 0.0)
}

fn partial(
    exact: &Option<CoeffFn>,
    base: &CoeffFn,
    pt: &Point,
    shift: impl Fn(&mut Point, f64),
) -> f64 {
    if let Some(g) = exact {
        return g(pt);
    }
    let h = FD_PARTIAL_STEP;
    let mut plus = *pt;
    shift(&mut plus, h);
    let mut minus = *pt;
    shift(&mut minus, -h);
    (base(&plus) - base(&minus)) / (2.0 * h)
}

/// `floor(sqrt(b / a_inf))`, with exact squares resolved without rounding.
pub fn n_infinity(a_inf: f64, b: f64) -> usize {
    let ratio = b / a_inf;
    let mut n = ratio.sqrt().floor() as usize;
    while ((n + 1) * (n + 1)) as f64 * a_inf <= b {
        n += 1;
    }
    while n > 0 && (n * n) as f64 * a_inf > b {
        n -= 1;
    }
    n
}

/// Quintic smoothstep `6r^5 - 15r^4 + 10r^3` on `[0, 1]`, clamped outside.
#[inline]
pub fn smoothstep(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    r * r * r * (r * (6.0 * r - 15.0) + 10.0)
}

/// Dissipative modification: keeps `f` where `max(|u|, |u_x|) <= R`, replaces
/// the reaction by `F = -(1 + b) u` beyond `R + 1` so that `b u + F = -u`
/// there, and blends with [`smoothstep`] in between. The diffusion is kept.
pub fn build_cutoff(spec: &CoefficientSpec, radius: f64) -> Result<CoefficientSpec> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cut-off radius must be positive, got {radius}"
        )));
    }
    let f = spec.f.clone();
    let b = spec.b;
    let reaction: CoeffFn = Arc::new(move |pt| {
        let r = pt.u.abs().max(pt.p.abs()) - radius;
        if r <= 0.0 {
            f(pt)
        } else if r >= 1.0 {
            -(1.0 + b) * pt.u
        } else {
            let s = smoothstep(r);
            (1.0 - s) * f(pt) - s * (1.0 + b) * pt.u
        }
    });
    let mut out = spec.clone();
    out.name = format!("{} (cut-off R={radius})", spec.name);
    out.f = reaction;
    out.f_u = None;
    out.f_p = None;
    out.f_bound = f64::INFINITY;
    out.cutoff_radius = Some(radius);
    out.validate()?;
    Ok(out)
}
