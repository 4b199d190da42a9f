//! Scenario files: a strict JSON schema that selects coefficients, numerics,
//! initial data and outputs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attractor::Scenario;
use crate::coeff::{build_cutoff, CoefficientSpec};
use crate::equilibria::EquilibriumSearch;
use crate::error::{Error, Result};
use crate::field::{self, SpatialGrid, StateField};
use crate::infinity::SphereSettings;
use crate::integrator::StepController;

/// Seed used when neither the file nor the command line gives one.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: field::DEFAULT_POINTS }
    }
}

/// Either a named preset or inline `a` / `f` expressions over `x, u, p, norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffConfig {
    pub preset: Option<String>,
    pub a: Option<String>,
    pub f: Option<String>,
    pub b: f64,
    #[serde(default = "one")]
    pub a_inf: f64,
    /// Reaction amplitude of `tanh-reaction` and `arctan-diffusion`, offset
    /// `c > 1` of `oscillating-diffusion`.
    pub c: Option<f64>,
    /// Reaction amplitude of `oscillating-diffusion`.
    pub r: Option<f64>,
    /// Declared `sup |f|` for inline expressions.
    pub f_bound: Option<f64>,
    /// Parabolicity bound for inline expressions (default `a_inf`).
    pub epsilon: Option<f64>,
    /// Applies the dissipative cut-off at this radius.
    pub cutoff_radius: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl CoeffConfig {
    pub fn build(&self) -> Result<CoefficientSpec> {
        let spec = match (&self.preset, &self.a, &self.f) {
            (Some(p), None, None) => match p.as_str() {
                "linear" => CoefficientSpec::linear(self.b, self.a_inf)?,
                "tanh-reaction" => CoefficientSpec::tanh_reaction(self.b, self.c.unwrap_or(1.0), self.a_inf)?,
                "arctan-diffusion" => CoefficientSpec::arctan_diffusion(self.b, self.a_inf, self.c.unwrap_or(1.0))?,
                "oscillating-diffusion" => CoefficientSpec::oscillating_diffusion(
                    self.b,
                    self.a_inf,
                    self.c.unwrap_or(2.0),
                    self.r.unwrap_or(1.0),
                )?,
                other => {
                    return Err(Error::Config(format!(
                        "coeff.preset: unknown preset `{other}`, expected one of linear, tanh-reaction, arctan-diffusion, oscillating-diffusion"
                    )))
                }
            },
            (None, Some(a), Some(f)) => {
                let f_bound = self
                    .f_bound
                    .ok_or_else(|| Error::Config("coeff.f_bound is required with inline expressions".into()))?;
                CoefficientSpec::from_expressions(a, f, self.b, self.a_inf, f_bound, self.epsilon.unwrap_or(self.a_inf))?
            }
            _ => {
                return Err(Error::Config(
                    "coeff: give either `preset` or both `a` and `f`".into(),
                ))
            }
        };
        match self.cutoff_radius {
            Some(r) => build_cutoff(&spec, r),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub eta_min: f64,
    pub eta_max: f64,
    #[serde(default = "default_scan_n")]
    pub scan_n: usize,
}

fn default_scan_n() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_max: f64,
    pub growup_threshold: f64,
    pub rtol: f64,
    pub atol: f64,
    pub convergence_tol: f64,
    pub record_interval: Option<f64>,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        let c = StepController::default();
        Self {
            dt_init: c.dt_init,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            t_max: c.t_max,
            growup_threshold: c.growup_norm_threshold,
            rtol: c.rtol,
            atol: c.atol,
            convergence_tol: c.convergence_tol,
            record_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub modes: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { modes: 8 }
    }
}

/// Initial datum: explicit mode amplitudes, or a seeded random combination of
/// the first `random_modes` modes with amplitudes decaying like `1/(1+j)^decay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `[j, amplitude]` pairs.
    pub modes: Vec<(usize, f64)>,
    pub random_modes: usize,
    pub amplitude: f64,
    pub decay: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            modes: Vec::new(),
            random_modes: 8,
            amplitude: 1e-2,
            decay: 1.0,
        }
    }
}

impl InitialConfig {
    pub fn build(&self, grid: SpatialGrid, seed: u64) -> Result<StateField> {
        if !self.modes.is_empty() {
            let top = self.modes.iter().map(|m| m.0).max().unwrap();
            if top >= grid.len() {
                return Err(Error::Config(format!(
                    "initial.modes: mode {top} exceeds the grid ({} points)",
                    grid.len()
                )));
            }
            return Ok(StateField::from_modes(grid, &self.modes));
        }
        Ok(random_field(grid, self.random_modes, self.amplitude, self.decay, seed))
    }
}

/// Seeded random combination `sum_j amplitude * g_j / (1 + j)^decay * phi_j`
/// with `g_j` uniform in `[-1, 1]`.
pub fn random_field(grid: SpatialGrid, modes: usize, amplitude: f64, decay: f64, seed: u64) -> StateField {
    let c: Vec<(usize, f64)> = random_coefficients(modes.min(grid.len()), decay, seed)
        .into_iter()
        .enumerate()
        .map(|(j, v)| (j, amplitude * v))
        .collect();
    StateField::from_modes(grid, &c)
}

/// Seeded mode coefficients `g_j / (1 + j)^decay`, `g_j` uniform in `[-1, 1]`.
pub fn random_coefficients(modes: usize, decay: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..modes)
        .map(|j| rng.random_range(-1.0..=1.0) / (1.0 + j as f64).powf(decay))
        .collect()
}

/// Seeded unit vector of mode coefficients for the sphere flow.
pub fn random_unit_coefficients(modes: usize, decay: f64, seed: u64) -> Vec<f64> {
    let mut c = random_coefficients(modes, decay, seed);
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        c[0] = 1.0;
        return c;
    }
    c.iter_mut().for_each(|v| *v /= n);
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub eps: f64,
    pub scales: usize,
    pub check_blocking: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            scales: 8,
            check_blocking: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereConfig {
    pub modes: usize,
    pub decay: f64,
    pub dt: f64,
    pub t_max: f64,
    pub limit_tol: f64,
    pub record_every: usize,
}

impl Default for SphereConfig {
    fn default() -> Self {
        let s = SphereSettings::default();
        Self {
            modes: crate::infinity::SPHERE_MODES,
            decay: 1.0,
            dt: s.dt,
            t_max: s.t_max,
            limit_tol: s.limit_tol,
            record_every: s.record_every,
        }
    }
}

impl SphereConfig {
    pub fn settings(&self) -> SphereSettings {
        SphereSettings {
            dt: self.dt,
            t_max: self.t_max,
            limit_tol: self.limit_tol,
            record_every: self.record_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YmapConfig {
    /// Equilibrium id (ascending `u(0)` order) used as reference.
    pub reference: usize,
    /// Zero budget; defaults to `z(u(0) - e)`.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub b: Vec<f64>,
    /// Also verify the predicted edges by simulation.
    pub verify: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// One scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub coeff: CoeffConfig,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub integrate: IntegrateConfig,
    #[serde(default)]
    pub track: TrackConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sphere: SphereConfig,
    #[serde(default)]
    pub ymap: YmapConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if self.grid.n < field::MIN_POINTS || self.grid.n % 2 == 0 {
            return bad("grid.n", &format!("must be odd and at least {}", field::MIN_POINTS));
        }
        if !(self.coeff.b > 0.0 && self.coeff.b.is_finite()) {
            return bad("coeff.b", "must be positive and finite");
        }
        if !(self.coeff.a_inf > 0.0 && self.coeff.a_inf.is_finite()) {
            return bad("coeff.a_inf", "must be positive and finite");
        }
        if let Some(s) = &self.scan {
            if !(s.eta_min < s.eta_max) || !s.eta_min.is_finite() || !s.eta_max.is_finite() {
                return bad("scan", "need finite eta_min < eta_max");
            }
            if s.scan_n < 2 {
                return bad("scan.scan_n", "must be at least 2");
            }
        }
        if self.track.modes == 0 || self.track.modes > self.grid.n {
            return bad("track.modes", "must lie in 1..=grid.n");
        }
        if !(self.verify.eps > 0.0) || self.verify.scales == 0 {
            return bad("verify", "eps must be positive and scales at least 1");
        }
        if self.sphere.modes == 0 || self.sphere.modes > self.grid.n {
            return bad("sphere.modes", "must lie in 1..=grid.n");
        }
        if !(self.sphere.dt > 0.0 && self.sphere.t_max > 0.0 && self.sphere.limit_tol > 0.0) {
            return bad("sphere", "dt, t_max and limit_tol must be positive");
        }
        if self.sweep.b.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad("sweep.b", "values must be positive and finite");
        }
        self.controller()
            .validate()
            .map_err(|e| Error::Config(format!("integrate: {e}")))?;
        Ok(())
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::new(self.grid.n).expect("validated grid size")
    }

    pub fn coefficients(&self) -> Result<CoefficientSpec> {
        self.coeff.build()
    }

    pub fn controller(&self) -> StepController {
        let i = &self.integrate;
        StepController {
            dt_init: i.dt_init,
            dt_min: i.dt_min,
            dt_max: i.dt_max,
            t_max: i.t_max,
            growup_norm_threshold: i.growup_threshold,
            rtol: i.rtol,
            atol: i.atol,
            convergence_tol: i.convergence_tol,
            record_interval: i.record_interval,
            escape_radius: self.coeff.cutoff_radius,
            track_modes: self.track.modes,
            ..StepController::default()
        }
    }

    /// Explicit scan range, or the covering range of the coefficients.
    pub fn search(&self, c: &CoefficientSpec) -> EquilibriumSearch {
        let base = match &self.scan {
            Some(s) => EquilibriumSearch {
                eta_min: s.eta_min,
                eta_max: s.eta_max,
                scan_n: s.scan_n,
                ..EquilibriumSearch::default()
            },
            None => EquilibriumSearch::covering(c),
        };
        EquilibriumSearch {
            n_points: self.grid.n,
            ..base
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let coeff = self.coefficients()?;
        let search = self.search(&coeff);
        Ok(Scenario {
            search,
            ctrl: self.controller(),
            eps: self.verify.eps,
            scales: self.verify.scales,
            check_blocking: self.verify.check_blocking,
            coeff,
        })
    }

    /// Seeds in effect: the override, else the file's list, else [`DEFAULT_SEED`].
    pub fn seeds(&self, overridden: Option<u64>) -> Vec<u64> {
        match overridden {
            Some(s) => vec![s],
            None if self.seeds.is_empty() => vec![DEFAULT_SEED],
            None => self.seeds.clone(),
        }
    }

    /// Copy with `coeff.b` replaced.
    pub fn with_b(&self, b: f64) -> Self {
        let mut c = self.clone();
        c.coeff.b = b;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = ScenarioConfig::from_json(r#"{"coeff": {"preset": "linear", "b": 0.5}}"#).unwrap();
        assert_eq!(c.grid.n, 257);
        assert_eq!(c.seeds(None), vec![0]);
        assert_eq!(c.seeds(Some(9)), vec![9]);
        let spec = c.coefficients().unwrap();
        assert_eq!(spec.b, 0.5);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ScenarioConfig::from_json(r#"{"coeff": {"preset": "linear", "b": 0.5}, "integrat": {}}"#).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.contains("integrat")), "{e}");
        let e = ScenarioConfig::from_json(r#"{"coeff": {"preset": "linear", "b": 0.5, "bb": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("bb"));
        let e = ScenarioConfig::from_json(r#"{"coeff": {"preset": "linear", "b": 0.5}, "sphere": {"dtt": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("dtt"));
        let c = ScenarioConfig::from_json(r#"{"coeff": {"preset": "linear", "b": 0.5}, "sphere": {"dt": 0.5}}"#).unwrap();
        assert_eq!(c.sphere.settings().dt, 0.5);
    }

    #[test]
    fn ranges_checked() {
        for bad in [
            r#"{"coeff": {"preset": "linear", "b": -1}}"#,
            r#"{"grid": {"n": 100}, "coeff": {"preset": "linear", "b": 1}}"#,
            r#"{"coeff": {"preset": "linear", "b": 1}, "scan": {"eta_min": 1, "eta_max": 0}}"#,
            r#"{"coeff": {"preset": "linear", "b": 1}, "integrate": {"dt_min": 1, "dt_max": 0.1}}"#,
        ] {
            assert!(matches!(ScenarioConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn presets_and_expressions() {
        let c = ScenarioConfig::from_json(r#"{"coeff": {"preset": "tanh-reaction", "b": 0.5, "c": 1, "cutoff_radius": 4}}"#).unwrap();
        let spec = c.coefficients().unwrap();
        assert_eq!(spec.cutoff_radius, Some(4.0));
        assert_eq!(c.controller().escape_radius, Some(4.0));
        let c = ScenarioConfig::from_json(
            r#"{"coeff": {"a": "1 + 1/(1 + norm^2)", "f": "-tanh(u)", "b": 5, "f_bound": 1}}"#,
        )
        .unwrap();
        assert!(c.coefficients().unwrap().uses_norm);
        let c = ScenarioConfig::from_json(r#"{"coeff": {"preset": "quadratic", "b": 1}}"#).unwrap();
        assert!(matches!(c.coefficients(), Err(Error::Config(_))));
    }

    #[test]
    fn random_data_is_seeded() {
        let g = SpatialGrid::default();
        let a = random_field(g, 8, 1.0, 1.0, 3);
        let b = random_field(g, 8, 1.0, 1.0, 3);
        let c = random_field(g, 8, 1.0, 1.0, 4);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        let u = random_unit_coefficients(32, 1.0, 5);
        assert!((u.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
