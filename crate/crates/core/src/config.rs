//! Scenario configuration: a versioned JSON document validated before any
//! computation starts.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticOptions;
use crate::error::{Error, Result};
use crate::ma_solver::SolverOptions;
use crate::model::FibrationModel;

pub const SCHEMA: &str = "collapselab/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Flat product over the periodic base torus.
    A,
    /// Collapsing local model over the Dirichlet square.
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nodes per real base axis.
    pub base: Vec<usize>,
    /// Nodes per real fiber axis.
    pub fiber: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
    /// Slope of `Z(y) = i + epsilon y` (family B only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<Vec<f64>>,
    /// Fiber-dependent term of the family B reference form.
    #[serde(default = "yes")]
    pub perturbation: bool,
}

fn two() -> usize {
    2
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

pub const DEFAULT_EPSILON: f64 = 0.3;

impl ModelConfig {
    pub fn family_a(base: usize, fiber: usize) -> Self {
        ModelConfig { family: Family::A, n: 2, m: 1, epsilon: None, grid: GridSpec { base: vec![base; 2], fiber: vec![fiber; 2] }, polarization: None, perturbation: true }
    }

    pub fn family_b(epsilon: f64, base: usize, fiber: usize) -> Self {
        ModelConfig { family: Family::B, n: 2, m: 1, epsilon: Some(epsilon), grid: GridSpec { base: vec![base; 2], fiber: vec![fiber; 2] }, polarization: None, perturbation: true }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.n, self.m) != (2, 1) {
            return Err(Error::Config(format!("the built-in families have n = 2, m = 1, got n = {}, m = {}", self.n, self.m)));
        }
        if self.grid.base.len() != 2 * self.m || self.grid.fiber.len() != 2 * (self.n - self.m) {
            return Err(Error::Config("grid.base needs 2m entries and grid.fiber 2(n-m)".into()));
        }
        if self.grid.base.iter().chain(&self.grid.fiber).any(|&k| k < 4) {
            return Err(Error::Config("grid sizes must be at least 4".into()));
        }
        if self.family == Family::A && self.epsilon.is_some() {
            return Err(Error::Config("epsilon applies to family b only".into()));
        }
        if let Some(p) = &self.polarization {
            if p.len() != self.n - self.m || p.iter().any(|d| !(*d > 0.0)) {
                return Err(Error::Config("polarization needs n-m positive entries".into()));
            }
        }
        self.build().validate()
    }

    pub fn build(&self) -> FibrationModel {
        let (b, f) = (self.grid.base[0], self.grid.fiber[0]);
        let mut model = match self.family {
            Family::A => FibrationModel::family_a(b, f),
            Family::B => FibrationModel::family_b(self.epsilon.unwrap_or(DEFAULT_EPSILON), b, f, self.perturbation.then(FibrationModel::default_perturbation)),
        };
        model.base_shape.clone_from(&self.grid.base);
        model.fiber_shape.clone_from(&self.grid.fiber);
        if let Some(p) = &self.polarization {
            model.polarization.clone_from(p);
        }
        model
    }

    /// Same family and parameters on other grid sizes.
    pub fn resized(&self, base_n: usize, fiber_n: usize) -> Self {
        let mut out = self.clone();
        out.grid = GridSpec { base: vec![base_n; 2 * self.m], fiber: vec![fiber_n; 2 * (self.n - self.m)] };
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub n_planes: usize,
    pub seed: u64,
    /// Base node for single-fiber diagnostics; the node nearest the center if absent.
    pub probe: Option<usize>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let d = DiagnosticOptions::default();
        DiagnosticsConfig { n_planes: d.n_planes, seed: d.seed, probe: d.probe }
    }
}

impl DiagnosticsConfig {
    pub fn options(&self) -> DiagnosticOptions {
        DiagnosticOptions { n_planes: self.n_planes, seed: self.seed, probe: self.probe }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeConfig {
    pub base: usize,
    pub fiber: usize,
    pub radii: Vec<f64>,
    pub reference_radius: f64,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        VolumeConfig { base: 64, fiber: 8, radii: vec![0.3, 0.35], reference_radius: 0.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GhConfig {
    pub stencil_order: u8,
    /// Base nodes within this Euclidean distance of the probe form the sample.
    pub sample_radius: f64,
    pub volume: Option<VolumeConfig>,
}

impl Default for GhConfig {
    fn default() -> Self {
        GhConfig { stencil_order: 2, sample_radius: 0.4, volume: Some(VolumeConfig::default()) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MirrorConfig {
    /// Copies of `U` in the sweep lattices `U^3 + <-2>^k`.
    pub k_values: Vec<usize>,
    pub samples: usize,
    /// Path classes on `U + U` with `E = e1`, `sigma = e1 + f1`.
    pub omega: Vec<i64>,
    pub omega_check: Vec<i64>,
    /// `s0` as `[numerator, denominator]`.
    pub s0: [i64; 2],
    /// Each `[a, b]` gives the path parameter `t = a^2 / (b^2 - a^2)`.
    pub path: Vec<[i64; 2]>,
    /// User lattice and classes mapped by the float backend.
    pub lattice: Option<LatticeInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeInput {
    /// Integral symmetric Gram matrix, row by row.
    pub gram: Vec<Vec<i64>>,
    pub e: Vec<i64>,
    pub sigma: Vec<i64>,
    pub alpha: Vec<ClassInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassInput {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Default for LatticeInput {
    /// `U + U` with `E = e1`, `sigma = e1 + f1`, basis order `e1, f1, e2, f2`.
    fn default() -> Self {
        LatticeInput {
            gram: vec![vec![0, 1, 0, 0], vec![1, 0, 0, 0], vec![0, 0, 0, 1], vec![0, 0, 1, 0]],
            e: vec![1, 0, 0, 0],
            sigma: vec![1, 1, 0, 0],
            alpha: vec![
                ClassInput { re: vec![0.0; 4], im: vec![0.0, 0.0, 1.0, 1.0] },
                ClassInput { re: vec![0.0, 0.0, 1.0, 0.0], im: vec![0.0, 0.0, 1.0, 1.0] },
            ],
        }
    }
}

impl LatticeInput {
    fn validate(&self) -> Result<()> {
        let n = self.gram.len();
        let square = self.gram.iter().all(|r| r.len() == n);
        let sized = self.e.len() == n && self.sigma.len() == n && self.alpha.iter().all(|a| a.re.len() == n && a.im.len() == n);
        if n == 0 || !square || !sized {
            return Err(Error::Config("mirror.lattice: gram must be square and e, sigma, alpha must match its size".into()));
        }
        if (0..n).any(|i| (0..n).any(|j| self.gram[i][j] != self.gram[j][i])) {
            return Err(Error::Config("mirror.lattice: gram must be symmetric".into()));
        }
        if self.alpha.iter().flat_map(|a| a.re.iter().chain(&a.im)).any(|v| !v.is_finite()) {
            return Err(Error::Config("mirror.lattice: alpha entries must be finite".into()));
        }
        Ok(())
    }
}

impl Default for MirrorConfig {
    fn default() -> Self {
        MirrorConfig { k_values: vec![0, 1, 5, 19], samples: 1000, omega: vec![0, 0, 1, 1], omega_check: vec![0, 0, 1, 1], s0: [1, 1], path: vec![[1, 2], [2, 3], [3, 4], [3, 5], [1, 7]], lattice: Some(LatticeInput::default()) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Criterion numbers to run; all when absent.
    pub criteria: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub model: ModelConfig,
    #[serde(default = "default_schedule")]
    pub t_schedule: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub gh: GhConfig,
    #[serde(default)]
    pub mirror: MirrorConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
}

pub fn default_schedule() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_model(model: ModelConfig) -> Self {
        ScenarioConfig {
            schema: SCHEMA.into(),
            model,
            t_schedule: default_schedule(),
            solver: SolverOptions { tol: 1e-11, ..Default::default() },
            diagnostics: DiagnosticsConfig::default(),
            gh: GhConfig::default(),
            mirror: MirrorConfig::default(),
            verify: VerifyConfig::default(),
            seed: 0,
            out: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!("schema must be \"{SCHEMA}\", got \"{}\"", self.schema)));
        }
        if let Some(t) = self.t_schedule.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("t_schedule entries must lie in (0, 1], got {t}")));
        }
        if self.t_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("t_schedule must be strictly decreasing".into()));
        }
        self.solver.validate()?;
        self.model.validate()?;
        if self.diagnostics.n_planes == 0 {
            return Err(Error::Config("diagnostics.n_planes must be positive".into()));
        }
        if !matches!(self.gh.stencil_order, 1 | 2) || !(self.gh.sample_radius > 0.0) {
            return Err(Error::Config("gh.stencil_order must be 1 or 2 and gh.sample_radius positive".into()));
        }
        if let Some(v) = &self.gh.volume {
            if v.radii.iter().any(|r| !(*r > 0.0)) || !(v.reference_radius > 0.0) || v.base < 16 || v.fiber < 4 {
                return Err(Error::Config("gh.volume needs positive radii and grids of at least 16 base / 4 fiber nodes".into()));
            }
        }
        let m = &self.mirror;
        if m.omega.len() != 4 || m.omega_check.len() != 4 || m.s0[0] <= 0 || m.s0[1] <= 0 || m.path.iter().any(|p| !(0 < p[0] && p[0] < p[1])) {
            return Err(Error::Config("mirror: omega/omega_check need 4 entries, s0 > 0 and path pairs 0 < a < b".into()));
        }
        if let Some(l) = &m.lattice {
            l.validate()?;
        }
        if let Some(c) = &self.verify.criteria {
            if c.iter().any(|k| !(1..=7).contains(k)) {
                return Err(Error::Config("verify.criteria entries must be in 1..=7".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::parse(r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}}"#).unwrap();
        assert_eq!(cfg.t_schedule, default_schedule());
        assert_eq!(cfg.solver, SolverOptions::default());
        let again = ScenarioConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = [
            r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "extra": 1}"#,
            r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}, "epsilon": 0.1}}"#,
            r#"{"schema": "collapselab/v1", "model": {"family": "b", "grid": {"base": [16, 16], "fiber": [8, 8]}}, "solver": {"tolerance": 1e-9}}"#,
            r#"{"schema": "collapselab/v2", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}}"#,
            r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "t_schedule": [0.5, -0.1]}"#,
            r#"{"schema": "collapselab/v1", "model": {"family": "a", "grid": {"base": [8, 8], "fiber": [8, 8]}}, "t_schedule": [0.1, 0.2]}"#,
            r#"{"schema": "collapselab/v1", "model": {"family": "c", "base": 8, "fiber": 8}}"#,
        ];
        for b in bad {
            assert!(matches!(ScenarioConfig::parse(b), Err(Error::Config(_))), "{b}");
        }
    }
}
