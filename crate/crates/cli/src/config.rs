//! JSON run configuration: parsing, defaults, validation and the canonical hash.

use std::fmt;
use std::path::{Path, PathBuf};

use roughshe::coefficients::DeclaredConstants;
use roughshe::she::Observable;
use roughshe::skeleton::{DEFAULT_LADDER, DEFAULT_MAX_ITER, DEFAULT_TOL};
use roughshe::{HParams, SigmaSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Configuration problem, with the 1-based line it points at when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), line: None }
    }

    fn at(mut self, line: Option<usize>) -> Self {
        self.line = line;
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "GridBlock::default_half_width")]
    pub half_width: f64,
    #[serde(default = "GridBlock::default_n_points")]
    pub n_points: usize,
    #[serde(default = "GridBlock::default_horizon")]
    pub horizon: f64,
    #[serde(default = "GridBlock::default_n_steps")]
    pub n_steps: usize,
}

impl GridBlock {
    fn default_half_width() -> f64 {
        8.0
    }
    fn default_n_points() -> usize {
        256
    }
    fn default_horizon() -> f64 {
        1.0
    }
    fn default_n_steps() -> usize {
        50
    }
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            half_width: Self::default_half_width(),
            n_points: Self::default_n_points(),
            horizon: Self::default_horizon(),
            n_steps: Self::default_n_steps(),
        }
    }
}

/// Diffusion coefficient as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaBlock {
    Constant {
        c: f64,
        #[serde(default)]
        constants: Option<DeclaredConstants>,
    },
    Affine {
        a: f64,
        b: f64,
        #[serde(default)]
        constants: Option<DeclaredConstants>,
    },
    Smooth {
        offset: f64,
        amplitude: f64,
        scale: f64,
        #[serde(default)]
        constants: Option<DeclaredConstants>,
    },
    /// `σ = coefficient·u^exponent`; useful to see the validator reject growth.
    Power {
        coefficient: f64,
        exponent: f64,
        #[serde(default)]
        constants: Option<DeclaredConstants>,
    },
}

impl SigmaBlock {
    pub fn to_spec(&self) -> SigmaSpec {
        let (mut spec, constants) = match self {
            Self::Constant { c, constants } => (SigmaSpec::constant(*c), constants),
            Self::Affine { a, b, constants } => (SigmaSpec::affine(*a, *b), constants),
            Self::Smooth { offset, amplitude, scale, constants } => (SigmaSpec::smooth(*offset, *amplitude, *scale), constants),
            Self::Power { coefficient, exponent, constants } => {
                let (c, p) = (*coefficient, *exponent);
                let spec = SigmaSpec::custom(
                    format!("{c}·u^{p}"),
                    move |_, _, u| c * u.powf(p),
                    DeclaredConstants::uniform(c.abs().max(1.0), 601.0),
                );
                (spec, constants)
            }
        };
        if let Some(c) = constants {
            spec.constants = *c;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub hurst: f64,
    #[serde(default)]
    pub sigma: Option<SigmaBlock>,
    #[serde(default = "ModelBlock::default_eps")]
    pub eps: f64,
    #[serde(default = "ModelBlock::default_ladder")]
    pub ladder: Vec<f64>,
}

impl ModelBlock {
    fn default_eps() -> f64 {
        0.1
    }
    fn default_ladder() -> Vec<f64> {
        vec![0.2, 0.1, 0.05, 0.025]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "SolverBlock::default_tol")]
    pub picard_tol: f64,
    #[serde(default = "SolverBlock::default_max_iter")]
    pub max_iter: usize,
    /// Mollification ladder of the skeleton solver.
    #[serde(default = "SolverBlock::default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "SolverBlock::default_violation_tol")]
    pub violation_tol: f64,
    #[serde(default = "SolverBlock::default_random_starts")]
    pub random_starts: usize,
}

impl SolverBlock {
    fn default_tol() -> f64 {
        DEFAULT_TOL
    }
    fn default_max_iter() -> usize {
        DEFAULT_MAX_ITER
    }
    fn default_ladder() -> Vec<f64> {
        DEFAULT_LADDER.to_vec()
    }
    fn default_violation_tol() -> f64 {
        1e-4
    }
    fn default_random_starts() -> usize {
        2
    }
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            picard_tol: Self::default_tol(),
            max_iter: Self::default_max_iter(),
            ladder: Self::default_ladder(),
            violation_tol: Self::default_violation_tol(),
            random_starts: Self::default_random_starts(),
        }
    }
}

/// Control used by `skeleton` and `condition-b`: the same profile
/// `amplitude·exp(-(x-centre)²/2width²)` on every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub amplitude: f64,
    pub width: f64,
    pub centre: f64,
}

impl Default for ControlBlock {
    fn default() -> Self {
        Self { amplitude: 1.0, width: 1.0, centre: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenseBlock {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "ExperimentBlock::default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "ExperimentBlock::default_observable")]
    pub observable: Observable,
    #[serde(default = "ExperimentBlock::default_level")]
    pub level: f64,
    #[serde(default = "ExperimentBlock::default_sense")]
    pub sense: SenseBlock,
    #[serde(default = "ExperimentBlock::default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub control: ControlBlock,
    /// Importance sampling on every rung of `ldp-scan`.
    #[serde(default)]
    pub always_importance: bool,
    #[serde(default = "ExperimentBlock::default_kernel_hursts")]
    pub kernel_hursts: Vec<f64>,
    #[serde(default = "ExperimentBlock::default_kernel_times")]
    pub kernel_times: Vec<f64>,
    #[serde(default = "ExperimentBlock::default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "ExperimentBlock::default_probe_pairs")]
    pub probe_pairs: Vec<(f64, f64)>,
    /// Grid of the `norms-test` suite, which must decay at the boundary.
    #[serde(default = "ExperimentBlock::default_suite_grid")]
    pub suite_grid: (f64, usize),
    #[serde(default = "ExperimentBlock::default_mollification_levels")]
    pub mollification_levels: Vec<f64>,
    #[serde(default = "ExperimentBlock::default_heat_times")]
    pub heat_times: Vec<f64>,
    /// Write every trajectory of `simulate` to a binary dump.
    #[serde(default)]
    pub dump_trajectories: bool,
}

impl ExperimentBlock {
    fn default_n_paths() -> usize {
        1000
    }
    fn default_observable() -> Observable {
        Observable::PointValue { x: 0.0 }
    }
    fn default_level() -> f64 {
        2.0
    }
    fn default_sense() -> SenseBlock {
        SenseBlock::AtLeast
    }
    fn default_delta() -> f64 {
        0.05
    }
    fn default_kernel_hursts() -> Vec<f64> {
        vec![0.30, 0.35, 0.45]
    }
    fn default_kernel_times() -> Vec<f64> {
        vec![0.25, 0.5, 1.0]
    }
    fn default_n_samples() -> usize {
        10_000
    }
    fn default_probe_pairs() -> Vec<(f64, f64)> {
        vec![(1.0, 2.0), (0.5, -0.5), (1.0, 1.0), (-2.0, -0.3), (2.0, -2.0), (0.25, 1.5)]
    }
    fn default_suite_grid() -> (f64, usize) {
        (32.0, 4096)
    }
    fn default_mollification_levels() -> Vec<f64> {
        vec![0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0]
    }
    fn default_heat_times() -> Vec<f64> {
        vec![0.25, 1.0, 4.0]
    }
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every experiment field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the hash: the same run may be written anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// 1-based line of the first occurrence of `"key"`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new(format!("malformed JSON: {e}")).at(Some(e.line())))?;
        if value.get("model").is_some_and(|m| m.is_object() && m.get("sigma").is_none()) {
            return Err(ConfigError::new("missing σ block: model.sigma is required").at(line_of(text, "model")));
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let line = msg.split('`').nth(1).and_then(|field| line_of(text, field));
            ConfigError::new(msg).at(line)
        })?;
        cfg.validate().map_err(|(key, e)| e.at(line_of(text, key)))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks ranges; the error names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, ConfigError)> {
        let h = self.model.hurst;
        if !(h > 0.25 && h < 0.5) {
            return Err(("hurst", ConfigError::new(format!("Hurst parameter must lie in (1/4, 1/2), got {h}"))));
        }
        let sigma = self.model.sigma.as_ref().ok_or(("model", ConfigError::new("missing σ block: model.sigma is required")))?;
        sigma.to_spec().check_declared(h).map_err(|e| ("p0", ConfigError::new(e.to_string())))?;
        let g = &self.grid;
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(("half_width", ConfigError::new("grid.half_width must be positive")));
        }
        if g.n_points < 4 || !g.n_points.is_power_of_two() {
            return Err(("n_points", ConfigError::new("grid.n_points must be a power of two ≥ 4")));
        }
        if !(g.horizon > 0.0 && g.horizon.is_finite()) || g.n_steps == 0 {
            return Err(("horizon", ConfigError::new("grid.horizon must be positive and grid.n_steps at least 1")));
        }
        if !(self.model.eps > 0.0) {
            return Err(("eps", ConfigError::new("model.eps must be positive")));
        }
        let s = &self.solver;
        if !(s.picard_tol > 0.0) || !(s.violation_tol > 0.0) {
            return Err(("picard_tol", ConfigError::new("all tolerances must be positive")));
        }
        if s.max_iter == 0 {
            return Err(("max_iter", ConfigError::new("solver.max_iter must be at least 1")));
        }
        let decreasing = |v: &[f64]| !v.is_empty() && v.iter().all(|e| *e > 0.0) && v.windows(2).all(|w| w[1] < w[0]);
        if !decreasing(&self.model.ladder) {
            return Err(("ladder", ConfigError::new("model.ladder must be positive and strictly decreasing")));
        }
        if !decreasing(&s.ladder) {
            return Err(("ladder", ConfigError::new("solver.ladder must be positive and strictly decreasing")));
        }
        let e = &self.experiment;
        if e.n_paths == 0 {
            return Err(("n_paths", ConfigError::new("experiment.n_paths must be at least 1")));
        }
        if !(e.delta > 0.0) {
            return Err(("delta", ConfigError::new("experiment.delta must be positive")));
        }
        Ok(())
    }

    pub fn params(&self) -> HParams {
        HParams::new(self.model.hurst).expect("validated Hurst parameter")
    }

    pub fn sigma(&self) -> SigmaSpec {
        self.model.sigma.as_ref().expect("validated σ block").to_spec()
    }

    pub fn sigma_is_constant(&self) -> Option<f64> {
        match &self.model.sigma {
            Some(SigmaBlock::Constant { c, .. }) => Some(*c),
            _ => None,
        }
    }

    /// Canonical JSON: sorted keys, compact, output directory dropped.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        // serde_json's map is ordered by key unless `preserve_order` is on.
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
