//! Experiment configuration.
//!
//! TOML is the primary format; a file whose extension is `.json` is read as
//! JSON with the same schema. Unknown keys are rejected at every level and
//! all values are range-checked before any computation starts.

use std::path::Path;

use fockfield::fock::DEFAULT_MAX_DIM;
use fockfield::{ClassicalField, Complex64, ModeSpace, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("missing section `[{0}]` required by this subcommand")]
    MissingSection(&'static str),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

/// Complex numbers are written as `[re, im]` pairs.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub modes: usize,
    pub cutoff: u32,
    pub seed: u64,
    /// Independent uniform draws. With `antithetic` each draw also
    /// contributes its `2^modes` parity images.
    pub count: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_true")]
    pub antithetic: bool,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foliation: Option<FoliationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSection>,
}

fn default_max_dim() -> usize {
    DEFAULT_MAX_DIM
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub operator_tolerance: f64,
    pub max_iters: usize,
    pub mu_cap: f64,
    /// Minimum effective sample size as a fraction of the sample count.
    pub ess_threshold: f64,
    pub ridge: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            tolerance: d.tolerance,
            operator_tolerance: d.operator_tolerance,
            max_iters: d.max_iters,
            mu_cap: d.mu_cap,
            ess_threshold: d.ess_fraction,
            ridge: d.ridge,
        }
    }
}

impl SolverSection {
    pub fn to_solver_config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            operator_tolerance: self.operator_tolerance,
            max_iters: self.max_iters,
            mu_cap: self.mu_cap,
            ess_fraction: self.ess_threshold,
            ridge: self.ridge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub target: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub targets: Vec<Vec<Pair>>,
    /// Defaults to `[cutoff, cutoff + 2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliationSection {
    pub field: Vec<Pair>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_test_mus")]
    pub test_mus: usize,
    #[serde(default = "default_max_starts")]
    pub max_starts: usize,
    #[serde(default = "default_accept")]
    pub accept: f64,
    #[serde(default = "default_projection_iters")]
    pub max_iters: usize,
}

fn default_points() -> usize {
    50
}
fn default_test_mus() -> usize {
    5
}
fn default_max_starts() -> usize {
    500
}
fn default_accept() -> f64 {
    1e-8
}
fn default_projection_iters() -> usize {
    500
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Sample `CP^{dim-1}` directly instead of the configured Fock space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

pub fn field_from_pairs(pairs: &[Pair]) -> ClassicalField {
    ClassicalField::new(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, ConfigError> {
        if json {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(format!("JSON config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(format!("TOML config: {e}")))
        }
    }

    pub fn mode_space(&self) -> Result<ModeSpace, ConfigError> {
        ModeSpace::with_max_dim(self.modes, self.cutoff, self.max_dim).map_err(|e| invalid("cutoff", e.to_string()))
    }

    /// Checks shared by every subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modes == 0 {
            return Err(invalid("modes", "must be at least 1"));
        }
        if self.modes > 16 {
            return Err(invalid("modes", "at most 16 modes are supported"));
        }
        if self.cutoff == 0 {
            return Err(invalid("cutoff", "must be at least 1"));
        }
        if self.count == 0 {
            return Err(invalid("count", "must be positive"));
        }
        self.mode_space()?;
        let s = &self.solver;
        for (key, v) in [
            ("solver.tolerance", s.tolerance),
            ("solver.operator_tolerance", s.operator_tolerance),
            ("solver.mu_cap", s.mu_cap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, "must be finite and positive"));
            }
        }
        if !(s.ess_threshold.is_finite() && (0.0..=1.0).contains(&s.ess_threshold)) {
            return Err(invalid("solver.ess_threshold", "must lie in [0, 1]"));
        }
        if !(s.ridge.is_finite() && s.ridge >= 0.0) {
            return Err(invalid("solver.ridge", "must be finite and non-negative"));
        }
        Ok(())
    }

    fn check_field(&self, key: &str, pairs: &[Pair]) -> Result<(), ConfigError> {
        if pairs.len() != self.modes {
            return Err(invalid(key, format!("expected {} [re, im] pairs, found {}", self.modes, pairs.len())));
        }
        if pairs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid(key, "components must be finite"));
        }
        Ok(())
    }

    pub fn solve_section(&self) -> Result<&SolveSection, ConfigError> {
        self.validate()?;
        let s = self.solve.as_ref().ok_or(ConfigError::MissingSection("solve"))?;
        self.check_field("solve.target", &s.target)?;
        Ok(s)
    }

    pub fn compare_cutoffs(&self) -> Vec<u32> {
        self.compare.as_ref().and_then(|c| c.cutoffs.clone()).unwrap_or_else(|| vec![self.cutoff, self.cutoff + 2])
    }

    pub fn compare_section(&self) -> Result<&CompareSection, ConfigError> {
        self.validate()?;
        let c = self.compare.as_ref().ok_or(ConfigError::MissingSection("compare"))?;
        if c.targets.is_empty() {
            return Err(invalid("compare.targets", "needs at least one target"));
        }
        for t in &c.targets {
            self.check_field("compare.targets", t)?;
        }
        let cutoffs = self.compare_cutoffs();
        if cutoffs.is_empty() {
            return Err(invalid("compare.cutoffs", "needs at least one cutoff"));
        }
        for &n in &cutoffs {
            ModeSpace::with_max_dim(self.modes, n, self.max_dim).map_err(|e| invalid("compare.cutoffs", e.to_string()))?;
        }
        Ok(c)
    }

    pub fn foliation_section(&self) -> Result<&FoliationSection, ConfigError> {
        self.validate()?;
        let f = self.foliation.as_ref().ok_or(ConfigError::MissingSection("foliation"))?;
        self.check_field("foliation.field", &f.field)?;
        if f.points == 0 {
            return Err(invalid("foliation.points", "must be positive"));
        }
        if !(f.accept.is_finite() && f.accept > 0.0) {
            return Err(invalid("foliation.accept", "must be finite and positive"));
        }
        Ok(f)
    }

    /// Dimension of the sampled projective space.
    pub fn sample_dim(&self) -> Result<usize, ConfigError> {
        self.validate()?;
        match self.sample.as_ref().and_then(|s| s.dim) {
            Some(d) if d < 2 => Err(invalid("sample.dim", "must be at least 2")),
            Some(d) if d > self.max_dim => Err(invalid("sample.dim", format!("exceeds max_dim {}", self.max_dim))),
            Some(d) => Ok(d),
            None => Ok(self.mode_space()?.dim()),
        }
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Lowercase hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
