//! Experiment configuration: one versioned TOML document per run.
//!
//! Every knob the runner accepts lives here; unknown keys are rejected so a
//! typo cannot silently change an experiment. Validation builds the actual
//! model objects before any output file is created, so a bad config never
//! leaves a partial run directory behind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unstable_entropy::{
    build_grid, build_linear_model, CountMethod, Formula, KatokRequest, Partition, ShiftModel,
    SystemHandle, UnstableScheme,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level config; field names are the TOML keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub system: SystemConfig,
    pub partition: PartitionConfig,
    pub estimate: EstimateConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Linear,
    Shift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Integer matrix rows (linear systems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<i64>>>,
    /// Symbol probabilities (Bernoulli shifts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Row-stochastic transition matrix (Markov shifts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    /// Grid subdivisions per axis (linear systems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_k: Option<u32>,
    /// Scale bound the grid diameter must respect (linear systems).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    pub leaf_halflength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    Partition,
    Ball,
}

impl From<FormulaKind> for Formula {
    fn from(f: FormulaKind) -> Formula {
        match f {
            FormulaKind::Partition => Formula::PartitionCount,
            FormulaKind::Ball => Formula::BallCover,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Oracle,
    Greedy,
}

impl From<MethodKind> for CountMethod {
    fn from(m: MethodKind) -> CountMethod {
        match m {
            MethodKind::Oracle => CountMethod::OracleInterval,
            MethodKind::Greedy => CountMethod::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub formula: FormulaKind,
    pub n_min: usize,
    pub n_max: usize,
    pub fit_lo: usize,
    pub fit_hi: usize,
    /// Ball radius scales; ignored by the partition formula.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub anchor_count: u32,
    /// Candidate samples per anchor for the greedy method.
    #[serde(default)]
    pub sample_count: u32,
    /// Counting methods for linear ball covers.
    #[serde(default)]
    pub methods: Vec<MethodKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Worker threads for sweep tasks; 0 picks the runtime default.
    #[serde(default)]
    pub workers: usize,
}

fn default_budget() -> u64 {
    1 << 22
}

/// Sweep axes; an absent axis falls back to the single base value from
/// `[estimate]` / `[partition]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_k: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_counts: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_pairs")]
    pub pairs: u64,
    #[serde(default = "default_verify_anchors")]
    pub anchors: u32,
    #[serde(default = "default_verify_n_max")]
    pub n_max: usize,
}

fn default_pairs() -> u64 {
    2000
}

fn default_verify_anchors() -> u32 {
    8
}

fn default_verify_n_max() -> usize {
    8
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            anchors: default_verify_anchors(),
            n_max: default_verify_n_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_oracle_n")]
    pub n: usize,
    #[serde(default = "default_oracle_delta")]
    pub delta: f64,
    /// Cover instance file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_instance: Option<String>,
}

fn default_oracle_n() -> usize {
    3
}

fn default_oracle_delta() -> f64 {
    0.25
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n: default_oracle_n(),
            delta: default_oracle_delta(),
            cover_instance: None,
        }
    }
}

/// First 1-based line whose content starts with `key` followed by `=` or
/// whitespace; used to point config errors at the offending line.
fn line_of_key(raw: &str, key: &str) -> Option<usize> {
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') || rest.is_empty() {
                return Some(i + 1);
            }
        }
    }
    None
}

/// Config error pointing at the line of `field`'s last path segment when it
/// appears in the raw text, else at the field path alone.
pub fn field_err(path: &Path, raw: &str, field: &str, msg: impl std::fmt::Display) -> CliError {
    let key = field.rsplit('.').next().unwrap_or(field);
    match line_of_key(raw, key) {
        Some(line) => CliError::Config(format!("{}:{line}: {field}: {msg}", path.display())),
        None => CliError::Config(format!("{}: {field}: {msg}", path.display())),
    }
}

impl ExperimentConfig {
    pub fn parse(path: &Path, raw: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(raw)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(field_err(
                path,
                raw,
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", cfg.schema),
            ));
        }
        Ok(cfg)
    }

    pub fn build_system(&self, path: &Path, raw: &str) -> Result<SystemHandle, CliError> {
        let s = &self.system;
        match s.kind {
            SystemKind::Linear => {
                if s.probs.is_some() || s.transition.is_some() {
                    return Err(field_err(
                        path,
                        raw,
                        "system.kind",
                        "linear systems take system.matrix only",
                    ));
                }
                let matrix = s.matrix.as_ref().ok_or_else(|| {
                    field_err(path, raw, "system.matrix", "required for kind = \"linear\"")
                })?;
                build_linear_model(matrix)
                    .map_err(|e| field_err(path, raw, "system.matrix", e))
            }
            SystemKind::Shift => {
                if s.matrix.is_some() {
                    return Err(field_err(
                        path,
                        raw,
                        "system.matrix",
                        "shift systems take probs or transition, not a matrix",
                    ));
                }
                let model = match (&s.probs, &s.transition) {
                    (Some(p), None) => ShiftModel::bernoulli(p.clone())
                        .map_err(|e| field_err(path, raw, "system.probs", e))?,
                    (None, Some(t)) => ShiftModel::markov(t.clone())
                        .map_err(|e| field_err(path, raw, "system.transition", e))?,
                    _ => {
                        return Err(field_err(
                            path,
                            raw,
                            "system.kind",
                            "shift systems need exactly one of probs or transition",
                        ))
                    }
                };
                Ok(SystemHandle::Shift(model))
            }
        }
    }

    /// Scheme for the base config; `grid_k` overrides `partition.grid_k`
    /// (sweep tasks rebuild the grid per k).
    pub fn build_scheme(
        &self,
        system: &SystemHandle,
        grid_k: Option<u32>,
        path: &Path,
        raw: &str,
    ) -> Result<UnstableScheme, CliError> {
        let p = &self.partition;
        let partition = match system {
            SystemHandle::Linear(model) => {
                let k = grid_k.or(p.grid_k).ok_or_else(|| {
                    field_err(path, raw, "partition.grid_k", "required for linear systems")
                })?;
                let eps0 = p.epsilon0.ok_or_else(|| {
                    field_err(path, raw, "partition.epsilon0", "required for linear systems")
                })?;
                let grid = build_grid(model.dim(), k, eps0)
                    .map_err(|e| field_err(path, raw, "partition.epsilon0", e))?;
                Partition::Grid(grid)
            }
            SystemHandle::Shift(model) => {
                if p.grid_k.is_some() || p.epsilon0.is_some() {
                    return Err(field_err(
                        path,
                        raw,
                        "partition.grid_k",
                        "grids apply to linear systems only",
                    ));
                }
                Partition::TimeZero {
                    alphabet: model.alphabet(),
                }
            }
        };
        UnstableScheme::new(partition, p.leaf_halflength)
            .map_err(|e| field_err(path, raw, "partition.leaf_halflength", e))
    }

    /// Counting request for the base estimate, validated against the scheme.
    pub fn build_request(
        &self,
        system: &SystemHandle,
        scheme: &UnstableScheme,
        seed: u64,
        budget: u64,
        path: &Path,
        raw: &str,
    ) -> Result<KatokRequest, CliError> {
        let e = &self.estimate;
        let req = KatokRequest {
            formula: e.formula.into(),
            n_min: e.n_min,
            n_max: e.n_max,
            fit_lo: e.fit_lo,
            fit_hi: e.fit_hi,
            epsilons: e.epsilons.clone(),
            deltas: e.deltas.clone(),
            anchor_count: e.anchor_count,
            sample_count: e.sample_count,
            methods: e.methods.iter().map(|&m| m.into()).collect(),
            seed,
            budget,
        };
        req.validate(system, scheme)
            .map_err(|err| field_err(path, raw, "estimate", err))?;
        Ok(req)
    }
}

/// Standalone cover problem: candidates plus either a uniform interval or
/// weighted atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverInstanceFile {
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
    pub candidates: Vec<CandidateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub center: f64,
    pub radius: f64,
}

/// Resolve a cover-instance path from the oracle section against the config
/// file's directory; CLI-flag paths resolve against the working directory.
pub fn resolve_relative(config_path: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat_toml() -> String {
        r#"
schema = 1

[system]
kind = "linear"
matrix = [[2, 1], [1, 1]]

[partition]
grid_k = 10
epsilon0 = 0.15
leaf_halflength = 0.2

[estimate]
formula = "partition"
n_min = 4
n_max = 8
fit_lo = 4
fit_hi = 8
deltas = [0.1]
anchor_count = 4

[run]
seed = 11
out_dir = "out"
"#
        .to_string()
    }

    #[test]
    fn config_round_trips_losslessly() {
        let raw = cat_toml();
        let cfg = ExperimentConfig::parse(Path::new("cat.toml"), &raw).unwrap();
        let re = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(Path::new("cat.toml"), &re).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let raw = cat_toml().replace("[run]", "[run]\ntypo_key = 3");
        let err = ExperimentConfig::parse(Path::new("cat.toml"), &raw).unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
    }

    #[test]
    fn wrong_schema_is_rejected_with_a_line() {
        let raw = cat_toml().replace("schema = 1", "schema = 9");
        let err = ExperimentConfig::parse(Path::new("cat.toml"), &raw).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cat.toml:2"), "{msg}");
        assert!(msg.contains("schema"), "{msg}");
    }

    #[test]
    fn oversized_grid_cell_is_a_config_error_with_a_line() {
        let raw = cat_toml().replace("grid_k = 10", "grid_k = 5");
        let cfg = ExperimentConfig::parse(Path::new("cat.toml"), &raw).unwrap();
        let sys = cfg.build_system(Path::new("cat.toml"), &raw).unwrap();
        let err = cfg
            .build_scheme(&sys, None, Path::new("cat.toml"), &raw)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epsilon0"), "{msg}");
        assert!(msg.contains("exceeds"), "{msg}");
        assert!(msg.contains("cat.toml:10"), "{msg}");
    }

    #[test]
    fn shift_config_builds_a_time_zero_scheme() {
        let raw = r#"
schema = 1

[system]
kind = "shift"
probs = [0.5, 0.5]

[partition]
leaf_halflength = 0.9

[estimate]
formula = "partition"
n_min = 2
n_max = 6
fit_lo = 2
fit_hi = 6
deltas = [0.25]
anchor_count = 1

[run]
seed = 1
out_dir = "out"
"#;
        let cfg = ExperimentConfig::parse(Path::new("coin.toml"), raw).unwrap();
        let sys = cfg.build_system(Path::new("coin.toml"), raw).unwrap();
        let scheme = cfg.build_scheme(&sys, None, Path::new("coin.toml"), raw).unwrap();
        assert!(scheme.grid().is_none());
        cfg.build_request(&sys, &scheme, 1, 1 << 20, Path::new("coin.toml"), raw)
            .unwrap();
    }
}
