//! Result files: content hashing, atomic writes, CSV and JSON shapes, and
//! the run manifest.
//!
//! Every value is formatted with the shortest round-trip float notation, so
//! a rerun with the same config and seed reproduces each result file byte
//! for byte. The manifest is the one deliberate exception: it carries wall
//! clock timestamps and is written last, after all listed files exist.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unstable_entropy::{rng, CountRow, EstimateLine};

use crate::error::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run identity: a pure function of the stored config bytes and the
/// effective seed, so a seed override or config edit changes it and a rerun
/// does not.
pub fn run_id(config_bytes: &[u8], seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Write via a same-directory temp file and rename, so a crash never leaves
/// a half-written result file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV header for count rows; `task` column only in sweeps.
pub fn counts_header(with_task: bool) -> String {
    if with_task {
        "run_id,task,system,formula,anchor_index,n,epsilon,delta,method,count,covered_mass,naive_rate\n".into()
    } else {
        "run_id,system,formula,anchor_index,n,epsilon,delta,method,count,covered_mass,naive_rate\n".into()
    }
}

/// One CSV line per count row. The system identity contains commas, so it
/// is always quoted.
pub fn counts_line(run: &str, task: Option<&str>, system: &str, r: &CountRow) -> String {
    let task_col = task.map(|t| format!("{t},")).unwrap_or_default();
    format!(
        "{run},{task_col}\"{system}\",{},{},{},{},{},{},{},{},{}\n",
        r.formula,
        r.anchor_index,
        r.n,
        fmt_opt(r.epsilon),
        r.delta,
        r.method,
        r.count,
        r.covered_mass,
        r.naive_rate()
    )
}

/// JSON mirror of a count row, used by resumable sweep task files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub anchor_index: u32,
    pub formula: String,
    pub method: String,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub count: u64,
    pub covered_mass: f64,
}

impl From<&CountRow> for RowRecord {
    fn from(r: &CountRow) -> Self {
        Self {
            anchor_index: r.anchor_index,
            formula: r.formula.to_string(),
            method: r.method.to_string(),
            n: r.n,
            epsilon: r.epsilon,
            delta: r.delta,
            count: r.count,
            covered_mass: r.covered_mass,
        }
    }
}

impl RowRecord {
    pub fn naive_rate(&self) -> f64 {
        (self.count as f64).ln() / self.n as f64
    }

    pub fn csv_line(&self, run: &str, task: Option<&str>, system: &str) -> String {
        let task_col = task.map(|t| format!("{t},")).unwrap_or_default();
        format!(
            "{run},{task_col}\"{system}\",{},{},{},{},{},{},{},{},{}\n",
            self.formula,
            self.anchor_index,
            self.n,
            fmt_opt(self.epsilon),
            self.delta,
            self.method,
            self.count,
            self.covered_mass,
            self.naive_rate()
        )
    }
}

/// JSON mirror of a slope summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub formula: String,
    pub method: String,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub median_slope: f64,
    pub iqr: f64,
    pub per_anchor: Vec<f64>,
}

impl From<&EstimateLine> for LineRecord {
    fn from(l: &EstimateLine) -> Self {
        Self {
            formula: l.formula.to_string(),
            method: l.method.to_string(),
            epsilon: l.epsilon,
            delta: l.delta,
            median_slope: l.median_slope,
            iqr: l.iqr,
            per_anchor: l.per_anchor.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEntry {
    pub key: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// Run record written last: what ran, from which config bytes, and the hash
/// of every result file produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: u32,
    pub run_id: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub budget: u64,
    pub generator: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub tasks: Vec<TaskEntry>,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(command: &str, run_id: &str, config_sha256: &str, seed: u64, budget: u64) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION,
            run_id: run_id.into(),
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
            budget,
            generator: rng::GENERATOR.into(),
            started_unix: unix_now(),
            finished_unix: 0,
            tasks: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
