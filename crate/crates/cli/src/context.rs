//! Shared run plumbing: load and validate a config, apply CLI overrides,
//! stage result files, and write the manifest last.
//!
//! Nothing touches the output directory until validation has passed, so a
//! rejected config never creates files.

use std::fs;
use std::path::PathBuf;

use unstable_entropy::{
    InvariantMeasureModel, KatokRequest, SystemHandle, UnstableScheme,
};

use crate::artifacts::{
    run_id, sha256_hex, to_json_bytes, unix_now, write_atomic, Manifest, OutputEntry, TaskEntry,
};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::CommonArgs;

pub struct RunContext {
    pub config_path: PathBuf,
    /// Input config bytes, stored verbatim and hashed for the manifest.
    pub raw: String,
    pub cfg: ExperimentConfig,
    pub system: SystemHandle,
    pub measure: InvariantMeasureModel,
    pub scheme: UnstableScheme,
    pub seed: u64,
    pub budget: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub run_id: String,
    pub config_sha: String,
    outputs: Vec<OutputEntry>,
    started: u64,
}

impl RunContext {
    pub fn load(args: &CommonArgs) -> Result<Self, CliError> {
        let raw = fs::read_to_string(&args.config)
            .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
        let cfg = ExperimentConfig::parse(&args.config, &raw)?;
        let system = cfg.build_system(&args.config, &raw)?;
        let measure = InvariantMeasureModel::for_system(&system);
        let scheme = cfg.build_scheme(&system, None, &args.config, &raw)?;
        let seed = args.seed.unwrap_or(cfg.run.seed);
        let budget = args.budget.unwrap_or(cfg.run.budget);
        let workers = args.workers.unwrap_or(cfg.run.workers);
        let out_dir = args
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
        let run_id = run_id(raw.as_bytes(), seed);
        let config_sha = sha256_hex(raw.as_bytes());
        Ok(Self {
            config_path: args.config.clone(),
            raw,
            cfg,
            system,
            measure,
            scheme,
            seed,
            budget,
            workers,
            out_dir,
            run_id,
            config_sha,
            outputs: Vec::new(),
            started: unix_now(),
        })
    }

    /// The base counting request, validated against the loaded scheme.
    pub fn request(&self) -> Result<KatokRequest, CliError> {
        self.cfg.build_request(
            &self.system,
            &self.scheme,
            self.seed,
            self.budget,
            &self.config_path,
            &self.raw,
        )
    }

    pub fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.out_dir.display())))
    }

    /// Write a result file atomically and record its hash for the manifest.
    pub fn store(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.out_dir.join(name), bytes)?;
        self.record_output(name.into(), sha256_hex(bytes));
        Ok(())
    }

    /// Record a file written elsewhere (sweep task files).
    pub fn record_output(&mut self, file: String, sha256: String) {
        self.outputs.push(OutputEntry { file, sha256 });
    }

    pub fn store_config(&mut self) -> Result<(), CliError> {
        let bytes = self.raw.clone();
        self.store("config.toml", bytes.as_bytes())
    }

    /// Write the manifest last, listing every stored file.
    pub fn finish(&mut self, command: &str, tasks: Vec<TaskEntry>) -> Result<(), CliError> {
        let mut manifest =
            Manifest::new(command, &self.run_id, &self.config_sha, self.seed, self.budget);
        manifest.started_unix = self.started;
        manifest.finished_unix = unix_now();
        manifest.tasks = tasks;
        manifest.outputs = std::mem::take(&mut self.outputs);
        let bytes = to_json_bytes(&manifest)?;
        write_atomic(&self.out_dir.join("manifest.json"), &bytes)
    }
}
