//! `sweep`: a Cartesian grid of estimates over grid size, ball scale,
//! coverage deficit, and anchor count.
//!
//! Each grid point is one task with a stable key. Task results are written
//! as individual JSON files as they complete, so an interrupted sweep rerun
//! loads finished tasks instead of recomputing them and still assembles the
//! same merged CSV. Tasks may run on several workers; assembly follows grid
//! order, not completion order.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unstable_entropy::{katok_estimate, KatokRequest, UnstableScheme};

use crate::artifacts::{
    counts_header, sha256_hex, to_json_bytes, write_atomic, LineRecord, RowRecord, TaskEntry,
};
use crate::config::{FormulaKind, SCHEMA_VERSION};
use crate::context::RunContext;
use crate::error::{classify, CliError};
use crate::CommonArgs;

#[derive(Debug, Clone)]
struct TaskSpec {
    key: String,
    grid_k: Option<u32>,
    epsilon: Option<f64>,
    delta: f64,
    anchors: u32,
}

/// Per-task result file; the unit of resumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskRecord {
    schema: u32,
    run_id: String,
    key: String,
    rows: Vec<RowRecord>,
    estimates: Vec<LineRecord>,
}

#[derive(Serialize)]
struct TaskSummary {
    key: String,
    status: String,
    estimates: Vec<LineRecord>,
}

#[derive(Serialize)]
struct SlopeDifference {
    task_a: String,
    task_b: String,
    method: String,
    slope_a: f64,
    slope_b: f64,
    difference: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    schema: u32,
    run_id: String,
    command: &'static str,
    system: String,
    tasks: Vec<TaskSummary>,
    /// Pairwise median-slope differences between tasks, per shared method.
    slope_differences: Vec<SlopeDifference>,
}

fn axis_key_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "na".into())
}

fn build_specs(ctx: &RunContext) -> Result<Vec<TaskSpec>, CliError> {
    let sweep = ctx.cfg.sweep.clone().unwrap_or_default();
    let est = &ctx.cfg.estimate;
    let is_linear = ctx.system.as_linear().is_some();

    let ks: Vec<Option<u32>> = match (&sweep.grid_k, is_linear) {
        (Some(v), true) => v.iter().map(|&k| Some(k)).collect(),
        (Some(_), false) => {
            return Err(CliError::Config(
                "sweep.grid_k: grids apply to linear systems only".into(),
            ))
        }
        (None, _) => vec![ctx.cfg.partition.grid_k],
    };
    let epsilons: Vec<Option<f64>> = match est.formula {
        FormulaKind::Ball => {
            let src = sweep.epsilons.clone().unwrap_or_else(|| est.epsilons.clone());
            src.into_iter().map(Some).collect()
        }
        FormulaKind::Partition => {
            if sweep.epsilons.is_some() {
                return Err(CliError::Config(
                    "sweep.epsilons: ball scales need estimate.formula = \"ball\"".into(),
                ));
            }
            vec![None]
        }
    };
    let deltas = sweep.deltas.clone().unwrap_or_else(|| est.deltas.clone());
    let anchor_counts = sweep
        .anchor_counts
        .clone()
        .unwrap_or_else(|| vec![est.anchor_count]);

    if ks.is_empty() || epsilons.is_empty() || deltas.is_empty() || anchor_counts.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }

    let mut specs = Vec::new();
    for &k in &ks {
        for &e in &epsilons {
            for &d in &deltas {
                for &a in &anchor_counts {
                    let key = format!(
                        "k{}_e{}_d{}_a{a}",
                        k.map(|v| v.to_string()).unwrap_or_else(|| "na".into()),
                        axis_key_f64(e),
                        d
                    );
                    specs.push(TaskSpec {
                        key,
                        grid_k: k,
                        epsilon: e,
                        delta: d,
                        anchors: a,
                    });
                }
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for s in &specs {
        if !seen.insert(s.key.clone()) {
            return Err(CliError::Config(format!(
                "sweep grid repeats task key {}",
                s.key
            )));
        }
    }
    Ok(specs)
}

fn task_request(ctx: &RunContext, spec: &TaskSpec) -> KatokRequest {
    let est = &ctx.cfg.estimate;
    KatokRequest {
        formula: est.formula.into(),
        n_min: est.n_min,
        n_max: est.n_max,
        fit_lo: est.fit_lo,
        fit_hi: est.fit_hi,
        epsilons: spec.epsilon.into_iter().collect(),
        deltas: vec![spec.delta],
        anchor_count: spec.anchors,
        sample_count: est.sample_count,
        methods: est.methods.iter().map(|&m| m.into()).collect(),
        seed: ctx.seed,
        budget: ctx.budget,
    }
}

/// Load a finished task file or compute and write it. Returns the record,
/// its status, and the hash of the file bytes.
fn run_or_load(
    ctx: &RunContext,
    spec: &TaskSpec,
    scheme: &UnstableScheme,
    req: &KatokRequest,
    task_path: &PathBuf,
) -> Result<(TaskRecord, &'static str, String), CliError> {
    if let Ok(bytes) = fs::read(task_path) {
        if let Ok(record) = serde_json::from_slice::<TaskRecord>(&bytes) {
            if record.run_id == ctx.run_id && record.key == spec.key {
                return Ok((record, "cached", sha256_hex(&bytes)));
            }
        }
    }
    let outcome = katok_estimate(&ctx.system, &ctx.measure, scheme, req).map_err(classify)?;
    let record = TaskRecord {
        schema: SCHEMA_VERSION,
        run_id: ctx.run_id.clone(),
        key: spec.key.clone(),
        rows: outcome.rows.iter().map(RowRecord::from).collect(),
        estimates: outcome.estimates.iter().map(LineRecord::from).collect(),
    };
    let bytes = to_json_bytes(&record)?;
    write_atomic(task_path, &bytes)?;
    Ok((record, "computed", sha256_hex(&bytes)))
}

pub fn run(args: &CommonArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::load(args)?;
    let specs = build_specs(&ctx)?;

    // Validate the whole grid before anything is written.
    let mut prepared = Vec::with_capacity(specs.len());
    for spec in &specs {
        let scheme =
            ctx.cfg
                .build_scheme(&ctx.system, spec.grid_k, &ctx.config_path, &ctx.raw)?;
        let req = task_request(&ctx, spec);
        req.validate(&ctx.system, &scheme)
            .map_err(|e| CliError::Config(format!("sweep task {}: {e}", spec.key)))?;
        prepared.push((scheme, req));
    }

    ctx.prepare_out()?;
    let tasks_dir = ctx.out_dir.join("tasks");
    fs::create_dir_all(&tasks_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", tasks_dir.display())))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    let results: Vec<Result<(TaskRecord, &'static str, String), CliError>> = pool.install(|| {
        (0..specs.len())
            .into_par_iter()
            .map(|i| {
                let (scheme, req) = &prepared[i];
                let task_path = tasks_dir.join(format!("{}.json", specs[i].key));
                run_or_load(&ctx, &specs[i], scheme, req, &task_path)
            })
            .collect()
    });

    let mut records = Vec::with_capacity(specs.len());
    for (spec, result) in specs.iter().zip(results) {
        let (record, status, sha) = result?;
        ctx.record_output(format!("tasks/{}.json", spec.key), sha);
        records.push((spec.key.clone(), status, record));
    }

    ctx.store_config()?;

    let system = ctx.system.identity();
    let mut csv = counts_header(true);
    for (key, _, record) in &records {
        for row in &record.rows {
            csv.push_str(&row.csv_line(&ctx.run_id, Some(key), &system));
        }
    }
    ctx.store("counts.csv", csv.as_bytes())?;

    let mut differences = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            for la in &records[i].2.estimates {
                for lb in &records[j].2.estimates {
                    if la.method == lb.method {
                        differences.push(SlopeDifference {
                            task_a: records[i].0.clone(),
                            task_b: records[j].0.clone(),
                            method: la.method.clone(),
                            slope_a: la.median_slope,
                            slope_b: lb.median_slope,
                            difference: la.median_slope - lb.median_slope,
                        });
                    }
                }
            }
        }
    }
    let summary = SweepSummary {
        schema: SCHEMA_VERSION,
        run_id: ctx.run_id.clone(),
        command: "sweep",
        system,
        tasks: records
            .iter()
            .map(|(key, status, record)| TaskSummary {
                key: key.clone(),
                status: (*status).into(),
                estimates: record.estimates.clone(),
            })
            .collect(),
        slope_differences: differences,
    };
    ctx.store("summary.json", &to_json_bytes(&summary)?)?;

    let task_entries = records
        .iter()
        .map(|(key, status, _)| TaskEntry {
            key: key.clone(),
            status: (*status).into(),
        })
        .collect();
    ctx.finish("sweep", task_entries)
}
