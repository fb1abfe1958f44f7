//! `oracle`: dump ground-truth data for differential testing at small n —
//! the refined itinerary cells on one leaf with their exact masses, the
//! minimal-cell count, and (given a standalone instance file) greedy and
//! certified-minimum ball covers.
//!
//! The leaf is the same first anchor `estimate` would draw for this seed,
//! so cell dumps line up with estimate rows.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use unstable_entropy::rng::{stream, Purpose};
use unstable_entropy::{
    brute_force_cover, disintegrate, greedy_cover, partition_count, refine_on_leaf, trace_mass,
    Candidate, CountMethod, CountRow, CoverInstance, Formula, Trace, BRUTE_FORCE_LIMIT,
};

use crate::artifacts::{counts_header, counts_line, to_json_bytes, TaskEntry};
use crate::config::{resolve_relative, CoverInstanceFile, SCHEMA_VERSION};
use crate::context::RunContext;
use crate::error::{classify, CliError};
use crate::OracleArgs;

#[derive(Serialize)]
struct CoverSummary {
    source: String,
    candidates: usize,
    delta: f64,
    greedy_count: u64,
    /// Exact minimum from subset enumeration; absent past the candidate cap.
    certified_minimum: Option<u64>,
}

#[derive(Serialize)]
struct OracleSummary {
    schema: u32,
    run_id: String,
    command: &'static str,
    system: String,
    n: usize,
    delta: f64,
    cells: usize,
    count: u64,
    covered_mass: f64,
    cover: Option<CoverSummary>,
}

struct CoverOutcome {
    source: String,
    candidates: usize,
    delta: f64,
    greedy: unstable_entropy::CoverResult,
    certified: Option<unstable_entropy::CoverResult>,
}

/// Symbol word for CSV: digit string for alphabets up to 10, dash-joined
/// numbers beyond that.
fn word_string(word: &[u8]) -> String {
    if word.iter().all(|&s| s < 10) {
        word.iter().map(|s| char::from(b'0' + s)).collect()
    } else {
        word.iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

fn load_cover(path: &Path) -> Result<CoverOutcome, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let file: CoverInstanceFile = toml::from_str(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let candidates: Vec<Candidate> = file
        .candidates
        .iter()
        .map(|c| Candidate {
            center: c.center,
            lo: c.center - c.radius,
            hi: c.center + c.radius,
        })
        .collect();
    let instance = match (&file.interval, &file.atoms) {
        (Some(iv), None) => CoverInstance::interval(candidates, iv.lo, iv.hi),
        (None, Some(atoms)) => CoverInstance::weighted_points(candidates, atoms.clone()),
        _ => {
            return Err(CliError::Config(format!(
                "{}: need exactly one of interval or atoms",
                path.display()
            )))
        }
    }
    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let greedy = greedy_cover(&instance, file.delta).map_err(classify)?;
    let certified = if instance.candidates().len() <= BRUTE_FORCE_LIMIT {
        Some(brute_force_cover(&instance, file.delta).map_err(classify)?)
    } else {
        None
    };
    Ok(CoverOutcome {
        source: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        candidates: instance.candidates().len(),
        delta: file.delta,
        greedy,
        certified,
    })
}

pub fn run(args: &OracleArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::load(&args.common)?;
    let o = ctx.cfg.oracle.clone();

    let mut anchor_rng = stream(ctx.seed, Purpose::Anchors, 0);
    let anchor = ctx.measure.sample_point(0, &mut anchor_rng);
    let cond =
        disintegrate(&ctx.system, &ctx.measure, &ctx.scheme, &anchor).map_err(classify)?;
    let cells =
        refine_on_leaf(&ctx.system, &ctx.scheme, cond.cell(), o.n, ctx.budget).map_err(classify)?;
    let mut masses = Vec::with_capacity(cells.len());
    for cell in &cells {
        masses.push(trace_mass(&cond, &cell.trace).map_err(classify)?);
    }
    let counted = partition_count(&cond, &cells, o.delta).map_err(classify)?;

    let cover_path: Option<PathBuf> = args.cover_instance.clone().or_else(|| {
        o.cover_instance
            .as_ref()
            .map(|rel| resolve_relative(&ctx.config_path, rel))
    });
    let cover = cover_path.as_deref().map(load_cover).transpose()?;

    ctx.prepare_out()?;
    ctx.store_config()?;

    let system = ctx.system.identity();
    let mut cells_csv =
        String::from("run_id,system,n,cell_index,name,trace_lo,trace_hi,trace_word,mass\n");
    for (i, cell) in cells.iter().enumerate() {
        let name: Vec<String> = cell.name.iter().map(|v| v.to_string()).collect();
        let (lo, hi, word) = match &cell.trace {
            Trace::Interval { lo, hi } => (lo.to_string(), hi.to_string(), String::new()),
            Trace::Cylinder { future } => (String::new(), String::new(), word_string(future)),
        };
        cells_csv.push_str(&format!(
            "{},\"{system}\",{},{i},{},{lo},{hi},{word},{}\n",
            ctx.run_id,
            o.n,
            name.join("."),
            masses[i]
        ));
    }
    ctx.store("cells.csv", cells_csv.as_bytes())?;

    let count_row = CountRow {
        anchor_index: 0,
        formula: Formula::PartitionCount,
        method: CountMethod::Enumerated,
        n: o.n,
        epsilon: None,
        delta: o.delta,
        count: counted.count,
        covered_mass: counted.covered_mass,
    };
    let mut counts_csv = counts_header(false);
    counts_csv.push_str(&counts_line(&ctx.run_id, None, &system, &count_row));
    ctx.store("counts.csv", counts_csv.as_bytes())?;

    if let Some(c) = &cover {
        let certified_col = c
            .certified
            .as_ref()
            .map(|r| r.count.to_string())
            .unwrap_or_default();
        let mut cover_csv = String::from(
            "run_id,source,candidates,delta,method,count,covered_fraction,certified_minimum\n",
        );
        if let Some(b) = &c.certified {
            cover_csv.push_str(&format!(
                "{},{},{},{},brute,{},{},{certified_col}\n",
                ctx.run_id, c.source, c.candidates, c.delta, b.count, b.covered_fraction
            ));
        }
        cover_csv.push_str(&format!(
            "{},{},{},{},greedy,{},{},{certified_col}\n",
            ctx.run_id, c.source, c.candidates, c.delta, c.greedy.count, c.greedy.covered_fraction
        ));
        ctx.store("cover.csv", cover_csv.as_bytes())?;
    }

    let summary = OracleSummary {
        schema: SCHEMA_VERSION,
        run_id: ctx.run_id.clone(),
        command: "oracle",
        system,
        n: o.n,
        delta: o.delta,
        cells: cells.len(),
        count: counted.count,
        covered_mass: counted.covered_mass,
        cover: cover.as_ref().map(|c| CoverSummary {
            source: c.source.clone(),
            candidates: c.candidates,
            delta: c.delta,
            greedy_count: c.greedy.count,
            certified_minimum: c.certified.as_ref().map(|r| r.count),
        }),
    };
    ctx.store("summary.json", &to_json_bytes(&summary)?)?;

    let mut tasks = vec![TaskEntry {
        key: "cells".into(),
        status: "computed".into(),
    }];
    if cover.is_some() {
        tasks.push(TaskEntry {
            key: "cover".into(),
            status: "computed".into(),
        });
    }
    ctx.finish("oracle", tasks)
}
