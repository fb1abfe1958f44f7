//! `estimate`: one counting run over the configured window, written as a
//! long-format counts CSV plus a slope summary.

use serde::Serialize;
use unstable_entropy::katok_estimate;

use crate::artifacts::{counts_header, counts_line, to_json_bytes, LineRecord, TaskEntry};
use crate::config::SCHEMA_VERSION;
use crate::context::RunContext;
use crate::error::{classify, CliError};
use crate::CommonArgs;

#[derive(Serialize)]
struct EstimateSummary {
    schema: u32,
    run_id: String,
    command: &'static str,
    system: String,
    formula: String,
    /// First summary line's median slope; the headline number for
    /// single-scale runs.
    median_slope: Option<f64>,
    estimates: Vec<LineRecord>,
    rows: usize,
}

pub fn run(args: &CommonArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::load(args)?;
    let req = ctx.request()?;
    let outcome =
        katok_estimate(&ctx.system, &ctx.measure, &ctx.scheme, &req).map_err(classify)?;

    ctx.prepare_out()?;
    ctx.store_config()?;

    let system = ctx.system.identity();
    let mut csv = counts_header(false);
    for row in &outcome.rows {
        csv.push_str(&counts_line(&ctx.run_id, None, &system, row));
    }
    ctx.store("counts.csv", csv.as_bytes())?;

    let summary = EstimateSummary {
        schema: SCHEMA_VERSION,
        run_id: ctx.run_id.clone(),
        command: "estimate",
        system,
        formula: req.formula.to_string(),
        median_slope: outcome.estimates.first().map(|l| l.median_slope),
        estimates: outcome.estimates.iter().map(LineRecord::from).collect(),
        rows: outcome.rows.len(),
    };
    ctx.store("summary.json", &to_json_bytes(&summary)?)?;

    ctx.finish(
        "estimate",
        vec![TaskEntry {
            key: "base".into(),
            status: "computed".into(),
        }],
    )
}
