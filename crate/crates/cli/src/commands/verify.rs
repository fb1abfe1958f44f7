//! `verify`: run every property suite applicable to the configured system
//! and write a line-per-suite report. Inapplicable suites are listed as
//! skipped so their absence is visible, not silent.

use unstable_entropy::{run_all, suite_roster, SuiteConfig};

use crate::artifacts::TaskEntry;
use crate::context::RunContext;
use crate::error::{classify, CliError};
use crate::VerifyArgs;

pub fn run(args: &VerifyArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::load(&args.common)?;
    let v = ctx.cfg.verify.clone();
    let suite_cfg = SuiteConfig {
        seed: ctx.seed,
        pairs: v.pairs,
        anchors: v.anchors,
        n_max: v.n_max,
        budget: ctx.budget,
        du_scale: args.corrupt_leaf_metric,
    };
    let reports = run_all(&ctx.system, &ctx.scheme, &suite_cfg).map_err(classify)?;
    let (_, skipped) = suite_roster(&ctx.system);
    let skip_reason = if ctx.system.as_linear().is_some() {
        "needs a shift model"
    } else {
        "needs a linear model"
    };

    let mut text = format!("verify run {} seed={}\n", ctx.run_id, ctx.seed);
    let mut tasks = Vec::new();
    for name in &skipped {
        text.push_str(&format!("SKIP {name}: {skip_reason}\n"));
        tasks.push(TaskEntry {
            key: (*name).into(),
            status: "skipped".into(),
        });
    }
    let mut failures = Vec::new();
    for r in &reports {
        let tag = if r.passed() { "PASS" } else { "FAIL" };
        if !r.passed() {
            failures.push(r.name.clone());
        }
        text.push_str(&format!(
            "{tag} {} checked={} violations={} ({})\n",
            r.name, r.checked, r.violations, r.detail
        ));
        tasks.push(TaskEntry {
            key: r.name.clone(),
            status: if r.passed() { "pass".into() } else { "fail".into() },
        });
    }
    if failures.is_empty() {
        text.push_str(&format!("RESULT PASS seed={}\n", ctx.seed));
    } else {
        text.push_str(&format!("RESULT FAIL {} seed={}\n", failures.join(" "), ctx.seed));
    }

    ctx.prepare_out()?;
    ctx.store_config()?;
    ctx.store("report.txt", text.as_bytes())?;
    ctx.finish("verify", tasks)?;

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "{} (reproduce with seed {})",
            failures.join(", "),
            ctx.seed
        )))
    }
}
