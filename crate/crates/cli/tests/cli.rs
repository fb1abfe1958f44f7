//! End-to-end runs of the compiled binary against temp configs: exit codes,
//! file shapes, determinism, resumption, and fault surfacing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn cat_partition_config(seed: u64) -> String {
    format!(
        r#"schema = 1

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
seed = {seed}
out_dir = "out"

[verify]
pairs = 300
anchors = 2
n_max = 5
"#
    )
}

fn coin_config() -> &'static str {
    r#"schema = 1

[system]
kind = "shift"
probs = [0.5, 0.5]

[partition]
leaf_halflength = 0.9

[estimate]
formula = "partition"
n_min = 2
n_max = 8
fit_lo = 2
fit_hi = 8
deltas = [0.25]
anchor_count = 2

[run]
seed = 7
out_dir = "out"

[verify]
pairs = 400
anchors = 2
n_max = 6

[oracle]
n = 3
delta = 0.25
"#
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).filter(|l| !l.is_empty()).collect()
}

#[test]
fn estimate_writes_deterministic_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cat.toml", &cat_partition_config(11));
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    let r1 = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_eq!(code(&r1), 0, "{}", stderr(&r1));

    let summary = json(&out1.join("summary.json"));
    let slope = summary["median_slope"].as_f64().unwrap();
    assert!((0.8..1.1).contains(&slope), "median slope {slope}");
    assert_eq!(summary["command"], "estimate");
    assert_eq!(summary["schema"], 1);

    let counts = read(&out1.join("counts.csv"));
    assert!(counts.starts_with(
        "run_id,system,formula,anchor_index,n,epsilon,delta,method,count,covered_mass,naive_rate\n"
    ));
    // 4 anchors x n in 4..=8 x 1 delta.
    assert_eq!(data_lines(&counts).len(), 20);

    // Manifest lists every file with its actual content hash; the config
    // hash matches the stored copy byte for byte.
    let manifest = json(&out1.join("manifest.json"));
    assert_eq!(manifest["artifact_version"], 1);
    assert_eq!(manifest["seed"], 11);
    let stored_cfg = fs::read(out1.join("config.toml")).unwrap();
    assert_eq!(
        manifest["config_sha256"].as_str().unwrap(),
        sha256_hex(&stored_cfg)
    );
    assert_eq!(stored_cfg, fs::read(&cfg).unwrap());
    let outputs = manifest["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|o| o["file"].as_str().unwrap()).collect();
    assert_eq!(names, ["config.toml", "counts.csv", "summary.json"]);
    for entry in outputs {
        let bytes = fs::read(out1.join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }

    let r2 = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&r2), 0, "{}", stderr(&r2));
    for file in ["counts.csv", "summary.json"] {
        assert_eq!(
            fs::read(out1.join(file)).unwrap(),
            fs::read(out2.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn oversized_grid_cell_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    let raw = cat_partition_config(11).replace("grid_k = 10", "grid_k = 5");
    let cfg = write(dir.path(), "cat.toml", &raw);
    let out = dir.path().join("never");

    let r = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    let msg = stderr(&r);
    assert!(msg.contains("exceeds"), "{msg}");
    assert!(msg.contains("epsilon0"), "{msg}");
    assert!(msg.contains("cat.toml:"), "missing line reference: {msg}");
    assert!(!out.exists(), "validation failure must not create outputs");
}

#[test]
fn malformed_toml_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "schema = [broken\n");
    let r = run(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    assert!(stderr(&r).contains("bad.toml"), "{}", stderr(&r));
}

#[test]
fn seed_override_changes_the_run_identity() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cat.toml", &cat_partition_config(11));
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("run{i}"))).collect();

    for (out, seed) in outs.iter().zip(["5", "5", "6"]) {
        let r = run(&[
            "estimate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let ids: Vec<String> = outs
        .iter()
        .map(|out| json(&out.join("summary.json"))["run_id"].as_str().unwrap().into())
        .collect();
    assert_eq!(ids[0], ids[1]);
    assert_ne!(ids[0], ids[2]);
    assert_eq!(
        fs::read(outs[0].join("counts.csv")).unwrap(),
        fs::read(outs[1].join("counts.csv")).unwrap()
    );
}

#[test]
fn verify_passes_on_the_cat_map_and_skips_geometry_on_shifts() {
    let dir = TempDir::new().unwrap();
    let cat = write(dir.path(), "cat.toml", &cat_partition_config(11));
    let out = dir.path().join("vcat");
    let r = run(&["verify", "--config", cat.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let report = read(&out.join("report.txt"));
    assert!(report.contains("PASS geometry.metric_order"), "{report}");
    assert!(report.contains("SKIP estimators.symbolic_count_consistency"), "{report}");
    assert!(report.ends_with("RESULT PASS seed=11\n"), "{report}");

    let coin = write(dir.path(), "coin.toml", coin_config());
    let out2 = dir.path().join("vcoin");
    let r2 = run(&["verify", "--config", coin.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&r2), 0, "{}", stderr(&r2));
    let report2 = read(&out2.join("report.txt"));
    assert!(
        report2.contains("SKIP geometry.metric_order: needs a linear model"),
        "{report2}"
    );
    assert!(report2.contains("PASS measures.disintegration_battery"), "{report2}");
    assert!(report2.contains("RESULT PASS"), "{report2}");
}

#[test]
fn corrupted_leaf_metric_is_reported_with_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cat.toml", &cat_partition_config(11));
    let out = dir.path().join("vbad");
    let r = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--corrupt-leaf-metric",
        "0.5",
    ]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    let msg = stderr(&r);
    assert!(msg.contains("geometry.metric_order"), "{msg}");
    assert!(msg.contains("seed 11"), "{msg}");
    let report = read(&out.join("report.txt"));
    assert!(report.contains("FAIL geometry.metric_order"), "{report}");
    assert!(report.contains("RESULT FAIL"), "{report}");
    assert!(out.join("manifest.json").exists());
}

fn sweep_config() -> String {
    cat_partition_config(11)
        .replace("formula = \"partition\"", "formula = \"ball\"\nepsilons = [0.1]\nmethods = [\"oracle\"]")
        + "\n[sweep]\nepsilons = [0.1, 0.05, 0.025]\n"
}

#[test]
fn sweep_reports_pairwise_differences_and_resumes_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "sweep.toml", &sweep_config());
    let out = dir.path().join("sweep");

    let r = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let summary = json(&out.join("summary.json"));
    let tasks = summary["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 3);
    assert!(tasks.iter().all(|t| t["status"] == "computed"));
    let diffs = summary["slope_differences"].as_array().unwrap();
    assert_eq!(diffs.len(), 3, "three tasks give three pairs");
    for d in diffs {
        let a = d["slope_a"].as_f64().unwrap();
        let b = d["slope_b"].as_f64().unwrap();
        assert_eq!(d["difference"].as_f64().unwrap(), a - b);
    }

    let first_counts = fs::read(out.join("counts.csv")).unwrap();
    let text = String::from_utf8(first_counts.clone()).unwrap();
    assert!(text.starts_with(
        "run_id,task,system,formula,anchor_index,n,epsilon,delta,method,count,covered_mass,naive_rate\n"
    ));

    // Manifest lists the per-task files alongside the merged artifacts.
    let manifest = json(&out.join("manifest.json"));
    let names: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["file"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"tasks/k10_e0.05_d0.1_a4.json"), "{names:?}");

    // Simulate an interrupted run: merged artifacts and one task file are
    // missing, two task files survive. The rerun loads the survivors and
    // recomputes the rest, and the merged CSV comes out byte-identical.
    fs::remove_file(out.join("counts.csv")).unwrap();
    fs::remove_file(out.join("summary.json")).unwrap();
    fs::remove_file(out.join("manifest.json")).unwrap();
    fs::remove_file(out.join("tasks/k10_e0.05_d0.1_a4.json")).unwrap();

    let r2 = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r2), 0, "{}", stderr(&r2));
    assert_eq!(fs::read(out.join("counts.csv")).unwrap(), first_counts);
    let summary2 = json(&out.join("summary.json"));
    let statuses: Vec<&str> = summary2["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["status"].as_str().unwrap())
        .collect();
    assert_eq!(statuses.iter().filter(|s| **s == "cached").count(), 2);
    assert_eq!(statuses.iter().filter(|s| **s == "computed").count(), 1);
}

#[test]
fn empty_sweep_grid_exits_2() {
    let dir = TempDir::new().unwrap();
    let raw = sweep_config().replace("epsilons = [0.1, 0.05, 0.025]", "epsilons = []");
    let cfg = write(dir.path(), "sweep.toml", &raw);
    let out = dir.path().join("never");
    let r = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    assert!(stderr(&r).contains("empty"), "{}", stderr(&r));
    assert!(!out.exists());
}

#[test]
fn oracle_dumps_enumerated_cells_with_exact_masses() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "coin.toml", coin_config());
    let out = dir.path().join("oracle");
    let r = run(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let cells = read(&out.join("cells.csv"));
    let rows = data_lines(&cells);
    assert_eq!(rows.len(), 4, "{cells}");
    for row in &rows {
        assert!(row.ends_with(",0.25"), "exact quarter mass: {row}");
    }

    // Fair coin, n=3, delta=0.25: four quarter cells, minimal count 3.
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["cells"], 4);
    assert_eq!(summary["count"], 3);
    assert_eq!(summary["cover"], serde_json::Value::Null);

    // Cat map at n=1: the single cell spans the whole leaf piece.
    let cat = write(dir.path(), "cat.toml", &(cat_partition_config(11) + "\n[oracle]\nn = 1\n"));
    let out2 = dir.path().join("oracle_cat");
    let r2 = run(&["oracle", "--config", cat.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(code(&r2), 0, "{}", stderr(&r2));
    let cat_cells = read(&out2.join("cells.csv"));
    assert_eq!(data_lines(&cat_cells).len(), 1, "{cat_cells}");
    assert_eq!(json(&out2.join("summary.json"))["count"], 1);
}

#[test]
fn oracle_certifies_small_cover_instances() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "coin.toml", coin_config());
    // Twenty atoms of weight 0.05 at the candidate centers; delta 0.2 leaves
    // sixteen atoms to capture, and each ball of radius 0.06 captures at
    // most three, so the minimum cover is six balls.
    let mut instance = String::from("delta = 0.2\natoms = [\n");
    for i in 0..20 {
        let c = 0.025 + 0.05 * i as f64;
        instance.push_str(&format!("  [{c}, 0.05],\n"));
    }
    instance.push_str("]\n");
    for i in 0..20 {
        let c = 0.025 + 0.05 * i as f64;
        instance.push_str(&format!("\n[[candidates]]\ncenter = {c}\nradius = 0.06\n"));
    }
    let inst = write(dir.path(), "cover20.toml", &instance);
    let out = dir.path().join("oracle");

    let r = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--cover-instance",
        inst.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["cover"]["certified_minimum"], 6);
    assert_eq!(summary["cover"]["greedy_count"], 6);
    assert_eq!(summary["cover"]["candidates"], 20);

    let cover = read(&out.join("cover.csv"));
    assert!(cover.starts_with(
        "run_id,source,candidates,delta,method,count,covered_fraction,certified_minimum\n"
    ));
    let rows = data_lines(&cover);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",brute,6,"), "{cover}");
    assert!(rows[1].contains(",greedy,6,"), "{cover}");
}

#[test]
fn exhausted_budget_exits_3_without_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cat.toml", &cat_partition_config(11));
    let out = dir.path().join("never");
    let r = run(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--budget",
        "10",
    ]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    assert!(stderr(&r).contains("budget"), "{}", stderr(&r));
    assert!(!out.exists());
}
