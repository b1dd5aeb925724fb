use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const LEAN: &str = r#"
[dml.outcome]
n_trees = 30
max_depth = 12
min_leaf_size = 5
max_features = "all"
bootstrap = true
[dml.treatment]
n_trees = 30
max_depth = 12
min_leaf_size = 50
max_features = "all"
bootstrap = true
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agrocate"))
}

fn run(config: &Path, args: &[&str]) -> Output {
    bin().arg("--config").arg(config).args(args).output().unwrap()
}

fn ok(config: &Path, args: &[&str]) -> Output {
    let out = run(config, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{body}\n{LEAN}")).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Emits a synthetic dataset into `dir/out` and returns the config path.
fn emitted(dir: &Path, theta: &str, n: usize) -> PathBuf {
    let cfg = write_config(
        dir,
        &format!("seed = 11\n[paths]\noutput_dir = \"out\"\n[simulate.dgp]\nn = {n}\np = 9\ntheta = {theta}\n"),
    );
    ok(&cfg, &["simulate", "--emit-dataset"]);
    cfg
}

const WHEAT_BARLEY_OLIVE: &str = "parcel_id,year,crop_code,wkt
a,2020,wheat,\"POLYGON ((0 0, 5 0, 5 10, 0 10, 0 0))\"
b,2020,barley,\"POLYGON ((5 0, 8 0, 8 10, 5 10, 5 0))\"
c,2020,wheat,\"POLYGON ((10 0, 20 0, 10 10, 10 0))\"
d,2020,olive,\"POLYGON ((18 0, 30 0, 30 4, 18 4, 18 0))\"
";

fn env_table(columns: &[&str]) -> String {
    let mut s = format!("cell_id,year,{}\n", columns.join(","));
    for cell in 0..3 {
        let vals: Vec<String> = (0..columns.len()).map(|j| format!("{}", cell * 3 + j + 1)).collect();
        s.push_str(&format!("{cell},2020,{}\n", vals.join(",")));
    }
    s
}

const COVARIATES: [&str; 9] = ["ws", "ppt", "q", "def", "srad", "tmin", "tmax", "soilm", "soile"];

fn ingest_fixture(dir: &Path, env_columns: &[&str]) -> PathBuf {
    fs::write(dir.join("parcels.csv"), WHEAT_BARLEY_OLIVE).unwrap();
    fs::write(dir.join("env.csv"), env_table(env_columns)).unwrap();
    fs::write(dir.join("npp.csv"), "cell_id,year,npp\n0,2020,5500\n1,2020,5600\n2,2020,5450\n").unwrap();
    write_config(
        dir,
        "seed = 1\n[paths]\nparcels = \"parcels.csv\"\nenv = \"env.csv\"\noutcome = \"npp.csv\"\noutput_dir = \"out\"\n\
         [grid]\norigin_x = 0.0\norigin_y = 10.0\ncell_size = 10.0\nn_cols = 3\nn_rows = 1\n",
    )
}

#[test]
fn ingest_three_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = ingest_fixture(dir.path(), &COVARIATES);
    ok(&cfg, &["ingest"]);
    let out = dir.path().join("out");
    let report = json(&out.join("join_report.json"));
    assert_eq!(report["rows"], 3);
    assert_eq!(
        report["treated"].as_u64().unwrap() + report["control"].as_u64().unwrap(),
        3
    );
    assert_eq!(csv_rows(&out.join("dataset.csv")).len(), 3);
    for name in ["scaler.json", "cells.csv", "abundance.csv", "ingest_manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn ingest_abundances_match_hand_geometry() {
    let dir = TempDir::new().unwrap();
    let cfg = ingest_fixture(dir.path(), &COVARIATES);
    ok(&cfg, &["ingest"]);
    let rows = csv_rows(&dir.path().join("out/abundance.csv"));
    let get = |cell: &str, crop: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == cell && r[2] == crop)
            .map(|r| r[3].parse().unwrap())
            .unwrap_or(0.0)
    };
    let expected = [
        ("0", "wheat", 0.5),
        ("0", "barley", 0.3),
        ("1", "wheat", 0.5),
        ("1", "olive", 0.08),
        ("2", "olive", 0.4),
    ];
    for (cell, crop, v) in expected {
        assert!((get(cell, crop) - v).abs() <= 1e-9, "{cell} {crop}: {}", get(cell, crop));
    }
    assert_eq!(rows.len(), expected.len());
    let cells = csv_rows(&dir.path().join("out/cells.csv"));
    let div: Vec<f64> = cells.iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(div, vec![2.0, 2.0, 1.0]);
}

#[test]
fn ingest_missing_soil_column_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let cfg = ingest_fixture(dir.path(), &COVARIATES[..8]);
    let out = run(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("soile"), "{err}");
}

#[test]
fn fit_recovers_effect_and_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"constant\", value = 5.0 }", 2000);
    let out = dir.path().join("out");
    ok(&cfg, &["fit"]);
    let ate = json(&out.join("ate_summary.json"));
    let point = ate["estimate"]["point"].as_f64().unwrap();
    assert!((point - 5.0).abs() <= 0.3, "ate {point}");

    let first = fs::read(out.join("cate_report.csv")).unwrap();
    let model = fs::read(out.join("model.json")).unwrap();
    ok(&cfg, &["fit"]);
    assert_eq!(first, fs::read(out.join("cate_report.csv")).unwrap());
    assert_eq!(model, fs::read(out.join("model.json")).unwrap());

    let table = fs::read_to_string(out.join("first_stage.txt")).unwrap();
    assert!(table.contains("r2") && table.contains("f1"), "{table}");
}

#[test]
fn fit_with_open_trim_bounds_keeps_every_row() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"constant\", value = 1.0 }", 1000);
    ok(&cfg, &["--trim-lo", "0", "--trim-hi", "1", "fit"]);
    let ate = json(&dir.path().join("out/ate_summary.json"));
    let trim = &ate["trim"];
    assert_eq!(trim["kept_treated"].as_u64().unwrap() + trim["kept_control"].as_u64().unwrap(), 1000);
    let prop = csv_rows(&dir.path().join("out/propensity.csv"));
    assert_eq!(prop.len(), 1000);
    assert!(prop.iter().all(|r| r[3] == "1"));
}

#[test]
fn report_intervals_and_significance() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"linear\", a = 5.0, b = [1.0] }", 2000);
    ok(&cfg, &["fit"]);
    ok(&cfg, &["report"]);
    let out = dir.path().join("out");
    let rows = csv_rows(&out.join("cate_report.csv"));
    assert_eq!(rows.len(), 2000);
    for r in &rows {
        let v: Vec<f64> = r[3..7].iter().map(|s| s.parse().unwrap()).collect();
        let (theta, lo, hi) = (v[0], v[2], v[3]);
        assert!(lo <= theta && theta <= hi, "{r:?}");
    }
    let summary = json(&out.join("report_summary.json"));
    let share = summary["share_significant"].as_f64().unwrap();
    assert!(share >= 0.9, "share {share}");
}

#[test]
fn report_agricultural_only_drops_sparse_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"constant\", value = 2.0 }", 1000);
    let out = dir.path().join("out");
    ok(&cfg, &["fit"]);
    // cell 7 is the only one under the 0.5 coverage threshold
    let mut cells = String::from("cell_id,x_center,y_center,diversification,coverage\n");
    for i in 0..1000 {
        let cov = if i == 7 { 0.49 } else { 0.5 + (i % 5) as f64 * 0.1 };
        cells.push_str(&format!("{i},{i},0,1,{cov}\n"));
    }
    fs::write(out.join("cells.csv"), cells).unwrap();
    ok(&cfg, &["report", "--agricultural-only"]);
    let rows = csv_rows(&out.join("cate_report_agricultural.csv"));
    assert_eq!(rows.len(), 999);
    assert!(rows.iter().all(|r| r[0] != "7"));
    let summary = json(&out.join("report_summary_agricultural.json"));
    assert_eq!(summary["cells"], 999);
}

#[test]
fn report_without_model_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"constant\", value = 1.0 }", 200);
    let out = run(&cfg, &["report"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.json"));
}

#[test]
fn interpret_writes_tree_and_all_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = emitted(dir.path(), "{ form = \"linear\", a = 1.0, b = [1.0] }", 1500);
    let out = dir.path().join("out");
    ok(&cfg, &["fit"]);
    ok(&cfg, &["interpret"]);
    let curves: Vec<_> = fs::read_dir(out.join("curves")).unwrap().collect();
    assert_eq!(curves.len(), 9);
    for j in 1..=9 {
        let text = fs::read_to_string(out.join(format!("curves/x{j}.csv"))).unwrap();
        assert!(text.starts_with("feature,bin_center,mean_effect,ci_low,ci_high,n\n"));
    }
    let tree = fs::read_to_string(out.join("tree.txt")).unwrap();
    assert!(tree.lines().count() > 1);

    ok(&cfg, &["interpret", "--max-depth", "0"]);
    let tree = fs::read_to_string(out.join("tree.txt")).unwrap();
    assert_eq!(tree.lines().count(), 1, "{tree}");
    assert!(tree.contains("leaf"));
    let parsed = json(&out.join("tree.json"));
    assert_eq!(parsed["root"]["node"], "leaf");
}

#[test]
fn simulate_single_rep_and_repeatability() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 5\n[paths]\noutput_dir = \"out\"\n[simulate]\nreps = 2\n[simulate.dgp]\nn = 500\n",
    );
    let out = dir.path().join("out");
    ok(&cfg, &["simulate", "--reps", "1"]);
    let r = json(&out.join("mc_report.json"));
    assert_eq!(r["reps"], 1);
    assert_eq!(r["rmse"].as_f64().unwrap(), r["bias"].as_f64().unwrap().abs());

    ok(&cfg, &["simulate"]);
    let a = fs::read(out.join("mc_report.json")).unwrap();
    let b = fs::read(out.join("mc_reps.csv")).unwrap();
    ok(&cfg, &["simulate"]);
    assert_eq!(a, fs::read(out.join("mc_report.json")).unwrap());
    assert_eq!(b, fs::read(out.join("mc_reps.csv")).unwrap());
}

#[test]
fn bad_configs_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seeed = 3\n").unwrap();
    assert_eq!(run(&path, &["simulate"]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&missing, &["simulate"]).status.code(), Some(5));
    let cfg = write_config(dir.path(), "[paths]\noutput_dir = \"out\"\n");
    let out = run(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
