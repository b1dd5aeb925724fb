use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use agrocate::causal::{first_stage_diagnostic, run_dml, AteSummary, LinearCateModel};
use agrocate::data::{LabeledDataset, MissingYearPolicy, Scaler};
use agrocate::geo::{agricultural_mask, assemble_dataset, compute_abundance};
use agrocate::interpret::{effect_curve, fit_interpreter};
use agrocate::io::{self, read_dataset, read_json, CellLocation};
use agrocate::synth::{generate, monte_carlo};
use agrocate::Error;
use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, RunConfig};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Writes files under one directory and remembers their digests.
struct Outputs {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        }
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        io::write_string(&self.dir.join(name), contents)?;
        self.digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }
}

#[derive(Serialize)]
struct Manifest<'a, D: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    settings_sha256: String,
    inputs: BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
    details: D,
}

fn write_manifest<D: Serialize>(
    out: &mut Outputs,
    name: &str,
    command: &str,
    cfg: &RunConfig,
    inputs: BTreeMap<String, String>,
    details: D,
) -> Result<()> {
    let outputs = out.digests.clone();
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        settings_sha256: cfg.settings_digest(),
        inputs,
        outputs: &outputs,
        details,
    };
    out.json(name, &m)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let grid = cfg
        .grid
        .ok_or_else(|| ConfigError::Missing("a [grid] block is required for ingest".into()))?;
    grid.validate()?;
    let parcels_path = cfg.require("parcels", &cfg.paths.parcels)?;
    let env_path = cfg.require("env", &cfg.paths.env)?;
    let outcome_path = cfg.require("outcome", &cfg.paths.outcome)?;
    let parcels = io::read_parcels(&parcels_path)?;
    let env = io::read_env(&env_path)?;
    let outcome = io::read_outcome(&outcome_path)?;

    let abundance = compute_abundance(&parcels, &grid)?;
    let years: BTreeSet<i32> = match &cfg.study.years {
        Some(y) => y.iter().copied().collect(),
        None => env.records.iter().map(|r| r.year).collect(),
    };
    if years.is_empty() {
        return Err(Error::Empty("no study years".into()).into());
    }
    let policy = MissingYearPolicy {
        max_missing_fraction: cfg.study.max_missing_fraction,
    };
    let a = assemble_dataset(&abundance, &env, &outcome, &grid, &years, policy)?;

    let mut out = Outputs::new(cfg.output_dir());
    let locations: Vec<CellLocation> = a
        .cells
        .iter()
        .map(|c| CellLocation {
            cell_id: c.cell_id,
            x_center: c.x_center,
            y_center: c.y_center,
        })
        .collect();
    let dataset_path = out.dir.join("dataset.csv");
    io::write_dataset(&dataset_path, &locations, &a.dataset)?;
    out.digests.insert("dataset.csv".into(), file_digest(&dataset_path)?);
    out.json("scaler.json", &a.scaler)?;
    out.json("join_report.json", &a.report)?;

    let mut cells = String::from("cell_id,x_center,y_center,diversification,coverage\n");
    for c in &a.cells {
        let _ = writeln!(cells, "{},{},{},{},{}", c.cell_id, c.x_center, c.y_center, c.diversification, c.coverage);
    }
    out.text("cells.csv", &cells)?;
    let mut ab = String::from("cell_id,year,crop_code,abundance\n");
    for (cell, year, cy) in abundance.entries() {
        for (crop, v) in &cy.crops {
            let _ = writeln!(ab, "{cell},{year},{crop},{v}");
        }
    }
    out.text("abundance.csv", &ab)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("parcels".into(), file_digest(&parcels_path)?);
    inputs.insert("env".into(), file_digest(&env_path)?);
    inputs.insert("outcome".into(), file_digest(&outcome_path)?);
    write_manifest(&mut out, "ingest_manifest.json", "ingest", cfg, inputs, &a.report)?;

    let r = &a.report;
    println!(
        "ingest: {} cells ({} treated, {} control), median diversification {}",
        r.rows, r.treated, r.control, r.median_threshold
    );
    println!(
        "dropped: {} missing env, {} missing outcome, {} missing parcels, {} outside grid",
        r.dropped_missing_env, r.dropped_missing_outcome, r.dropped_missing_parcels, r.dropped_outside_grid
    );
    Ok(())
}

struct Inputs {
    locations: Vec<CellLocation>,
    dataset: LabeledDataset,
    scaler: Scaler,
    digests: BTreeMap<String, String>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let dpath = cfg.dataset_path();
    let spath = cfg.scaler_path();
    let file = read_dataset(&dpath)?;
    let scaler: Scaler = read_json(&spath)?;
    if scaler.column_names != file.dataset.x.column_names() {
        return Err(Error::DimensionMismatch(format!(
            "scaler columns {:?} do not match dataset columns {:?}",
            scaler.column_names,
            file.dataset.x.column_names()
        ))
        .into());
    }
    let mut digests = BTreeMap::new();
    digests.insert("dataset".into(), file_digest(&dpath)?);
    digests.insert("scaler".into(), file_digest(&spath)?);
    Ok(Inputs {
        locations: file.locations,
        dataset: file.dataset,
        scaler,
        digests,
    })
}

fn cate_report(
    locations: &[CellLocation],
    ds: &LabeledDataset,
    model: &LinearCateModel,
    propensity: &[f64],
    rows: &[usize],
    significance: f64,
) -> Result<(String, usize)> {
    let mut s = String::from("cell_id,x_center,y_center,theta,std_error,ci_low,ci_high,p_value,treated,propensity\n");
    let mut significant = 0;
    for &i in rows {
        let e = model.effect_standardized(ds.x.row(i))?;
        significant += usize::from(e.p_value < significance);
        let l = &locations[i];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            l.cell_id, l.x_center, l.y_center, e.point, e.std_error, e.ci_low, e.ci_high, e.p_value, ds.t[i], propensity[i]
        );
    }
    Ok((s, significant))
}

fn ate_text(a: &AteSummary) -> String {
    let e = &a.estimate;
    let t = &a.trim;
    format!(
        "ATE {:.6} (95% CI {:.6} to {:.6}), SE {:.6}, p = {:.3e}\n\
         mean outcome {:.6}; effect is {:.3}% of the mean outcome\n\
         kept {} rows ({} treated, {} control); removed {} ({} treated, {} control)\n",
        e.point,
        e.ci_low,
        e.ci_high,
        e.std_error,
        e.p_value,
        a.mean_outcome,
        a.percent_of_mean_outcome,
        t.kept(),
        t.kept_treated,
        t.kept_control,
        t.removed(),
        t.removed_treated,
        t.removed_control
    )
}

#[derive(Serialize)]
struct FitDetails<'a> {
    rows: usize,
    ate: &'a AteSummary,
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let inp = load_inputs(cfg)?;
    let ds = &inp.dataset;
    let selection = first_stage_diagnostic(ds, &cfg.dml, cfg.seed).context("first-stage selection diagnostic")?;
    let fit = run_dml(ds, &inp.scaler, &cfg.dml, cfg.seed)?;

    let mut out = Outputs::new(cfg.output_dir());
    let table = selection.render();
    out.text("first_stage.txt", &table)?;
    out.json("first_stage.json", &selection)?;

    let mut kept = vec![false; ds.len()];
    for &i in &fit.trimmed.kept_rows {
        kept[i] = true;
    }
    let mut prop = String::from("cell_id,propensity,treatment,kept\n");
    for (i, l) in inp.locations.iter().enumerate() {
        let _ = writeln!(prop, "{},{},{},{}", l.cell_id, fit.propensity[i], ds.t[i], u8::from(kept[i]));
    }
    out.text("propensity.csv", &prop)?;
    out.json("model.json", &fit.model)?;

    let mut coef = String::from("term,estimate,std_error,ci_low,ci_high,p_value\n");
    for (name, e) in fit.model.coefficient_estimates() {
        let _ = writeln!(coef, "{name},{},{},{},{},{}", e.point, e.std_error, e.ci_low, e.ci_high, e.p_value);
    }
    out.text("coefficients.csv", &coef)?;
    out.json("ate_summary.json", &fit.ate)?;
    let summary = ate_text(&fit.ate);
    out.text("ate_summary.txt", &summary)?;

    let all: Vec<usize> = (0..ds.len()).collect();
    let (report, _) = cate_report(&inp.locations, ds, &fit.model, &fit.propensity, &all, cfg.report.significance)?;
    out.text("cate_report.csv", &report)?;

    let details = FitDetails {
        rows: ds.len(),
        ate: &fit.ate,
    };
    write_manifest(&mut out, "fit_manifest.json", "fit", cfg, inp.digests, details)?;
    print!("{table}\n{summary}");
    Ok(())
}

struct PropensityFile {
    scores: Vec<f64>,
    kept: Vec<bool>,
}

/// Reads `propensity.csv` back, aligned with the dataset rows by cell id.
fn read_propensity(path: &Path, locations: &[CellLocation]) -> Result<PropensityFile> {
    let text = io::read_string(path)?;
    let file = path.display().to_string();
    let mut by_cell = BTreeMap::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let parse_err = |message: String| Error::Parse {
            file: file.clone(),
            line: k as u64 + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", f.len())).into());
        }
        let cell: u64 = f[0].parse().map_err(|_| parse_err(format!("bad cell_id `{}`", f[0])))?;
        let p: f64 = f[1].parse().map_err(|_| parse_err(format!("bad propensity `{}`", f[1])))?;
        by_cell.insert(cell, (p, f[3] == "1"));
    }
    let mut scores = Vec::with_capacity(locations.len());
    let mut kept = Vec::with_capacity(locations.len());
    for l in locations {
        let (p, k) = by_cell.get(&l.cell_id).copied().ok_or_else(|| Error::Parse {
            file: file.clone(),
            line: 0,
            message: format!("no propensity for cell {}", l.cell_id),
        })?;
        scores.push(p);
        kept.push(k);
    }
    Ok(PropensityFile { scores, kept })
}

fn read_coverage(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let text = io::read_string(path)?;
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() == 5)
            .then(|| Some((f[0].parse::<u64>().ok()?, f[4].parse::<f64>().ok()?)))
            .flatten();
        let (cell, cov) = parsed.ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            line: k as u64 + 1,
            message: "expected cell_id,x_center,y_center,diversification,coverage".into(),
        })?;
        out.insert(cell, cov);
    }
    Ok(out)
}

fn load_model(cfg: &RunConfig) -> Result<LinearCateModel> {
    let path = cfg.output_dir().join("model.json");
    if !path.exists() {
        return Err(Error::Io {
            path: path.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no fitted model; run `fit` first"),
        }
        .into());
    }
    Ok(read_json(&path)?)
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    cells: usize,
    significant: usize,
    share_significant: f64,
    significance: f64,
    agricultural_only: bool,
    agricultural_threshold: Option<f64>,
    ate: &'a AteSummary,
}

pub fn report(cfg: &RunConfig, agricultural_only: bool) -> Result<()> {
    let model = load_model(cfg)?;
    let inp = load_inputs(cfg)?;
    let dir = cfg.output_dir();
    let prop = read_propensity(&dir.join("propensity.csv"), &inp.locations)?;
    let ate: AteSummary = read_json(&dir.join("ate_summary.json"))?;
    let mut rows: Vec<usize> = (0..inp.dataset.len()).collect();
    if agricultural_only {
        let coverage = read_coverage(&dir.join("cells.csv"))?;
        let mask = agricultural_mask(&coverage, cfg.report.agricultural_threshold)?;
        rows.retain(|&i| mask.contains(&inp.locations[i].cell_id));
    }
    let (csv, significant) = cate_report(
        &inp.locations,
        &inp.dataset,
        &model,
        &prop.scores,
        &rows,
        cfg.report.significance,
    )?;
    let suffix = if agricultural_only { "_agricultural" } else { "" };
    let mut out = Outputs::new(dir);
    out.text(&format!("cate_report{suffix}.csv"), &csv)?;
    let summary = ReportSummary {
        cells: rows.len(),
        significant,
        share_significant: if rows.is_empty() { 0.0 } else { significant as f64 / rows.len() as f64 },
        significance: cfg.report.significance,
        agricultural_only,
        agricultural_threshold: agricultural_only.then_some(cfg.report.agricultural_threshold),
        ate: &ate,
    };
    out.json(&format!("report_summary{suffix}.json"), &summary)?;
    print!("{}", ate_text(&ate));
    println!(
        "{} of {} cells significant at p < {} ({:.1}%)",
        significant,
        rows.len(),
        cfg.report.significance,
        100.0 * summary.share_significant
    );
    Ok(())
}

pub fn interpret(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg)?;
    let inp = load_inputs(cfg)?;
    let dir = cfg.output_dir();
    let prop = read_propensity(&dir.join("propensity.csv"), &inp.locations)?;
    let rows: Vec<usize> = (0..inp.dataset.len()).filter(|&i| prop.kept[i]).collect();
    let x = inp.dataset.x.select_rows(&rows);
    if model.column_names != x.column_names() {
        return Err(Error::DimensionMismatch("model and dataset covariates differ".into()).into());
    }
    let cate: Vec<f64> = model.cate_rows(&x)?.iter().map(|e| e.point).collect();
    let tree = fit_interpreter(&x, &cate, &model.scaler, &cfg.interpreter.params())?;

    let mut out = Outputs::new(dir);
    let text = tree.render();
    out.text("tree.txt", &text)?;
    out.json("tree.json", &tree)?;
    for name in &model.column_names {
        let curve = effect_curve(&model, &x, name, cfg.interpreter.n_bins)?;
        out.text(&format!("curves/{name}.csv"), &curve.to_csv())?;
    }
    print!("{text}");
    Ok(())
}

pub fn simulate(cfg: &RunConfig, emit_dataset: bool, reps: Option<usize>) -> Result<()> {
    let mut out = Outputs::new(cfg.output_dir());
    if emit_dataset {
        let spec = agrocate::synth::DgpSpec {
            seed: cfg.seed,
            ..cfg.simulate.dgp.clone()
        };
        let g = generate(&spec)?;
        let locations: Vec<CellLocation> = (0..spec.n)
            .map(|i| CellLocation {
                cell_id: i as u64,
                x_center: i as f64,
                y_center: 0.0,
            })
            .collect();
        let path = out.dir.join("dataset.csv");
        io::write_dataset(&path, &locations, &g.dataset)?;
        out.digests.insert("dataset.csv".into(), file_digest(&path)?);
        out.json("scaler.json", &g.scaler)?;
        let mut truth = String::from("cell_id,theta,propensity\n");
        for i in 0..spec.n {
            let _ = writeln!(truth, "{i},{},{}", g.theta[i], g.propensity[i]);
        }
        out.text("truth.csv", &truth)?;
        write_manifest(&mut out, "simulate_manifest.json", "simulate", cfg, BTreeMap::new(), &spec)?;
        println!("emitted {} rows ({} treated)", spec.n, g.dataset.n_treated());
        return Ok(());
    }

    let reps = reps.unwrap_or(cfg.simulate.reps);
    let report = monte_carlo(&cfg.simulate.dgp, &cfg.dml, reps, cfg.seed)?;
    out.json("mc_report.json", &report)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("rep,seed,true_ate,naive_ate,ate,std_error,ci_low,ci_high,covered,kept,error\n");
    for r in &report.results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.seed,
            r.true_ate,
            r.naive_ate,
            opt(r.ate),
            opt(r.std_error),
            opt(r.ci_low),
            opt(r.ci_high),
            r.covered.map(|c| u8::from(c).to_string()).unwrap_or_default(),
            r.kept.map(|k| k.to_string()).unwrap_or_default(),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out.text("mc_reps.csv", &csv)?;
    write_manifest(&mut out, "simulate_manifest.json", "simulate", cfg, BTreeMap::new(), &cfg.simulate)?;
    println!(
        "{} reps ({} failed): bias {:.6}, rmse {:.6}, coverage {:.3}, mean CI width {:.6}",
        report.reps, report.failed, report.bias, report.rmse, report.coverage, report.mean_ci_width
    );
    Ok(())
}
