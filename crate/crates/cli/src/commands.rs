use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use mbmm::dataset::{binarize, compute_thresholds, load_table, BinaryDataset, ThresholdSpec};
use mbmm::postprocess::export::{
    join_geojson, read_assignments_csv, write_assignments_csv, write_profiles_csv, write_theta_csv,
};
use mbmm::postprocess::{summarize, PipelineSummary, ProfileSummary};
use mbmm::regression::{
    build_design, fit_logistic, forest_plot_json, odds_ratios, write_odds_csv, DesignSpec,
    PatientTable,
};
use mbmm::sampler::{run_mc3, PosteriorSamples};
use mbmm::verify::{run_suite, Suite};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::staging::Staging;

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Compute(anyhow::Error),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Compute(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Compute(e) => write!(f, "computation failed: {e:#}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<mbmm::Error> for Failure {
    fn from(e: mbmm::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Compute(e.into())
        }
    }
}

pub type CmdResult = Result<(), Failure>;

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn failed(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn failed(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Compute(e.into()))
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::Validation(anyhow!("no {what} given (use {flag} or the config file)")))
}

fn manifest(config: &RunConfig, command: &str, started: Instant, extra: Value, staging: &Staging) -> Value {
    json!({
        "tool": "mbmm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
        "outputs": staging.written(),
        "details": extra,
    })
}

fn finish(mut staging: Staging, config: &RunConfig, command: &str, started: Instant, extra: Value) -> CmdResult {
    let m = manifest(config, command, started, extra, &staging);
    staging.write_json(&format!("{command}_manifest.json"), &m).failed()?;
    staging.finish().failed()
}

fn binarize_input(config: &RunConfig, raw: &Path) -> Result<(BinaryDataset, ThresholdSpec), Failure> {
    let opts = config.table.load_options().invalid()?;
    let table = load_table(raw, &opts).invalid()?;
    let spec = compute_thresholds(&table, &config.thresholds)?;
    let data = binarize(&table, &spec)?;
    Ok((data, spec))
}

pub fn cmd_binarize(config: &RunConfig) -> CmdResult {
    let started = Instant::now();
    let raw = require(&config.input.raw_table, "raw table", "--input")?;
    let (data, spec) = binarize_input(config, raw)?;
    let mut staging = Staging::begin(
        &config.output_dir,
        "binarize",
        &["binary.csv", "thresholds.json"],
        &[raw],
    )
    .invalid()?;
    staging.write("binary.csv", |p| Ok(data.write_csv(p)?)).failed()?;
    staging.write("thresholds.json", |p| Ok(spec.write_json(p)?)).failed()?;
    println!(
        "binarized {} units x {} variables ({} missing cells) into {}",
        data.n(),
        data.p(),
        data.n_missing(),
        staging.dir().display()
    );
    let extra = json!({"n_units": data.n(), "n_variables": data.p(), "missing_cells": data.n_missing()});
    finish(staging, config, "binarize", started, extra)
}

/// Everything `export-geojson` and later steps need from a fit.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub unit_ids: Vec<String>,
    pub column_names: Vec<String>,
    pub k_map: usize,
    pub k_nonempty_histogram: Vec<(usize, usize)>,
    /// K_map profiles before undersized ones are dissolved.
    pub raw: ProfileSummary,
    pub reclassified: ProfileSummary,
}

fn write_reclassification_csv(summary: &PipelineSummary, ids: &[String], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "from_profile", "to_profile"])?;
    for r in &summary.reclassified.reclassification_log {
        w.write_record([ids[r.unit].clone(), (r.from + 1).to_string(), (r.to + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_histogram_csv(hist: &[(usize, usize)], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k_nonempty", "count"])?;
    for (k, c) in hist {
        w.write_record([k.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_imputations_csv(samples: &PosteriorSamples, data: &BinaryDataset, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "variable", "prob_one"])?;
    for c in &samples.imputations {
        w.write_record([
            data.unit_ids()[c.unit].clone(),
            data.column_names()[c.variable].clone(),
            format!("{:.6}", c.prob_one),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_fit(config: &RunConfig) -> CmdResult {
    let started = Instant::now();
    let mut inputs: Vec<&Path> = Vec::new();
    let (data, thresholds) = match (&config.input.binary_matrix, &config.input.raw_table) {
        (Some(binary), _) => {
            inputs.push(binary);
            (BinaryDataset::read_csv(binary).invalid()?, None)
        }
        (None, Some(raw)) => {
            inputs.push(raw);
            let (d, s) = binarize_input(config, raw)?;
            (d, Some(s))
        }
        (None, None) => {
            return Err(Failure::Validation(anyhow!(
                "no binary matrix or raw table given (use --input, --raw or the config file)"
            )))
        }
    };
    if config.priors.k_max < 1 {
        return Err(Failure::Validation(anyhow!("k_max must be at least 1")));
    }

    let mut outputs = vec![
        "samples.jsonl",
        "assignments.csv",
        "assignments_raw.csv",
        "theta.csv",
        "theta_raw.csv",
        "profiles.csv",
        "profiles_raw.csv",
        "reclassification.csv",
        "k_histogram.csv",
        "imputations.csv",
        "profile_summary.json",
        "fit_summary.json",
    ];
    if thresholds.is_some() {
        outputs.extend(["binary.csv", "thresholds.json"]);
    }
    let mut staging = Staging::begin(&config.output_dir, "fit", &outputs, &inputs).invalid()?;
    if let Some(spec) = &thresholds {
        staging.write("binary.csv", |p| Ok(data.write_csv(p)?)).failed()?;
        staging.write("thresholds.json", |p| Ok(spec.write_json(p)?)).failed()?;
    }

    log::info!(
        "sampling {} units x {} variables: {} chains, {} iterations",
        data.n(),
        data.p(),
        config.mcmc.n_chains,
        config.mcmc.n_iterations
    );
    let samples = run_mc3(&data, &config.priors, &config.mcmc)?;
    staging
        .write("samples.jsonl", |p| Ok(samples.write_draws_jsonl(p)?))
        .failed()?;
    let summary = summarize(&samples, &config.postprocess)?;

    let ids = data.unit_ids();
    let names = data.column_names();
    staging
        .write("assignments.csv", |p| Ok(write_assignments_csv(&summary.reclassified, ids, p)?))
        .failed()?;
    staging
        .write("assignments_raw.csv", |p| Ok(write_assignments_csv(&summary.raw, ids, p)?))
        .failed()?;
    staging
        .write("theta.csv", |p| Ok(write_theta_csv(&summary.reclassified, names, p)?))
        .failed()?;
    staging
        .write("theta_raw.csv", |p| Ok(write_theta_csv(&summary.raw, names, p)?))
        .failed()?;
    staging
        .write("profiles.csv", |p| Ok(write_profiles_csv(&summary.reclassified, p)?))
        .failed()?;
    staging
        .write("profiles_raw.csv", |p| Ok(write_profiles_csv(&summary.raw, p)?))
        .failed()?;
    staging
        .write("reclassification.csv", |p| write_reclassification_csv(&summary, ids, p))
        .failed()?;
    staging
        .write("k_histogram.csv", |p| write_histogram_csv(&summary.k_nonempty_histogram, p))
        .failed()?;
    if !samples.imputations.is_empty() {
        staging
            .write("imputations.csv", |p| write_imputations_csv(&samples, &data, p))
            .failed()?;
    }
    let file = SummaryFile {
        unit_ids: ids.to_vec(),
        column_names: names.to_vec(),
        k_map: summary.k_map,
        k_nonempty_histogram: summary.k_nonempty_histogram.clone(),
        raw: summary.raw.clone(),
        reclassified: summary.reclassified.clone(),
    };
    staging.write_json("profile_summary.json", &file).failed()?;

    let swap_rate = samples.swaps.acceptance_rate();
    let diagnostics = json!({
        "retained_draws": samples.draws.len(),
        "k_map": summary.k_map,
        "k_nonempty_histogram": summary.k_nonempty_histogram,
        "profiles_after_reclassification": summary.reclassified.k,
        "reclassified_units": summary.reclassified.reclassification_log.len(),
        "pivot_draw": summary.relabeled.pivot,
        "relabeled_draws": summary.relabeled.draws.len(),
        "swap_acceptance": swap_rate,
        "swap_pairs": samples.swaps.pairs,
        "chains": samples.chains,
        "k_nonempty_ess": samples.k_nonempty_ess,
        "log_likelihood_ess": samples.log_likelihood_ess,
        "warnings": samples.warnings,
    });
    staging.write_json("fit_summary.json", &diagnostics).failed()?;

    println!(
        "K_map = {} ({} profiles after reclassification), {} retained draws, swap acceptance {}",
        summary.k_map,
        summary.reclassified.k,
        samples.draws.len(),
        swap_rate.map_or("n/a".into(), |r| format!("{r:.3}"))
    );
    let extra = json!({
        "retained_draws": samples.draws.len(),
        "swap_acceptance": swap_rate,
        "k_map": summary.k_map,
    });
    finish(staging, config, "fit", started, extra)
}

fn write_coefficients_csv(names: &[String], draws: &[Vec<f64>], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for d in draws {
        w.write_record(d.iter().map(|v| format!("{v:.9}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_regress(config: &RunConfig) -> CmdResult {
    let started = Instant::now();
    let reg = &config.regression;
    let patients_path = require(&config.input.patients, "patient table", "--patients")?;
    let default_assign = config.output_dir.join("assignments.csv");
    let assign_path = config.input.assignments.as_deref().unwrap_or(&default_assign);
    let patients = PatientTable::load_csv(patients_path, &reg.columns).invalid()?;
    if patients.n() == 0 {
        return Err(Failure::Validation(anyhow!("patient table is empty")));
    }
    let assignments: HashMap<String, usize> = read_assignments_csv(assign_path).invalid()?;
    let n_profiles = match reg.n_profiles {
        Some(k) => k,
        None => assignments.values().copied().max().unwrap_or(0),
    };
    let spec = DesignSpec {
        n_profiles,
        reference_profile: reg.reference_profile,
        covariates: reg.covariates.clone(),
    };
    let design = build_design(&patients, &assignments, &spec)?;
    let collinear = design.collinear_columns();
    if !collinear.is_empty() {
        return Err(Failure::Validation(anyhow!(
            "design matrix is rank deficient; collinear columns: {}",
            collinear.join(", ")
        )));
    }

    let outputs = ["odds_ratios.csv", "forest_plot.json", "coefficients.csv", "regression_summary.json"];
    let mut staging = Staging::begin(
        &config.output_dir,
        "regress",
        &outputs,
        &[patients_path, assign_path],
    )
    .invalid()?;
    let samples = fit_logistic(&design, &patients.outcome, reg.prior_sd, &reg.mcmc)?;
    let table = odds_ratios(&samples, reg.level, reg.point)?;
    staging.write("odds_ratios.csv", |p| Ok(write_odds_csv(&table, p)?)).failed()?;
    staging.write_json("forest_plot.json", &forest_plot_json(&table)).failed()?;
    staging
        .write("coefficients.csv", |p| write_coefficients_csv(&samples.names, &samples.draws, p))
        .failed()?;
    let summary = json!({
        "n_obs": design.n_obs(),
        "columns": samples.names,
        "posterior_mean": samples.posterior_mean(),
        "map_estimate": samples.map_estimate,
        "acceptance_rate": samples.acceptance_rate,
        "ess": samples.ess,
        "retained_draws": samples.draws.len(),
        "warnings": samples.warnings,
    });
    staging.write_json("regression_summary.json", &summary).failed()?;

    println!("{:<28} {:>9} {:>9} {:>9}", "term", "OR", "lower", "upper");
    for r in &table {
        println!("{:<28} {:>9.3} {:>9.3} {:>9.3}", r.name, r.odds_ratio, r.lower, r.upper);
    }
    let extra = json!({
        "retained_draws": samples.draws.len(),
        "acceptance_rate": samples.acceptance_rate,
    });
    finish(staging, config, "regress", started, extra)
}

pub fn cmd_verify(config: &RunConfig, quick: bool, report: Option<&Path>) -> CmdResult {
    let suite = if quick { Suite::Quick } else { Suite::Full };
    let result = run_suite(suite, config.seed);
    for c in &result.checks {
        println!(
            "{} {:<26} {:>7.1}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    if let Some(path) = report {
        let mut text = serde_json::to_string_pretty(&result).failed()?;
        text.push('\n');
        fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .failed()?;
    }
    let failed = result.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Verification(format!(
            "{failed} of {} checks failed",
            result.checks.len()
        )));
    }
    println!("all {} checks passed", result.checks.len());
    Ok(())
}

pub fn cmd_export_geojson(config: &RunConfig) -> CmdResult {
    let started = Instant::now();
    let default_summary = config.output_dir.join("profile_summary.json");
    let summary_path = config.input.profile_summary.as_deref().unwrap_or(&default_summary);
    let geo_path = require(&config.input.geojson, "GeoJSON file", "--geojson")?;
    let summary: SummaryFile = serde_json::from_str(
        &fs::read_to_string(summary_path)
            .with_context(|| format!("cannot read {}", summary_path.display()))
            .invalid()?,
    )
    .with_context(|| format!("invalid profile summary {}", summary_path.display()))
    .invalid()?;
    let geojson: Value = serde_json::from_str(
        &fs::read_to_string(geo_path)
            .with_context(|| format!("cannot read {}", geo_path.display()))
            .invalid()?,
    )
    .with_context(|| format!("invalid GeoJSON {}", geo_path.display()))
    .invalid()?;
    let joined = join_geojson(
        &geojson,
        &config.geojson.key_property,
        &summary.reclassified,
        &summary.unit_ids,
    )?;

    let mut staging = Staging::begin(
        &config.output_dir,
        "export_geojson",
        &["profiles.geojson"],
        &[summary_path, geo_path],
    )
    .invalid()?;
    staging.write_json("profiles.geojson", &joined.geojson).failed()?;
    if !joined.unmatched.is_empty() {
        eprintln!(
            "warning: {} features had no matching unit (first: {:?})",
            joined.unmatched.len(),
            joined.unmatched[0]
        );
    }
    println!("wrote {}", staging.dir().join("profiles.geojson").display());
    let extra = json!({"unmatched_features": joined.unmatched});
    finish(staging, config, "export_geojson", started, extra)
}
