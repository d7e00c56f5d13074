//! The `run` verb: a Monte Carlo experiment on a simulated setting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checks::{check_fit, check_names, check_workers, DimCheck, FitCheck};
use super::{csv_bytes, format_number, json_bytes, prepare_out_dir, with_workers, write_file, CliError, Overrides};
use crate::simlab::{monte_carlo, true_dims, DimSource, EstimatorConfig, MonteCarloPlan, MonteCarloReport, SettingId, SettingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: SettingId,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Seed for drawing the evaluation points, kept apart from `seed` so
    /// report rows stay fixed when replications are reseeded.
    #[serde(default)]
    pub eval_seed: u64,
    #[serde(default)]
    pub seed: u64,
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_eval_points() -> usize {
    8
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub tool: &'static str,
    pub version: &'static str,
    /// The config as run, with command-line overrides applied.
    pub config: ExperimentConfig,
    pub report: MonteCarloReport,
}

impl ExperimentConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let spec = SettingSpec::new(self.setting);
        let (p, r) = (spec.dims.p, spec.dims.r);
        if self.n <= p {
            out.push(format!("n = {} must exceed the covariate dimension {p}", self.n));
        }
        if self.replications == 0 {
            out.push("replications must be >= 1".into());
        }
        if self.eval_points == 0 {
            out.push("eval_points must be >= 1".into());
        }
        if self.estimators.is_empty() {
            out.push("at least one estimator is required".into());
        }
        check_workers(self.workers, &mut out);
        check_names(self.estimators.iter().map(|e| e.name.as_str()), &mut out);
        for e in &self.estimators {
            let dims = match &e.dims {
                DimSource::True | DimSource::TrueMatrices => DimCheck::Given(true_dims(&spec, e.method)),
                DimSource::Given { dims } => DimCheck::Given(*dims),
                DimSource::Bootstrap { replicates } => DimCheck::Bootstrap(*replicates),
            };
            let check = FitCheck {
                name: &e.name,
                variant: e.method.variant(),
                dims,
                bandwidth: &e.bandwidth,
                transform: e.transform,
                outer_order: e.outer_order,
                inner_order: e.inner_order,
            };
            check_fit(&check, p, r, self.n, &mut out);
        }
        out
    }

    pub fn plan(&self) -> MonteCarloPlan {
        MonteCarloPlan {
            setting: self.setting,
            n: self.n,
            replications: self.replications,
            eval_points: self.eval_points,
            eval_seed: self.eval_seed,
            seed: self.seed,
            estimators: self.estimators.clone(),
        }
    }
}

/// Validate, run and write `report.json` and `report.csv`. Returns the
/// paths written.
pub fn run_experiment(mut config: ExperimentConfig, overrides: &Overrides) -> Result<(ExperimentReport, Vec<PathBuf>), CliError> {
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if overrides.workers.is_some() {
        config.workers = overrides.workers;
    }
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let out_dir = overrides.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let plan = config.plan();
    let report = with_workers(config.workers, || monte_carlo(&plan))?
        .map_err(|e| CliError::compute(format!("monte carlo on setting {}", config.setting), e))?;
    // Output location and thread count do not change results; keep them out
    // of the report so reruns compare byte for byte.
    config.output = None;
    config.workers = None;
    let full = ExperimentReport { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), config, report };
    let paths = write_outputs(&out_dir, &full)?;
    Ok((full, paths))
}

fn write_outputs(dir: &Path, r: &ExperimentReport) -> Result<Vec<PathBuf>, CliError> {
    prepare_out_dir(dir)?;
    let json = dir.join("report.json");
    write_file(&json, &json_bytes(r)?)?;
    let p = r.report.eval_points.first().map_or(0, |e| e.u0.len());
    let mut header = vec!["point".to_string(), "psi".to_string()];
    header.extend((1..=p).map(|j| format!("u{j}")));
    header.extend(["estimator", "abs_bias", "rmse", "successes"].map(String::from));
    let rows: Vec<Vec<String>> = r
        .report
        .cells
        .iter()
        .map(|c| {
            let mut row = vec![c.point.to_string(), format_number(c.psi)];
            row.extend(r.report.eval_points[c.point].u0.iter().map(|v| format_number(*v)));
            row.extend([c.estimator.clone(), format_number(c.abs_bias), format_number(c.rmse), c.successes.to_string()]);
            row
        })
        .collect();
    let csv = dir.join("report.csv");
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_file(&csv, &csv_bytes(&header, &rows)?)?;
    Ok(vec![json, csv])
}
