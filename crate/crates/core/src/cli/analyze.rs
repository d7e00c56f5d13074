//! The `analyze` verb: per-group fits on user data, permutation tests on
//! group means of fitted values, and cross-validated AMSE.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{check_fit, check_names, check_workers, DimCheck, FitCheck};
use super::{csv_bytes, format_number, json_bytes, prepare_out_dir, with_workers, write_file, CliError, Overrides};
use crate::inference::{permutation_test, variant_amse, Alternative, AmseReport, PermutationResult};
use crate::rng::child_seed;
use crate::screening::{screen, ScreenReport};
use crate::sdr::Sdr;
use crate::twostep::{self, BandwidthPolicy, DimPolicy, FitOptions, ModelSummary, OuterScaling, TransformKind, Variant};
use crate::TrainingSample;

/// Which CSV columns play which role. Unset roles fall back to the
/// conventions `y`, `u*`, `z*` and `group` (case-insensitive).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeEstimator {
    pub name: String,
    pub method: Variant,
    #[serde(default = "default_dim_policy")]
    pub dims: DimPolicy,
    #[serde(default)]
    pub bandwidth: BandwidthPolicy,
    #[serde(default)]
    pub transform: TransformKind,
    #[serde(default)]
    pub outer_scaling: OuterScaling,
    #[serde(default = "default_order")]
    pub outer_order: usize,
    #[serde(default = "default_order")]
    pub inner_order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_sdr: Option<Sdr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_sdr: Option<Sdr>,
}

fn default_dim_policy() -> DimPolicy {
    DimPolicy::Bootstrap { replicates: 30 }
}

fn default_order() -> usize {
    2
}

impl AnalyzeEstimator {
    pub fn fit_options(&self, seed: u64) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            dims: self.dims.clone(),
            bandwidth: self.bandwidth.clone(),
            transform: self.transform,
            outer_scaling: self.outer_scaling,
            outer_order: self.outer_order,
            inner_order: self.inner_order,
            response_sdr: self.response_sdr.clone().unwrap_or(d.response_sdr),
            aux_sdr: self.aux_sdr.clone().unwrap_or(d.aux_sdr),
            seed,
        }
    }

    fn check(&self, p: usize, r: usize, n: usize, out: &mut Vec<String>) {
        let dims = match &self.dims {
            DimPolicy::Given { dims } => DimCheck::Given(*dims),
            DimPolicy::Bootstrap { replicates } => DimCheck::Bootstrap(*replicates),
        };
        let c = FitCheck {
            name: &self.name,
            variant: Some(self.method),
            dims,
            bandwidth: &self.bandwidth,
            transform: self.transform,
            outer_order: self.outer_order,
            inner_order: self.inner_order,
        };
        check_fit(&c, p, r, n, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default)]
    pub columns: ColumnRoles,
    /// Keep this many covariates, ranked by the fused Kolmogorov filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_keep: Option<usize>,
    pub estimators: Vec<AnalyzeEstimator>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// Smallest group size accepted.
    #[serde(default = "default_min_group")]
    pub min_group_size: usize,
    #[serde(default = "default_true")]
    pub amse: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_permutations() -> usize {
    10_000
}

fn default_min_group() -> usize {
    20
}

fn default_true() -> bool {
    true
}

impl AnalyzeConfig {
    /// Checks that need no data.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.estimators.is_empty() {
            out.push("at least one estimator is required".into());
        }
        if self.permutations == 0 {
            out.push("permutations must be >= 1".into());
        }
        if self.min_group_size < 10 && self.amse {
            out.push(format!("min_group_size = {} is below the 10 rows ten-fold CV needs", self.min_group_size));
        }
        if self.screen_keep == Some(0) {
            out.push("screen_keep must be >= 1".into());
        }
        check_workers(self.workers, &mut out);
        check_names(self.estimators.iter().map(|e| e.name.as_str()), &mut out);
        out
    }
}

/// A parsed data file with resolved column roles.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub y: Vec<f64>,
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub aux_names: Vec<String>,
    pub groups: Vec<String>,
}

fn find(headers: &[String], name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name).or_else(|| headers.iter().position(|h| h.eq_ignore_ascii_case(name)))
}

fn by_prefix(headers: &[String], prefix: char, skip: &[usize]) -> Vec<usize> {
    (0..headers.len())
        .filter(|i| !skip.contains(i))
        .filter(|&i| headers[i].chars().next().is_some_and(|c| c.eq_ignore_ascii_case(&prefix)))
        .collect()
}

/// Read a CSV with a header row. Reports every missing column and every
/// unparsable cell.
pub fn load_table(path: &Path, roles: &ColumnRoles) -> Result<DataTable, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::invalid(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut problems = Vec::new();
    let mut lookup = |name: &str, what: &str| {
        let idx = find(&headers, name);
        if idx.is_none() {
            problems.push(format!("{what} column '{name}' not found"));
        }
        idx
    };
    let y_col = lookup(roles.response.as_deref().unwrap_or("y"), "response");
    let group_col = match &roles.group {
        Some(g) => lookup(g, "group"),
        None => find(&headers, "group"),
    };
    let named = |names: &Option<Vec<String>>, what: &str, lookup: &mut dyn FnMut(&str, &str) -> Option<usize>| {
        names.as_ref().map(|ns| ns.iter().filter_map(|n| lookup(n, what)).collect::<Vec<_>>())
    };
    let u_named = named(&roles.covariates, "covariate", &mut lookup);
    let z_named = named(&roles.auxiliary, "auxiliary", &mut lookup);
    let skip: Vec<usize> = y_col.iter().chain(group_col.iter()).copied().collect();
    let u_cols = u_named.unwrap_or_else(|| by_prefix(&headers, 'u', &skip));
    let z_cols = z_named.unwrap_or_else(|| by_prefix(&headers, 'z', &skip));
    if u_cols.is_empty() {
        problems.push("no covariate columns".into());
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let y_col = y_col.expect("checked above");

    let mut y = Vec::new();
    let mut u = Vec::new();
    let mut z = Vec::new();
    let mut groups = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {}: {e}", line + 1));
                continue;
            }
        };
        let mut num = |c: usize| -> f64 {
            let cell = rec.get(c).unwrap_or("").trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    problems.push(format!("row {}, column '{}': '{cell}' is not a finite number", line + 1, headers[c]));
                    f64::NAN
                }
            }
        };
        y.push(num(y_col));
        u.extend(u_cols.iter().map(|&c| num(c)));
        z.extend(z_cols.iter().map(|&c| num(c)));
        groups.push(group_col.map_or_else(|| "all".to_string(), |g| rec.get(g).unwrap_or("").trim().to_string()));
    }
    if y.is_empty() {
        problems.push("data file has no rows".into());
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let n = y.len();
    Ok(DataTable {
        y,
        u: DMatrix::from_row_slice(n, u_cols.len(), &u),
        z: DMatrix::from_row_slice(n, z_cols.len(), &z),
        covariate_names: u_cols.iter().map(|&c| headers[c].clone()).collect(),
        aux_names: z_cols.iter().map(|&c| headers[c].clone()).collect(),
        groups,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupFit {
    pub group: String,
    pub estimator: String,
    pub n: usize,
    pub model: ModelSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amse: Option<AmseReport>,
    /// `mean` of fitted values over the group's rows.
    pub mean_fitted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationRow {
    pub group_a: String,
    pub group_b: String,
    pub estimator: String,
    /// `two_sided`, or `less` for H1: mean(a) < mean(b).
    pub hypothesis: String,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: AnalyzeConfig,
    pub covariates_used: Vec<String>,
    pub auxiliary: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreenReport>,
    pub groups: BTreeMap<String, usize>,
    pub fits: Vec<GroupFit>,
    pub permutation_tests: Vec<PermutationRow>,
    #[serde(skip)]
    fitted: Vec<(usize, String, String, f64, f64)>,
}

pub fn analyze(data: &Path, mut config: AnalyzeConfig, overrides: &Overrides) -> Result<(AnalysisReport, Vec<PathBuf>), CliError> {
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if overrides.workers.is_some() {
        config.workers = overrides.workers;
    }
    let mut violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let table = load_table(data, &config.columns)?;
    let (p_all, r) = (table.u.ncols(), table.z.ncols());
    if let Some(k) = config.screen_keep {
        if k > p_all {
            violations.push(format!("screen_keep = {k} exceeds the {p_all} covariate columns"));
        }
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, g) in table.groups.iter().enumerate() {
        groups.entry(g.clone()).or_default().push(i);
    }
    for (g, rows) in &groups {
        if rows.len() < config.min_group_size {
            violations.push(format!("group '{g}' has {} rows, below min_group_size = {}", rows.len(), config.min_group_size));
        }
    }
    let p = config.screen_keep.unwrap_or(p_all).min(p_all);
    let smallest = groups.values().map(Vec::len).min().unwrap_or(0);
    for e in &config.estimators {
        e.check(p, r, smallest, &mut violations);
    }
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }

    let out_dir = overrides.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let workers = config.workers;
    let report = with_workers(workers, || compute(&table, &groups, &config))??;
    let mut report = report;
    report.config.output = None;
    report.config.workers = None;
    let paths = write_outputs(&out_dir, &report)?;
    Ok((report, paths))
}

fn compute(table: &DataTable, groups: &BTreeMap<String, Vec<usize>>, config: &AnalyzeConfig) -> Result<AnalysisReport, CliError> {
    let (screening, cov_idx) = match config.screen_keep {
        Some(k) => {
            let s = screen(&table.u, &table.y, k).map_err(|e| CliError::compute("screening", e))?;
            let kept = s.kept.clone();
            (Some(s), kept)
        }
        None => (None, (0..table.u.ncols()).collect()),
    };
    let u = DMatrix::from_fn(table.u.nrows(), cov_idx.len(), |i, j| table.u[(i, cov_idx[j])]);

    let names: Vec<&String> = groups.keys().collect();
    let jobs: Vec<(usize, usize)> = (0..names.len()).flat_map(|g| (0..config.estimators.len()).map(move |e| (g, e))).collect();
    let fitted: Vec<(GroupFit, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(g, e)| {
            let rows = &groups[names[g]];
            let est = &config.estimators[e];
            let context = format!("group '{}', estimator '{}'", names[g], est.name);
            let sample = TrainingSample::new(
                rows.iter().map(|&i| table.y[i]).collect(),
                DMatrix::from_fn(rows.len(), u.ncols(), |i, j| u[(rows[i], j)]),
                DMatrix::from_fn(rows.len(), table.z.ncols(), |i, j| table.z[(rows[i], j)]),
            )
            .map_err(|err| CliError::compute(&context, err))?;
            let seed = child_seed(child_seed(config.seed, g as u64), e as u64);
            let opts = est.fit_options(seed);
            let model = twostep::fit(&sample, est.method, &opts).map_err(|err| CliError::compute(&context, err))?;
            let queries: Vec<Vec<f64>> = (0..sample.len()).map(|i| sample.covariate_row(i)).collect();
            let values = model
                .predict_many(&queries)
                .into_iter()
                .map(|r| r.map(|(v, _)| v))
                .collect::<crate::Result<Vec<f64>>>()
                .map_err(|err| CliError::compute(&context, err))?;
            let amse = if config.amse {
                Some(variant_amse(&sample, est.method, &opts, child_seed(seed, 77)).map_err(|err| CliError::compute(format!("{context}, AMSE"), err))?)
            } else {
                None
            };
            let mean_fitted = values.iter().sum::<f64>() / values.len() as f64;
            let fit = GroupFit { group: names[g].clone(), estimator: est.name.clone(), n: sample.len(), model: model.summary(), amse, mean_fitted };
            Ok((fit, values))
        })
        .collect::<Result<_, CliError>>()?;

    let mut permutation_tests = Vec::new();
    let mut pair = 0u64;
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            for (e, est) in config.estimators.iter().enumerate() {
                let va = &fitted[a * config.estimators.len() + e].1;
                let vb = &fitted[b * config.estimators.len() + e].1;
                for (h, alt) in [("two_sided", Alternative::TwoSided), ("less", Alternative::Less)] {
                    let seed = child_seed(config.seed, 10_000 + pair);
                    pair += 1;
                    let result = permutation_test(va, vb, config.permutations, alt, seed)
                        .map_err(|err| CliError::compute(format!("permutation test {} vs {}", names[a], names[b]), err))?;
                    permutation_tests.push(PermutationRow {
                        group_a: names[a].clone(),
                        group_b: names[b].clone(),
                        estimator: est.name.clone(),
                        hypothesis: h.into(),
                        result,
                    });
                }
            }
        }
    }

    let mut rows_out = Vec::new();
    for (k, (fit, values)) in fitted.iter().enumerate() {
        let rows = &groups[names[k / config.estimators.len()]];
        for (&i, &v) in rows.iter().zip(values) {
            rows_out.push((i, fit.group.clone(), fit.estimator.clone(), table.y[i], v));
        }
    }
    rows_out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));

    Ok(AnalysisReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        covariates_used: cov_idx.iter().map(|&j| table.covariate_names[j].clone()).collect(),
        auxiliary: table.aux_names.clone(),
        screening,
        groups: groups.iter().map(|(g, r)| (g.clone(), r.len())).collect(),
        fits: fitted.into_iter().map(|(f, _)| f).collect(),
        permutation_tests,
        fitted: rows_out,
    })
}

fn write_outputs(dir: &Path, r: &AnalysisReport) -> Result<Vec<PathBuf>, CliError> {
    prepare_out_dir(dir)?;
    let mut paths = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        paths.push(path);
        Ok(())
    };
    put("analysis.json", json_bytes(r)?)?;

    let rows: Vec<Vec<String>> = r
        .permutation_tests
        .iter()
        .map(|t| {
            vec![
                t.group_a.clone(),
                t.group_b.clone(),
                t.estimator.clone(),
                t.hypothesis.clone(),
                format_number(t.result.observed_stat),
                format_number(t.result.p_value),
                t.result.permutations.to_string(),
                t.result.exact.to_string(),
            ]
        })
        .collect();
    put(
        "permutation.csv",
        csv_bytes(&["group_a", "group_b", "estimator", "hypothesis", "observed_stat", "p_value", "permutations", "exact"], &rows)?,
    )?;

    let rows: Vec<Vec<String>> = r
        .fits
        .iter()
        .filter_map(|f| {
            f.amse.as_ref().map(|a| {
                vec![
                    f.group.clone(),
                    f.estimator.clone(),
                    f.n.to_string(),
                    format_number(a.cv10),
                    format_number(a.sigma2_hat),
                    format_number(a.amse),
                ]
            })
        })
        .collect();
    put("amse.csv", csv_bytes(&["group", "estimator", "n", "cv10", "sigma2_hat", "amse"], &rows)?)?;

    let rows: Vec<Vec<String>> = r
        .fitted
        .iter()
        .map(|(i, g, e, y, v)| vec![i.to_string(), g.clone(), e.clone(), format_number(*y), format_number(*v)])
        .collect();
    put("fitted.csv", csv_bytes(&["row", "group", "estimator", "y", "fitted"], &rows)?)?;

    if let Some(s) = &r.screening {
        let rows: Vec<Vec<String>> = r
            .covariates_used
            .iter()
            .zip(&s.kept)
            .enumerate()
            .map(|(rank, (name, &j))| vec![(rank + 1).to_string(), name.clone(), format_number(s.statistics[j])])
            .collect();
        put("screening.csv", csv_bytes(&["rank", "covariate", "statistic"], &rows)?)?;
    }
    Ok(paths)
}
