//! Replicated fits on simulated data, summarized by |bias| and RMSE per
//! evaluation point and estimator.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::settings::{EvalPoint, SettingId, SettingSpec};
use crate::error::{Error, Result};
use crate::rng::child_seed;
use crate::sdr::Sdr;
use crate::twostep::{self, BandwidthPolicy, DimPolicy, Dims, FitOptions, KnownProjections, OuterScaling, TransformKind, Variant};

/// Largest tolerated fraction of failed replications per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Full,
    Reduced,
    TwoStep,
    Nested,
    /// Returns the true conditional mean; a harness check.
    Oracle,
}

impl Method {
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Full => Some(Variant::Full),
            Method::Reduced => Some(Variant::Reduced),
            Method::TwoStep => Some(Variant::TwoStep),
            Method::Nested => Some(Variant::Nested),
            Method::Oracle => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DimSource {
    /// The setting's true dimensions, with estimated subspaces.
    True,
    Given { dims: Dims },
    Bootstrap { replicates: usize },
    /// The setting's true reduction matrices.
    TrueMatrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub name: String,
    pub method: Method,
    #[serde(default = "default_dims")]
    pub dims: DimSource,
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

fn default_dims() -> DimSource {
    DimSource::True
}

fn default_order() -> usize {
    2
}

impl EstimatorConfig {
    pub fn new(name: &str, method: Method) -> Self {
        Self {
            name: name.to_string(),
            method,
            dims: DimSource::True,
            bandwidth: BandwidthPolicy::default(),
            transform: TransformKind::None,
            outer_scaling: OuterScaling::Standardized,
            outer_order: 2,
            inner_order: 2,
            response_sdr: None,
            aux_sdr: None,
        }
    }

    pub fn with_dims(mut self, dims: DimSource) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: BandwidthPolicy) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_transform(mut self, transform: TransformKind) -> Self {
        self.transform = transform;
        self
    }

    /// Fit options for one replication.
    pub fn fit_options(&self, spec: &SettingSpec, seed: u64) -> FitOptions {
        let defaults = FitOptions::default();
        let dims = match &self.dims {
            DimSource::True | DimSource::TrueMatrices => DimPolicy::Given { dims: true_dims(spec, self.method) },
            DimSource::Given { dims } => DimPolicy::Given { dims: *dims },
            DimSource::Bootstrap { replicates } => DimPolicy::Bootstrap { replicates: *replicates },
        };
        FitOptions {
            dims,
            bandwidth: self.bandwidth.clone(),
            transform: self.transform,
            outer_scaling: self.outer_scaling,
            outer_order: self.outer_order,
            inner_order: self.inner_order,
            response_sdr: self.response_sdr.clone().unwrap_or(defaults.response_sdr),
            aux_sdr: self.aux_sdr.clone().unwrap_or(defaults.aux_sdr),
            seed,
        }
    }

    fn predict(&self, spec: &SettingSpec, sample: &crate::TrainingSample, points: &[EvalPoint], seed: u64) -> Result<Fitted> {
        let variant = match self.method.variant() {
            Some(v) => v,
            None => {
                return Ok(Fitted {
                    predictions: points.iter().map(|e| e.psi).collect(),
                    fallbacks: 0,
                    dims: Dims::default(),
                    constants: None,
                })
            }
        };
        let opts = self.fit_options(spec, seed);
        let model = match self.dims {
            DimSource::TrueMatrices => twostep::fit_known(sample, variant, &true_projections(spec, variant), &opts)?,
            _ => twostep::fit(sample, variant, &opts)?,
        };
        let u0s: Vec<Vec<f64>> = points.iter().map(|e| e.u0.clone()).collect();
        let mut predictions = Vec::with_capacity(points.len());
        let mut fallbacks = 0;
        for r in model.predict_many(&u0s) {
            let (p, d) = r?;
            if d.bandwidth_doublings > 0 {
                fallbacks += 1;
            }
            predictions.push(p);
        }
        let summary = model.summary();
        Ok(Fitted { predictions, fallbacks, dims: model.dims(), constants: Some((summary.inner_constant, summary.outer_constant)) })
    }
}

struct Fitted {
    predictions: Vec<f64>,
    fallbacks: usize,
    dims: Dims,
    /// Inner and outer bandwidth constants actually used.
    constants: Option<(Option<f64>, f64)>,
}

/// The setting's true dimensions in the layout a method reads.
pub fn true_dims(spec: &SettingSpec, method: Method) -> Dims {
    let t = spec.dims;
    match method {
        Method::Full | Method::Oracle => Dims::default(),
        Method::Reduced => Dims { central: Some(t.central), joint: None, outer: None },
        Method::TwoStep => Dims { central: None, joint: Some(t.joint), outer: Some(t.outer) },
        Method::Nested => Dims { central: Some(t.central), joint: Some(t.nested_joint), outer: Some(t.nested_outer) },
    }
}

/// The setting's true reduction matrices, expressed on `(Z, U)` and `U`.
pub fn true_projections(spec: &SettingSpec, variant: Variant) -> KnownProjections {
    let m = &spec.matrices;
    match variant {
        Variant::Full => KnownProjections::default(),
        Variant::Reduced => KnownProjections { joint: None, outer: Some(m.central.clone()) },
        Variant::TwoStep => KnownProjections { joint: Some(m.joint()), outer: Some(m.outer.clone()) },
        Variant::Nested => KnownProjections { joint: Some(m.nested_joint_on_u()), outer: Some(m.nested_outer_on_u()) },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloPlan {
    pub setting: SettingId,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_eval_count")]
    pub eval_points: usize,
    #[serde(default)]
    pub eval_seed: u64,
    pub seed: u64,
    pub estimators: Vec<EstimatorConfig>,
}

fn default_eval_count() -> usize {
    8
}

/// One (evaluation point, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub point: usize,
    pub psi: f64,
    pub estimator: String,
    pub abs_bias: f64,
    pub rmse: f64,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorDiagnostics {
    pub estimator: String,
    pub failures: usize,
    pub failure_rate: f64,
    /// Predictions that needed at least one bandwidth doubling.
    pub fallback_predictions: usize,
    /// How often each resolved dimension triple occurred.
    pub resolved_dims: BTreeMap<String, usize>,
    /// How often each bandwidth constant pair was used.
    pub resolved_bandwidths: BTreeMap<String, usize>,
    /// First failure message, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub setting: SettingId,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub eval_points: Vec<EvalPoint>,
    pub cells: Vec<Cell>,
    pub diagnostics: Vec<EstimatorDiagnostics>,
}

impl MonteCarloReport {
    pub fn cell(&self, point: usize, estimator: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.point == point && c.estimator == estimator)
    }

    /// RMSE per evaluation point for one estimator.
    pub fn rmse(&self, estimator: &str) -> Vec<f64> {
        (0..self.eval_points.len()).map(|k| self.cell(k, estimator).map_or(f64::NAN, |c| c.rmse)).collect()
    }
}

fn dims_key(d: &Dims) -> String {
    let f = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
    format!("central={},joint={},outer={}", f(d.central), f(d.joint), f(d.outer))
}

fn constants_key((inner, outer): (Option<f64>, f64)) -> String {
    match inner {
        Some(i) => format!("inner={i},outer={outer}"),
        None => format!("outer={outer}"),
    }
}

pub fn monte_carlo(plan: &MonteCarloPlan) -> Result<MonteCarloReport> {
    if plan.replications == 0 {
        return Err(Error::InvalidArgument("replications must be >= 1".into()));
    }
    if plan.estimators.is_empty() {
        return Err(Error::InvalidArgument("no estimators configured".into()));
    }
    let spec = SettingSpec::new(plan.setting);
    let points = spec.draw_eval_points(plan.eval_points, plan.eval_seed)?;

    let runs: Vec<Vec<Result<Fitted>>> = (0..plan.replications)
        .into_par_iter()
        .map(|k| {
            let data_seed = child_seed(plan.seed, k as u64);
            let sample = spec.generate(plan.n, data_seed)?;
            Ok(plan
                .estimators
                .iter()
                .enumerate()
                .map(|(e, cfg)| cfg.predict(&spec, &sample, &points, child_seed(data_seed, 1000 + e as u64)))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut diagnostics = Vec::new();
    for (e, cfg) in plan.estimators.iter().enumerate() {
        let mut errs: Vec<Vec<f64>> = vec![Vec::new(); points.len()];
        let mut diag = EstimatorDiagnostics {
            estimator: cfg.name.clone(),
            failures: 0,
            failure_rate: 0.0,
            fallback_predictions: 0,
            resolved_dims: BTreeMap::new(),
            resolved_bandwidths: BTreeMap::new(),
            first_error: None,
        };
        for run in &runs {
            match &run[e] {
                Ok(f) => {
                    diag.fallback_predictions += f.fallbacks;
                    *diag.resolved_dims.entry(dims_key(&f.dims)).or_default() += 1;
                    if let Some(c) = f.constants {
                        *diag.resolved_bandwidths.entry(constants_key(c)).or_default() += 1;
                    }
                    for (k, p) in f.predictions.iter().enumerate() {
                        errs[k].push(p - points[k].psi);
                    }
                }
                Err(err) => {
                    diag.failures += 1;
                    if diag.first_error.is_none() {
                        diag.first_error = Some(err.to_string());
                    }
                }
            }
        }
        diag.failure_rate = diag.failures as f64 / plan.replications as f64;
        if diag.failure_rate > MAX_FAILURE_RATE {
            return Err(Error::TooManyFailures { failed: diag.failures, total: plan.replications });
        }
        for (k, pt) in points.iter().enumerate() {
            let m = errs[k].len() as f64;
            let bias = errs[k].iter().sum::<f64>() / m;
            let mse = errs[k].iter().map(|x| x * x).sum::<f64>() / m;
            cells.push(Cell {
                point: k,
                psi: pt.psi,
                estimator: cfg.name.clone(),
                abs_bias: bias.abs(),
                rmse: mse.sqrt().max(bias.abs()),
                successes: errs[k].len(),
            });
        }
        diagnostics.push(diag);
    }
    Ok(MonteCarloReport {
        setting: plan.setting,
        n: plan.n,
        replications: plan.replications,
        seed: plan.seed,
        eval_points: points,
        cells,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(reps: usize, estimators: Vec<EstimatorConfig>) -> MonteCarloPlan {
        MonteCarloPlan { setting: SettingId::A1, n: 60, replications: reps, eval_points: 8, eval_seed: 1, seed: 2, estimators }
    }

    #[test]
    fn oracle_has_zero_error() {
        let r = monte_carlo(&plan(3, vec![EstimatorConfig::new("oracle", Method::Oracle)])).unwrap();
        assert_eq!(r.cells.len(), 8);
        assert!(r.cells.iter().all(|c| c.abs_bias == 0.0 && c.rmse == 0.0));
    }

    #[test]
    fn reports_are_reproducible_and_consistent() {
        let est = vec![
            EstimatorConfig::new("full", Method::Full).with_bandwidth(BandwidthPolicy::Fixed { inner: 1.0, outer: 4.0 }),
            EstimatorConfig::new("two_step", Method::TwoStep).with_bandwidth(BandwidthPolicy::Fixed { inner: 1.0, outer: 4.0 }),
        ];
        let a = monte_carlo(&plan(2, est.clone())).unwrap();
        let b = monte_carlo(&plan(2, est)).unwrap();
        assert_eq!(a, b);
        for c in &a.cells {
            assert!(c.rmse >= c.abs_bias);
        }
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(monte_carlo(&plan(0, vec![EstimatorConfig::new("oracle", Method::Oracle)])).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = EstimatorConfig::new("n", Method::Nested).with_dims(DimSource::Bootstrap { replicates: 30 });
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EstimatorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(serde_json::from_str::<EstimatorConfig>(r#"{"name":"x","method":"full","bogus":1}"#).is_err());
    }
}
