//! Group comparisons of fitted predictions and held-out accuracy.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{fold_partition, training_indices};
use crate::error::{Error, Result};
use crate::rng;
use crate::twostep::{self, BandwidthPolicy, DimPolicy, FitOptions, Variant};
use crate::TrainingSample;

/// Label partitions are enumerated exactly up to this many.
pub const EXACT_LIMIT: f64 = 1e5;

const DEFAULT_BOOTSTRAP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// Group a has the smaller mean.
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    /// `mean(a) - mean(b)`.
    pub observed_stat: f64,
    pub p_value: f64,
    /// Random permutations drawn, or label partitions enumerated when `exact`.
    pub permutations: usize,
    pub alternative: Alternative,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmseReport {
    pub cv10: f64,
    pub sigma2_hat: f64,
    /// `cv10 - sigma2_hat`; may be negative.
    pub amse: f64,
    pub fold_errors: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn is_extreme(alt: Alternative, stat: f64, observed: f64) -> bool {
    let eps = 1e-12 * (1.0 + observed.abs());
    match alt {
        Alternative::TwoSided => stat.abs() >= observed.abs() - eps,
        Alternative::Less => stat <= observed + eps,
    }
}

/// Two-sample permutation test on the difference of means. Small problems
/// are enumerated exactly; otherwise `permutations` random relabelings are
/// drawn and the add-one p-value is returned.
pub fn permutation_test(a: &[f64], b: &[f64], permutations: usize, alternative: Alternative, seed: u64) -> Result<PermutationResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("both groups must be nonempty".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let stat_of = |sum_a: f64| sum_a / na as f64 - (total - sum_a) / nb as f64;
    let observed = mean(a) - mean(b);

    if binomial(na + nb, na) <= EXACT_LIMIT {
        let mut count = 0usize;
        let mut seen = 0usize;
        for combo in (0..na + nb).combinations(na) {
            let s = stat_of(combo.iter().map(|&i| pooled[i]).sum());
            count += usize::from(is_extreme(alternative, s, observed));
            seen += 1;
        }
        return Ok(PermutationResult {
            observed_stat: observed,
            p_value: count as f64 / seen as f64,
            permutations: seen,
            alternative,
            exact: true,
        });
    }
    if permutations == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let count = (0..permutations)
        .into_par_iter()
        .filter(|&k| {
            let mut idx: Vec<usize> = (0..na + nb).collect();
            idx.shuffle(&mut rng::stream(seed, k as u64));
            let s = stat_of(idx[..na].iter().map(|&i| pooled[i]).sum());
            is_extreme(alternative, s, observed)
        })
        .count();
    Ok(PermutationResult {
        observed_stat: observed,
        p_value: (1 + count) as f64 / (1 + permutations) as f64,
        permutations,
        alternative,
        exact: false,
    })
}

/// Difference-based noise variance. One coordinate: first differences after
/// sorting. Several: each point paired with its nearest neighbour.
pub fn diff_variance(y: &[f64], coords: &DMatrix<f64>) -> Result<f64> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 1, got: n });
    }
    if coords.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: coords.nrows() });
    }
    if coords.ncols() == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| coords[(i, 0)].total_cmp(&coords[(j, 0)]));
        let ss: f64 = order.windows(2).map(|w| (y[w[1]] - y[w[0]]).powi(2)).sum();
        return Ok(ss / (2.0 * (n - 1) as f64));
    }
    let ss: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, i);
            for j in (0..n).filter(|&j| j != i) {
                let d: f64 = coords.row(i).iter().zip(coords.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            (y[i] - y[best.1]).powi(2)
        })
        .sum();
    Ok(ss / (2.0 * n as f64))
}

/// Ten-fold CV error of `fit`, minus a difference-based noise variance
/// computed on `noise_coords` (typically `B̂ᵀU` from the full sample).
pub fn cv10_amse<F, P>(sample: &TrainingSample, noise_coords: &DMatrix<f64>, seed: u64, fit: F) -> Result<AmseReport>
where
    F: Fn(&TrainingSample) -> Result<P> + Sync,
    P: Fn(&[f64]) -> Result<f64>,
{
    let n = sample.len();
    if n < 10 {
        return Err(Error::InsufficientSample { needed: 9, got: n });
    }
    let folds = fold_partition(n, 10, seed);
    let fold_errors: Vec<f64> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let wrap = |e: Error| Error::FoldFit { fold: f, message: e.to_string() };
            let predictor = fit(&sample.subset(&training_indices(n, test))).map_err(wrap)?;
            let mut sse = 0.0;
            for &t in test {
                sse += (sample.y[t] - predictor(&sample.covariate_row(t)).map_err(wrap)?).powi(2);
            }
            Ok(sse / test.len() as f64)
        })
        .collect::<Result<_>>()?;
    let cv10 = mean(&fold_errors);
    let sigma2_hat = diff_variance(&sample.y, noise_coords)?;
    Ok(AmseReport { cv10, sigma2_hat, amse: cv10 - sigma2_hat, fold_errors })
}

/// [`cv10_amse`] for one estimator variant. The noise variance is taken on
/// the central subspace estimated from the full sample with `opts`.
pub fn variant_amse(sample: &TrainingSample, variant: Variant, opts: &FitOptions, seed: u64) -> Result<AmseReport> {
    // Only B̂ is needed here, so the bandwidth search is skipped. A config
    // that fixes dims without a central one falls back to the bootstrap.
    let mut central_opts = opts.clone().with_bandwidth(BandwidthPolicy::Fixed { inner: 1.0, outer: 1.0 });
    if let DimPolicy::Given { dims } = &opts.dims {
        if dims.central.is_none() {
            central_opts.dims = DimPolicy::Bootstrap { replicates: DEFAULT_BOOTSTRAP };
        }
    }
    let reduced = twostep::fit(sample, Variant::Reduced, &central_opts)?;
    let basis = reduced.central().map(|c| c.basis().clone()).ok_or_else(|| Error::Config("reduced fit stored no central subspace".into()))?;
    let coords = &sample.u * basis;
    cv10_amse(sample, &coords, seed, |train| {
        let model = twostep::fit(train, variant, opts)?;
        Ok(move |u: &[f64]| model.predict(u).map(|(v, _)| v))
    })
}
