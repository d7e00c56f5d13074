//! Standardize-then-CDF transform of the inner regressor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    None,
    NormalCdf,
    EmpiricalCdf,
}

/// Fitted standardization `Σ^{-1/2}(v - μ)` followed by a coordinatewise CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformState {
    kind: TransformKind,
    mean: Vec<f64>,
    #[serde(skip)]
    inv_sqrt: DMatrix<f64>,
    /// Sorted standardized training values per coordinate (empirical CDF only).
    #[serde(skip)]
    sorted: Vec<Vec<f64>>,
}

/// Standard normal distribution function.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn fit_transform(v: &DMatrix<f64>, kind: TransformKind) -> Result<TransformState> {
    let (n, d) = v.shape();
    if kind == TransformKind::None {
        return Err(Error::InvalidArgument("fit_transform needs a NormalCdf or EmpiricalCdf kind".into()));
    }
    if n < 2 || d == 0 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let mean = linalg::column_means(v);
    let inv_sqrt = linalg::inv_sqrt_spd(&linalg::covariance(v, &mean))?;
    let mut state = TransformState { kind, mean: mean.iter().copied().collect(), inv_sqrt, sorted: Vec::new() };
    if kind == TransformKind::EmpiricalCdf {
        let mut sorted = vec![Vec::with_capacity(n); d];
        for i in 0..n {
            let row: Vec<f64> = v.row(i).iter().copied().collect();
            for (j, s) in state.standardize(&row).into_iter().enumerate() {
                sorted[j].push(s);
            }
        }
        for col in sorted.iter_mut() {
            col.sort_by(f64::total_cmp);
        }
        state.sorted = sorted;
    }
    Ok(state)
}

pub fn apply_transform(state: &TransformState, v: &[f64]) -> Vec<f64> {
    let s = state.standardize(v);
    match state.kind {
        TransformKind::None => s,
        TransformKind::NormalCdf => s.into_iter().map(normal_cdf).collect(),
        TransformKind::EmpiricalCdf => s
            .into_iter()
            .zip(&state.sorted)
            .map(|(x, col)| col.partition_point(|&t| t <= x) as f64 / col.len() as f64)
            .collect(),
    }
}

impl TransformState {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.mean.len(), "transform input has wrong dimension");
        let centered = DVector::from_iterator(v.len(), v.iter().zip(&self.mean).map(|(a, m)| a - m));
        (&self.inv_sqrt * centered).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_cloud(n: usize, seed: u64) -> DMatrix<f64> {
        let mut g = rng::stream(seed, 0);
        let raw = DMatrix::from_fn(n, 2, |_, _| {
            let e: f64 = StandardNormal.sample(&mut g);
            e
        });
        let mix = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.0]);
        let mut v = raw * mix.transpose();
        for i in 0..n {
            v[(i, 0)] += 3.0;
            v[(i, 1)] -= 1.0;
        }
        v
    }

    fn ks_uniform(mut x: Vec<f64>) -> f64 {
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
            .fold(0.0, f64::max)
    }

    #[test]
    fn normal_cdf_margins_are_uniform() {
        let v = gaussian_cloud(5000, 4);
        let st = fit_transform(&v, TransformKind::NormalCdf).unwrap();
        let out: Vec<Vec<f64>> = (0..v.nrows()).map(|i| apply_transform(&st, &[v[(i, 0)], v[(i, 1)]])).collect();
        // Asymptotic KS critical value at level 0.01.
        let crit = 1.628 / (5000f64).sqrt();
        for j in 0..2 {
            let d = ks_uniform(out.iter().map(|r| r[j]).collect());
            assert!(d < crit, "coordinate {j}: KS {d} >= {crit}");
        }
    }

    #[test]
    fn empirical_cdf_on_training_rows_gives_ranks() {
        let n = 300;
        let v = gaussian_cloud(n, 5);
        let st = fit_transform(&v, TransformKind::EmpiricalCdf).unwrap();
        for j in 0..2 {
            let mut ranks: Vec<usize> = (0..n)
                .map(|i| {
                    let t = apply_transform(&st, &[v[(i, 0)], v[(i, 1)]])[j];
                    let r = (t * n as f64).round();
                    assert!((t * n as f64 - r).abs() < 1e-9);
                    r as usize
                })
                .collect();
            ranks.sort();
            assert_eq!(ranks, (1..=n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn affine_rescaling_leaves_output_unchanged() {
        let v = gaussian_cloud(500, 6);
        let w = v.map(|x| 3.5 * x + 2.0);
        for kind in [TransformKind::NormalCdf, TransformKind::EmpiricalCdf] {
            let a = fit_transform(&v, kind).unwrap();
            let b = fit_transform(&w, kind).unwrap();
            let mut g = rng::stream(7, 0);
            for _ in 0..50 {
                let q = [g.random_range(-2.0..8.0), g.random_range(-4.0..2.0)];
                let qa = apply_transform(&a, &q);
                let qb = apply_transform(&b, &[3.5 * q[0] + 2.0, 3.5 * q[1] + 2.0]);
                for (x, y) in qa.iter().zip(&qb) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let v = DMatrix::from_fn(20, 2, |i, j| (i as f64) * (j as f64 + 1.0));
        assert_eq!(fit_transform(&v, TransformKind::NormalCdf).unwrap_err(), Error::SingularCovariance);
        assert!(fit_transform(&v, TransformKind::None).is_err());
    }
}
