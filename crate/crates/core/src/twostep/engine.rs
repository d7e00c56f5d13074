//! Kernel evaluation for fitted models, shared by prediction and the
//! bandwidth cross-validation.

use nalgebra::DMatrix;
use serde::Serialize;

use super::transform::{apply_transform, TransformState};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, PointSet, Smoother};

/// Most times a bandwidth is doubled when a query has no kernel mass.
pub const MAX_DOUBLINGS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PredictionDiagnostics {
    /// Largest number of doublings used by the outer or any inner smoother.
    pub bandwidth_doublings: usize,
    /// Support size of each inner smoother evaluated for this prediction.
    pub inner_neighborhood_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Inner {
    /// `p×d̄` map applied to U.
    pub cov_map: DMatrix<f64>,
    /// `Z_i` mapped by `aux_map`, untransformed.
    pub aux_part: PointSet,
    /// Transformed inner regressor of every training row.
    pub points: PointSet,
    pub transform: Option<TransformState>,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub y: Vec<f64>,
    /// Raw covariate rows.
    pub u: PointSet,
    /// `p×d` map from a covariate vector to the outer regressor.
    pub outer_map: DMatrix<f64>,
    pub outer_points: PointSet,
    pub outer_kernel: KernelSpec,
    pub inner: Option<Inner>,
}

pub(crate) fn project(map: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..map.ncols()).map(|k| x.iter().enumerate().map(|(j, v)| v * map[(j, k)]).sum()).collect()
}

pub(crate) fn project_rows(m: &DMatrix<f64>, map: &DMatrix<f64>) -> PointSet {
    PointSet::from_matrix(&(m * map))
}

/// NW estimate from a smoother, doubling `h` until the query has mass.
pub(crate) fn smooth_with_fallback(s: &Smoother, kernel: &KernelSpec, q: &[f64], h: f64) -> Result<(f64, usize, usize)> {
    let mut hh = h;
    for doublings in 0..=MAX_DOUBLINGS {
        let ws = s.weighted_sum(kernel, q, hh);
        if let Some(v) = ws.ratio() {
            return Ok((v, ws.support, doublings));
        }
        hh *= 2.0;
    }
    Err(Error::EmptyNeighborhood)
}

impl Inner {
    pub fn query(&self, i: usize, shift: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = self.aux_part.row(i).iter().zip(shift).map(|(a, b)| a + b).collect();
        match &self.transform {
            Some(t) => apply_transform(t, &v),
            None => v,
        }
    }
}

impl Engine {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn outer_smoother(&self, train: &[usize]) -> Smoother {
        Smoother::subset(&self.outer_points, &self.y, train)
    }

    pub fn inner_smoother(&self, train: &[usize]) -> Option<Smoother> {
        self.inner.as_ref().map(|inn| Smoother::subset(&inn.points, &self.y, train))
    }

    /// Predictions at `u0` for each outer bandwidth in `outer_h`, using the
    /// training rows `train` (whose smoothers are passed in).
    pub fn predict_batch(
        &self,
        u0: &[f64],
        train: &[usize],
        outer: &Smoother,
        inner: Option<&Smoother>,
        inner_h: f64,
        outer_h: &[f64],
    ) -> Vec<Result<(f64, PredictionDiagnostics)>> {
        let q = project(&self.outer_map, u0);
        match (&self.inner, inner) {
            (Some(inn), Some(inner_smoother)) => self.two_step_batch(inn, inner_smoother, u0, &q, train, inner_h, outer_h),
            _ => outer_h
                .iter()
                .map(|&h| {
                    smooth_with_fallback(outer, &self.outer_kernel, &q, h).map(|(v, _, d)| {
                        (v, PredictionDiagnostics { bandwidth_doublings: d, inner_neighborhood_sizes: Vec::new() })
                    })
                })
                .collect(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn two_step_batch(
        &self,
        inn: &Inner,
        inner_smoother: &Smoother,
        u0: &[f64],
        q: &[f64],
        train: &[usize],
        inner_h: f64,
        outer_h: &[f64],
    ) -> Vec<Result<(f64, PredictionDiagnostics)>> {
        let shift = project(&inn.cov_map, u0);
        let mut memo: Vec<Option<(f64, usize, usize)>> = vec![None; self.n()];
        let mut out = Vec::with_capacity(outer_h.len());
        for &h in outer_h {
            out.push(self.two_step_one(inn, inner_smoother, q, &shift, train, inner_h, h, &mut memo));
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn two_step_one(
        &self,
        inn: &Inner,
        inner_smoother: &Smoother,
        q: &[f64],
        shift: &[f64],
        train: &[usize],
        inner_h: f64,
        h: f64,
        memo: &mut [Option<(f64, usize, usize)>],
    ) -> Result<(f64, PredictionDiagnostics)> {
        let mut hh = h;
        let mut doublings = 0;
        let weights = loop {
            let w: Vec<(usize, f64)> = train
                .iter()
                .filter_map(|&i| {
                    let row = self.outer_points.row(i);
                    let w = self.outer_kernel.unnormalized(row.iter().zip(q).map(|(a, b)| a - b), hh);
                    (w != 0.0).then_some((i, w))
                })
                .collect();
            if !w.is_empty() && w.iter().map(|(_, w)| w).sum::<f64>() != 0.0 {
                break w;
            }
            if doublings == MAX_DOUBLINGS {
                return Err(Error::EmptyNeighborhood);
            }
            hh *= 2.0;
            doublings += 1;
        };
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sizes = Vec::with_capacity(weights.len());
        let mut max_doublings = doublings;
        for (i, w) in weights {
            let (phi, support, d) = match memo[i] {
                Some(hit) => hit,
                None => {
                    let hit = smooth_with_fallback(inner_smoother, &inn.kernel, &inn.query(i, shift), inner_h)?;
                    memo[i] = Some(hit);
                    hit
                }
            };
            num += w * phi;
            den += w;
            sizes.push(support);
            max_doublings = max_doublings.max(d);
        }
        Ok((num / den, PredictionDiagnostics { bandwidth_doublings: max_doublings, inner_neighborhood_sizes: sizes }))
    }
}
