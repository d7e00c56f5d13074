//! Moment-based sufficient dimension reduction.
//!
//! Candidate matrices are built on predictors standardized by
//! `Σ^{-1/2}(x - μ)`:
//!
//! * SIR: `Σ_h p_h m_h m_hᵀ` over equal-count slices of the response.
//! * SAVE: `Σ_h p_h (I - V_h)²` with `V_h` the within-slice covariance.
//! * PHD: `M²` where `M = n⁻¹ Σ ỹ_i z_i z_iᵀ` and `ỹ` is the standardized
//!   response.
//!
//! Several methods may be pooled by summing their candidate matrices, and a
//! multivariate response pools the per-coordinate candidates. The leading
//! eigenvectors are mapped back to the original scale and orthonormalized.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdrMethod {
    Sir,
    Save,
    Phd,
}

pub const DEFAULT_SLICES: usize = 10;

/// An estimated central subspace: orthonormal `p×d` basis plus the
/// (decreasing) eigenvalues of the candidate matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceEstimate {
    #[serde(serialize_with = "serialize_matrix")]
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    methods: Vec<SdrMethod>,
    slices: usize,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl SubspaceEstimate {
    /// Wrap a known matrix (e.g. a true reduction matrix); columns are
    /// orthonormalized and must be linearly independent.
    pub fn from_basis(m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::InvalidArgument(format!("basis of shape {:?} is not a subspace basis", m.shape())));
        }
        if linalg::rank(m, 1e-10) != m.ncols() {
            return Err(Error::InvalidArgument("basis columns are linearly dependent".into()));
        }
        Ok(Self { basis: linalg::orthonormalize(m), eigenvalues: Vec::new(), methods: Vec::new(), slices: 0 })
    }

    /// The whole ambient space `R^p`.
    pub fn full(p: usize) -> Self {
        Self { basis: DMatrix::identity(p, p), eigenvalues: Vec::new(), methods: Vec::new(), slices: 0 }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn methods(&self) -> &[SdrMethod] {
        &self.methods
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Estimator configuration: pooled methods and slice count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sdr {
    pub methods: Vec<SdrMethod>,
    pub slices: usize,
}

impl Sdr {
    pub fn new(methods: &[SdrMethod], slices: usize) -> Self {
        Self { methods: methods.to_vec(), slices }
    }

    pub fn estimate(&self, responses: &DMatrix<f64>, predictors: &DMatrix<f64>, dim: usize) -> Result<SubspaceEstimate> {
        let p = predictors.ncols();
        if dim == 0 {
            return Err(Error::InvalidArgument("subspace dimension must be >= 1".into()));
        }
        if dim > p {
            return Err(Error::DimensionTooLarge { dim, ambient: p });
        }
        let fit = self.candidate(responses, predictors)?;
        Ok(fit.estimate(dim, self))
    }

    pub fn select_dimension(
        &self,
        responses: &DMatrix<f64>,
        predictors: &DMatrix<f64>,
        max_dim: usize,
        bootstrap_size: usize,
        seed: u64,
    ) -> Result<DimensionSelection> {
        let (n, p) = predictors.shape();
        if bootstrap_size == 0 {
            return Err(Error::InvalidArgument("bootstrap_size must be >= 1".into()));
        }
        // The full space has zero bootstrap variability by construction, so it
        // is never a candidate; a one-dimensional ambient space is returned as is.
        if p == 1 && max_dim == 1 {
            self.candidate(responses, predictors)?;
            return Ok(DimensionSelection { chosen_dim: 1, criterion_by_dim: vec![0.0], bootstrap_size });
        }
        if max_dim == 0 || max_dim >= p {
            return Err(Error::InvalidArgument(format!("max_dim must lie in 1..{p}, got {max_dim}")));
        }
        let full = self.candidate(responses, predictors)?;
        let reference: Vec<SubspaceEstimate> = (1..=max_dim).map(|d| full.estimate(d, self)).collect();

        let replicates: Vec<Result<Vec<f64>>> = (0..bootstrap_size)
            .into_par_iter()
            .map(|b| {
                let mut g = rng::stream(seed, b as u64);
                let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
                let resp = crate::sample::select_rows(responses, &idx);
                let pred = crate::sample::select_rows(predictors, &idx);
                let fit = self.candidate(&resp, &pred)?;
                Ok(reference
                    .iter()
                    .map(|r| {
                        let est = fit.estimate(r.dim(), self);
                        subspace_distance(&est, r).expect("same ambient dimension")
                    })
                    .collect())
            })
            .collect();

        let mut criterion = vec![0.0; max_dim];
        for rep in replicates {
            for (c, d) in criterion.iter_mut().zip(rep?) {
                *c += d;
            }
        }
        for c in criterion.iter_mut() {
            *c /= bootstrap_size as f64;
        }
        let chosen_dim = argmin_smallest(&criterion) + 1;
        Ok(DimensionSelection { chosen_dim, criterion_by_dim: criterion, bootstrap_size })
    }

    fn candidate(&self, responses: &DMatrix<f64>, predictors: &DMatrix<f64>) -> Result<CandidateFit> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one SDR method is required".into()));
        }
        let (n, p) = predictors.shape();
        if responses.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: responses.nrows() });
        }
        if responses.ncols() == 0 {
            return Err(Error::InvalidArgument("SDR needs at least one response column".into()));
        }
        if n <= p {
            return Err(Error::InsufficientSample { needed: p, got: n });
        }
        let slicing = self.methods.iter().any(|m| matches!(m, SdrMethod::Sir | SdrMethod::Save));
        if slicing && self.slices < 2 {
            return Err(Error::InvalidArgument("slice-based methods need at least 2 slices".into()));
        }
        let mean = linalg::column_means(predictors);
        let sigma = linalg::covariance(predictors, &mean);
        let inv_sqrt = linalg::inv_sqrt_spd(&sigma)?;
        let centered = DMatrix::from_fn(n, p, |i, j| predictors[(i, j)] - mean[j]);
        let z = centered * &inv_sqrt;

        let mut m = DMatrix::zeros(p, p);
        for k in 0..responses.ncols() {
            let y: Vec<f64> = responses.column(k).iter().copied().collect();
            for method in &self.methods {
                m += match method {
                    SdrMethod::Sir => sir_candidate(&z, &y, self.slices),
                    SdrMethod::Save => save_candidate(&z, &y, self.slices),
                    SdrMethod::Phd => phd_candidate(&z, &y),
                };
            }
        }
        let (eigenvalues, eigenvectors) = linalg::sorted_eigen(&m);
        Ok(CandidateFit { eigenvalues, eigenvectors, inv_sqrt })
    }
}

struct CandidateFit {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl CandidateFit {
    fn estimate(&self, dim: usize, sdr: &Sdr) -> SubspaceEstimate {
        let p = self.inv_sqrt.nrows();
        let basis = if dim == p {
            DMatrix::identity(p, p)
        } else {
            let top = self.eigenvectors.columns(0, dim).into_owned();
            linalg::orthonormalize(&(&self.inv_sqrt * top))
        };
        SubspaceEstimate { basis, eigenvalues: self.eigenvalues.clone(), methods: sdr.methods.clone(), slices: sdr.slices }
    }
}

/// Slice labels `0..h` of equal count over the ordering of `y`
/// (ties resolved by observation index).
pub(crate) fn equal_count_slices(y: &[f64], slices: usize) -> (Vec<usize>, usize) {
    let n = y.len();
    let h = slices.min(n / 2).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut label = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        label[i] = rank * h / n;
    }
    (label, h)
}

fn slice_moments(z: &DMatrix<f64>, y: &[f64], slices: usize) -> Vec<(f64, Vec<f64>, DMatrix<f64>)> {
    let (n, p) = z.shape();
    let (label, h) = equal_count_slices(y, slices);
    let mut counts = vec![0usize; h];
    let mut sums = vec![vec![0.0; p]; h];
    for i in 0..n {
        counts[label[i]] += 1;
        for j in 0..p {
            sums[label[i]][j] += z[(i, j)];
        }
    }
    let means: Vec<Vec<f64>> = sums.iter().zip(&counts).map(|(s, &c)| s.iter().map(|v| v / c as f64).collect()).collect();
    let mut covs = vec![DMatrix::<f64>::zeros(p, p); h];
    for i in 0..n {
        let s = label[i];
        for a in 0..p {
            let da = z[(i, a)] - means[s][a];
            for b in a..p {
                covs[s][(a, b)] += da * (z[(i, b)] - means[s][b]);
            }
        }
    }
    (0..h)
        .map(|s| {
            let c = counts[s] as f64;
            let mut cov = covs[s].clone() / c;
            for a in 0..p {
                for b in 0..a {
                    cov[(a, b)] = cov[(b, a)];
                }
            }
            (c / n as f64, means[s].clone(), cov)
        })
        .collect()
}

fn sir_candidate(z: &DMatrix<f64>, y: &[f64], slices: usize) -> DMatrix<f64> {
    let p = z.ncols();
    let mut m = DMatrix::zeros(p, p);
    for (w, mean, _) in slice_moments(z, y, slices) {
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] += w * mean[a] * mean[b];
            }
        }
    }
    m
}

fn save_candidate(z: &DMatrix<f64>, y: &[f64], slices: usize) -> DMatrix<f64> {
    let p = z.ncols();
    let mut m = DMatrix::zeros(p, p);
    let id = DMatrix::<f64>::identity(p, p);
    for (w, _, cov) in slice_moments(z, y, slices) {
        let d = &id - cov;
        m += (&d * &d) * w;
    }
    m
}

fn phd_candidate(z: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    let (n, p) = z.shape();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut m = DMatrix::zeros(p, p);
    if sd == 0.0 {
        return m;
    }
    for i in 0..n {
        let w = (y[i] - mean) / sd;
        for a in 0..p {
            for b in a..p {
                m[(a, b)] += w * z[(i, a)] * z[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    m /= n as f64;
    &m * &m
}

/// `1 - tr(P_a P_b) / max(d_a, d_b)`: 0 for equal spans, 1 for orthogonal ones.
pub fn subspace_distance(a: &SubspaceEstimate, b: &SubspaceEstimate) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: a.ambient_dim(), got: b.ambient_dim() });
    }
    // tr(P_a P_b) = ||A^T B||_F^2 for orthonormal A, B
    let cross = a.basis().transpose() * b.basis();
    let overlap = cross.norm_squared();
    let d = a.dim().max(b.dim()) as f64;
    Ok((1.0 - overlap / d).clamp(0.0, 1.0))
}

/// Result of bootstrap dimension selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionSelection {
    pub chosen_dim: usize,
    /// Mean bootstrap distance for dimensions `1..=max_dim`.
    pub criterion_by_dim: Vec<f64>,
    pub bootstrap_size: usize,
}

fn argmin_smallest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] - 1e-12 {
            best = i;
        }
    }
    best
}

/// Convenience wrapper over [`Sdr::estimate`].
pub fn estimate_subspace(
    methods: &[SdrMethod],
    responses: &DMatrix<f64>,
    predictors: &DMatrix<f64>,
    dim: usize,
    slices: usize,
) -> Result<SubspaceEstimate> {
    Sdr::new(methods, slices).estimate(responses, predictors, dim)
}

/// Convenience wrapper over [`Sdr::select_dimension`].
pub fn select_dimension_bootstrap(
    methods: &[SdrMethod],
    responses: &DMatrix<f64>,
    predictors: &DMatrix<f64>,
    max_dim: usize,
    bootstrap_size: usize,
    slices: usize,
    seed: u64,
) -> Result<DimensionSelection> {
    Sdr::new(methods, slices).select_dimension(responses, predictors, max_dim, bootstrap_size, seed)
}
