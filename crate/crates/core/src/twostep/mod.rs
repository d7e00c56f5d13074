//! Estimators of `E(Y | U = u0)`.
//!
//! * [`Variant::Full`]: kernel regression of `Y` on all of `U`.
//! * [`Variant::Reduced`]: kernel regression of `Y` on `B̂ᵀU`, with `B̂` an
//!   SDR estimate for `Y | U`.
//! * [`Variant::TwoStep`]: an inner regression of `Y` on
//!   `V = Ĉ_zᵀZ + Ĉ_uᵀU`, evaluated at every training `Z_i` with `u0`
//!   plugged in, then averaged by an outer kernel over `ĈᵀU_i`. `Ĉ` reduces
//!   the multivariate response `Ĉ_zᵀZ` given `U`.
//! * [`Variant::Nested`]: the same construction carried out inside `B̂ᵀU`,
//!   so the outer dimension never exceeds that of `B̂`.
//!
//! Outer bandwidths are `h = C n^{-1/(4+d)}`, applied by default to the
//! outer regressor with each coordinate divided by its sample standard
//! deviation; inner bandwidths are
//! `c s n^{-1/(4+d̄)}` with `s` the mean coordinate standard deviation of the
//! (transformed) inner regressor. Constants come from K-fold
//! cross-validation over grids or are fixed by the caller.

mod engine;
pub mod transform;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, CvOutcome, CvPlan, FoldPredictor};
use crate::error::{Error, Result};
use crate::kernels::{make_kernel, PointSet, Smoother};
use crate::rng::child_seed;
use crate::sample::{hstack, TrainingSample};
use crate::sdr::{DimensionSelection, Sdr, SdrMethod, SubspaceEstimate, DEFAULT_SLICES};

use engine::{project_rows, smooth_with_fallback, Engine, Inner};
pub use engine::{PredictionDiagnostics, MAX_DOUBLINGS};
pub use transform::{apply_transform, fit_transform, TransformKind, TransformState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Reduced,
    TwoStep,
    Nested,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::Reduced, Variant::TwoStep, Variant::Nested];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
            Variant::TwoStep => "two_step",
            Variant::Nested => "nested",
        }
    }

    pub fn uses_aux(self) -> bool {
        matches!(self, Variant::TwoStep | Variant::Nested)
    }
}

/// Subspace dimensions. `central` is the dimension of `B̂`, `joint` the
/// dimension of the inner reduction and `outer` that of the outer one.
/// Fields a variant does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DimPolicy {
    Given { dims: Dims },
    Bootstrap { replicates: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BandwidthPolicy {
    /// Sequential K-fold search: inner constant first, then the outer one.
    Cv {
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default = "default_inner_grid")]
        inner_grid: Vec<f64>,
        #[serde(default = "default_outer_grid")]
        outer_grid: Vec<f64>,
    },
    /// Fixed constants in the bandwidth formulas.
    Fixed { inner: f64, outer: f64 },
    /// Bandwidths used as given, with no dependence on `n`.
    Absolute { inner: f64, outer: f64 },
}

fn default_folds() -> usize {
    bandwidth::DEFAULT_FOLDS
}

fn default_inner_grid() -> Vec<f64> {
    bandwidth::DEFAULT_INNER_GRID.to_vec()
}

fn default_outer_grid() -> Vec<f64> {
    bandwidth::DEFAULT_OUTER_GRID.to_vec()
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        BandwidthPolicy::Cv {
            folds: bandwidth::DEFAULT_FOLDS,
            inner_grid: bandwidth::DEFAULT_INNER_GRID.to_vec(),
            outer_grid: bandwidth::DEFAULT_OUTER_GRID.to_vec(),
        }
    }
}

/// Scale of the outer kernel's argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterScaling {
    /// Each projected coordinate divided by its sample standard deviation.
    #[default]
    Standardized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub dims: DimPolicy,
    pub bandwidth: BandwidthPolicy,
    pub transform: TransformKind,
    pub outer_scaling: OuterScaling,
    pub outer_order: usize,
    pub inner_order: usize,
    /// SDR for reductions of `Y` given a regressor.
    pub response_sdr: Sdr,
    /// SDR for the multivariate auxiliary projection given the covariates.
    pub aux_sdr: Sdr,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            dims: DimPolicy::Bootstrap { replicates: 30 },
            bandwidth: BandwidthPolicy::default(),
            transform: TransformKind::None,
            outer_scaling: OuterScaling::Standardized,
            outer_order: 2,
            inner_order: 2,
            response_sdr: Sdr::new(&[SdrMethod::Sir, SdrMethod::Save, SdrMethod::Phd], DEFAULT_SLICES),
            aux_sdr: Sdr::new(&[SdrMethod::Sir], DEFAULT_SLICES),
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn with_dims(mut self, dims: Dims) -> Self {
        self.dims = DimPolicy::Given { dims };
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

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_outer_scaling(mut self, scaling: OuterScaling) -> Self {
        self.outer_scaling = scaling;
        self
    }
}

/// Known reduction matrices, used in place of SDR estimates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnownProjections {
    /// `(r+p)×d̄` basis acting on the stacked `[Z | U]`.
    pub joint: Option<DMatrix<f64>>,
    /// `p×d` basis acting on `U`.
    pub outer: Option<DMatrix<f64>>,
}

/// Result of the bandwidth search, when one was run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSearch {
    pub inner: Option<CvOutcome>,
    pub outer: CvOutcome,
}

/// A fitted estimator; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct TwoStepModel {
    variant: Variant,
    central: Option<SubspaceEstimate>,
    joint: Option<SubspaceEstimate>,
    outer: Option<SubspaceEstimate>,
    dims: Dims,
    selections: Vec<(String, DimensionSelection)>,
    inner_constant: Option<f64>,
    outer_constant: f64,
    inner_bandwidth: Option<f64>,
    outer_bandwidth: f64,
    outer_scale: Vec<f64>,
    search: Option<BandwidthSearch>,
    covariate_dim: usize,
    engine: Engine,
}

/// Serializable description of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub variant: Variant,
    pub dims: Dims,
    pub inner_constant: Option<f64>,
    pub outer_constant: f64,
    pub inner_bandwidth: Option<f64>,
    pub outer_bandwidth: f64,
    /// Standard deviations dividing the outer coordinates (ones when raw).
    pub outer_scale: Vec<f64>,
    pub transform: TransformKind,
    pub dimension_selection: Vec<(String, DimensionSelection)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_search: Option<BandwidthSearch>,
}

struct Reductions {
    central: Option<SubspaceEstimate>,
    joint: Option<SubspaceEstimate>,
    outer: Option<SubspaceEstimate>,
    dims: Dims,
    selections: Vec<(String, DimensionSelection)>,
    outer_map: DMatrix<f64>,
    /// `(aux_map, cov_map)` of the inner regressor.
    inner_maps: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

const TAG_CENTRAL: u64 = 1;
const TAG_JOINT: u64 = 2;
const TAG_OUTER: u64 = 3;
const TAG_CV: u64 = 4;

/// Kernel regression on all covariates (`use_sdr = false`) or on an SDR
/// reduction of them.
pub fn fit_direct(sample: &TrainingSample, use_sdr: bool, opts: &FitOptions) -> Result<TwoStepModel> {
    fit(sample, if use_sdr { Variant::Reduced } else { Variant::Full }, opts)
}

pub fn fit_two_step(sample: &TrainingSample, opts: &FitOptions) -> Result<TwoStepModel> {
    fit(sample, Variant::TwoStep, opts)
}

pub fn fit_nested(sample: &TrainingSample, opts: &FitOptions) -> Result<TwoStepModel> {
    fit(sample, Variant::Nested, opts)
}

pub fn fit(sample: &TrainingSample, variant: Variant, opts: &FitOptions) -> Result<TwoStepModel> {
    check_sample(sample, variant)?;
    let red = match variant {
        Variant::Full => full_reductions(sample.covariate_dim()),
        Variant::Reduced => reduce_direct(sample, opts)?,
        Variant::TwoStep => reduce_two_step(sample, opts)?,
        Variant::Nested => reduce_nested(sample, opts)?,
    };
    assemble(sample, variant, red, opts)
}

/// Fit with known reduction matrices. `Full` takes none, `Reduced` an outer
/// basis, and `TwoStep`/`Nested` both.
pub fn fit_known(sample: &TrainingSample, variant: Variant, known: &KnownProjections, opts: &FitOptions) -> Result<TwoStepModel> {
    check_sample(sample, variant)?;
    let p = sample.covariate_dim();
    let r = sample.aux_dim();
    let basis = |m: &Option<DMatrix<f64>>, rows: usize, what: &str| -> Result<SubspaceEstimate> {
        let m = m.as_ref().ok_or_else(|| Error::Config(format!("{} model needs a known {what} basis", variant.label())))?;
        if m.nrows() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: m.nrows() });
        }
        SubspaceEstimate::from_basis(m)
    };
    let red = match variant {
        Variant::Full => full_reductions(p),
        Variant::Reduced => {
            let b = basis(&known.outer, p, "outer")?;
            Reductions {
                dims: Dims { central: Some(b.dim()), joint: None, outer: Some(b.dim()) },
                outer_map: b.basis().clone(),
                central: Some(b),
                joint: None,
                outer: None,
                selections: Vec::new(),
                inner_maps: None,
            }
        }
        Variant::TwoStep | Variant::Nested => {
            let j = basis(&known.joint, r + p, "joint")?;
            let o = basis(&known.outer, p, "outer")?;
            let (aux_map, cov_map) = split_rows(j.basis(), r);
            Reductions {
                dims: Dims { central: None, joint: Some(j.dim()), outer: Some(o.dim()) },
                outer_map: o.basis().clone(),
                inner_maps: Some((aux_map, cov_map)),
                central: None,
                joint: Some(j),
                outer: Some(o),
                selections: Vec::new(),
            }
        }
    };
    assemble(sample, variant, red, opts)
}

fn check_sample(sample: &TrainingSample, variant: Variant) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InsufficientSample { needed: 0, got: 0 });
    }
    if variant.uses_aux() && sample.aux_dim() == 0 {
        return Err(Error::MissingAuxiliary);
    }
    Ok(())
}

fn full_reductions(p: usize) -> Reductions {
    Reductions {
        central: None,
        joint: None,
        outer: None,
        dims: Dims { central: None, joint: None, outer: Some(p) },
        selections: Vec::new(),
        outer_map: DMatrix::identity(p, p),
        inner_maps: None,
    }
}

fn split_rows(m: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.rows(0, r).into_owned(), m.rows(r, m.nrows() - r).into_owned())
}

/// Which dimension to use for one reduction: given, or picked by bootstrap.
fn resolve_dim(
    opts: &FitOptions,
    given: impl Fn(&Dims) -> Option<usize>,
    name: &str,
    sdr: &Sdr,
    responses: &DMatrix<f64>,
    predictors: &DMatrix<f64>,
    tag: u64,
    selections: &mut Vec<(String, DimensionSelection)>,
) -> Result<usize> {
    let ambient = predictors.ncols();
    match &opts.dims {
        DimPolicy::Given { dims } => {
            let d = given(dims).ok_or_else(|| Error::Config(format!("dimension `{name}` is required")))?;
            if d == 0 {
                return Err(Error::Config(format!("dimension `{name}` must be >= 1")));
            }
            if d > ambient {
                return Err(Error::DimensionTooLarge { dim: d, ambient });
            }
            Ok(d)
        }
        DimPolicy::Bootstrap { replicates } => {
            let max_dim = if ambient == 1 { 1 } else { ambient - 1 };
            let sel = sdr.select_dimension(responses, predictors, max_dim, *replicates, child_seed(opts.seed, tag))?;
            let d = sel.chosen_dim;
            selections.push((name.to_string(), sel));
            Ok(d)
        }
    }
}

fn estimate(sdr: &Sdr, responses: &DMatrix<f64>, predictors: &DMatrix<f64>, dim: usize) -> Result<SubspaceEstimate> {
    if dim == predictors.ncols() {
        return Ok(SubspaceEstimate::full(dim));
    }
    sdr.estimate(responses, predictors, dim)
}

/// Drop response columns that are constant; SDR carries no information
/// through them.
fn informative_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let keep: Vec<usize> = (0..m.ncols())
        .filter(|&j| {
            let col = m.column(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs()))
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("auxiliary projection is constant over the sample".into()));
    }
    Ok(m.select_columns(&keep))
}

fn reduce_direct(sample: &TrainingSample, opts: &FitOptions) -> Result<Reductions> {
    let mut selections = Vec::new();
    let y = sample.response_matrix();
    let d0 = resolve_dim(opts, |d| d.central, "central", &opts.response_sdr, &y, &sample.u, TAG_CENTRAL, &mut selections)?;
    let b = estimate(&opts.response_sdr, &y, &sample.u, d0)?;
    Ok(Reductions {
        dims: Dims { central: Some(d0), joint: None, outer: Some(d0) },
        outer_map: b.basis().clone(),
        central: Some(b),
        joint: None,
        outer: None,
        selections,
        inner_maps: None,
    })
}

/// Inner reduction of `Y` on `[Z | X]` and outer reduction of the projected
/// `Z` on `X`. Returns `(joint, outer, dims)`.
fn reduce_pair(
    sample: &TrainingSample,
    x: &DMatrix<f64>,
    opts: &FitOptions,
    selections: &mut Vec<(String, DimensionSelection)>,
    max_outer: Option<usize>,
) -> Result<(SubspaceEstimate, SubspaceEstimate)> {
    let r = sample.aux_dim();
    let y = sample.response_matrix();
    let stacked = hstack(&sample.z, x);
    let dbar = resolve_dim(opts, |d| d.joint, "joint", &opts.response_sdr, &y, &stacked, TAG_JOINT, selections)?;
    let joint = estimate(&opts.response_sdr, &y, &stacked, dbar)?;
    let (aux_map, _) = split_rows(joint.basis(), r);
    let aux = informative_columns(&(&sample.z * aux_map))?;
    let d = resolve_dim(opts, |d| d.outer, "outer", &opts.aux_sdr, &aux, x, TAG_OUTER, selections)?;
    if let Some(max) = max_outer {
        if d > max {
            return Err(Error::Config(format!("outer dimension {d} exceeds central dimension {max}")));
        }
    }
    let outer = estimate(&opts.aux_sdr, &aux, x, d)?;
    Ok((joint, outer))
}

fn reduce_two_step(sample: &TrainingSample, opts: &FitOptions) -> Result<Reductions> {
    let mut selections = Vec::new();
    let (joint, outer) = reduce_pair(sample, &sample.u, opts, &mut selections, None)?;
    let (aux_map, cov_map) = split_rows(joint.basis(), sample.aux_dim());
    Ok(Reductions {
        dims: Dims { central: None, joint: Some(joint.dim()), outer: Some(outer.dim()) },
        outer_map: outer.basis().clone(),
        inner_maps: Some((aux_map, cov_map)),
        central: None,
        joint: Some(joint),
        outer: Some(outer),
        selections,
    })
}

fn reduce_nested(sample: &TrainingSample, opts: &FitOptions) -> Result<Reductions> {
    let mut direct = reduce_direct(sample, opts)?;
    let b = direct.central.take().expect("direct reduction sets the central basis");
    let w = &sample.u * b.basis();
    let (joint, outer) = reduce_pair(sample, &w, opts, &mut direct.selections, Some(b.dim()))?;
    let (aux_map, du) = split_rows(joint.basis(), sample.aux_dim());
    Ok(Reductions {
        dims: Dims { central: Some(b.dim()), joint: Some(joint.dim()), outer: Some(outer.dim()) },
        outer_map: b.basis() * outer.basis(),
        inner_maps: Some((aux_map, b.basis() * du)),
        central: Some(b),
        joint: Some(joint),
        outer: Some(outer),
        selections: direct.selections,
    })
}

fn rate(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (4.0 + d as f64))
}

fn sd_scale(points: &PointSet, idx: &[usize]) -> f64 {
    let sub = PointSet::new(idx.iter().flat_map(|&i| points.row(i).to_vec()).collect(), points.dim());
    let s = sub.mean_coordinate_sd();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn assemble(sample: &TrainingSample, variant: Variant, red: Reductions, opts: &FitOptions) -> Result<TwoStepModel> {
    let n = sample.len();
    let d = red.outer_map.ncols();
    if variant.uses_aux() && d >= 2 * opts.outer_order {
        return Err(Error::Config(format!(
            "outer dimension {d} needs a kernel of order above {}; raise the outer kernel order",
            d / 2 * 2
        )));
    }
    let outer_kernel = make_kernel(opts.outer_order, d, 1.0)?;
    let inner = match &red.inner_maps {
        Some((aux_map, cov_map)) => {
            let aux_part = project_rows(&sample.z, aux_map);
            let raw = &sample.z * aux_map + &sample.u * cov_map;
            let transform = match opts.transform {
                TransformKind::None => None,
                kind => Some(fit_transform(&raw, kind)?),
            };
            let points = match &transform {
                None => PointSet::from_matrix(&raw),
                Some(t) => {
                    let rows: Vec<f64> = (0..n)
                        .flat_map(|i| apply_transform(t, &raw.row(i).iter().copied().collect::<Vec<_>>()))
                        .collect();
                    PointSet::new(rows, raw.ncols())
                }
            };
            Some(Inner {
                cov_map: cov_map.clone(),
                aux_part,
                points,
                transform,
                kernel: make_kernel(opts.inner_order, aux_map.ncols(), 1.0)?,
            })
        }
        None => None,
    };
    let mut outer_map = red.outer_map;
    let outer_scale = match opts.outer_scaling {
        OuterScaling::Raw => vec![1.0; d],
        OuterScaling::Standardized => {
            let proj = &sample.u * &outer_map;
            let scale: Vec<f64> = (0..d).map(|j| column_sd(&proj, j)).collect();
            for (j, sd) in scale.iter().enumerate() {
                outer_map.column_mut(j).scale_mut(1.0 / sd);
            }
            scale
        }
    };
    let engine = Engine {
        y: sample.y.clone(),
        u: PointSet::from_matrix(&sample.u),
        outer_points: project_rows(&sample.u, &outer_map),
        outer_map,
        outer_kernel,
        inner,
    };
    let all: Vec<usize> = (0..n).collect();
    let dbar = engine.inner.as_ref().map(|i| i.points.dim());

    let (inner_constant, outer_constant, inner_bandwidth, outer_bandwidth, search) = match &opts.bandwidth {
        BandwidthPolicy::Absolute { inner, outer } => {
            check_positive(&[*inner, *outer])?;
            (None, *outer, dbar.map(|_| *inner), *outer, None)
        }
        BandwidthPolicy::Fixed { inner, outer } => {
            check_positive(&[*inner, *outer])?;
            let ih = engine.inner.as_ref().map(|inn| inner * sd_scale(&inn.points, &all) * rate(n, inn.points.dim()));
            (dbar.map(|_| *inner), *outer, ih, outer * rate(n, d), None)
        }
        BandwidthPolicy::Cv { folds, inner_grid, outer_grid } => {
            let seed = child_seed(opts.seed, TAG_CV);
            let inner_cv = match &engine.inner {
                Some(inn) => {
                    let plan = CvPlan::new(*folds, inner_grid, seed)?;
                    Some(bandwidth::cv_select_batched(&engine.y, &plan, &InnerCv { engine: &engine, inner: inn })?)
                }
                None => None,
            };
            let c_inner = inner_cv.as_ref().map(|o| o.chosen);
            let plan = CvPlan::new(*folds, outer_grid, seed)?;
            let outer_cv = bandwidth::cv_select_batched(&engine.y, &plan, &OuterCv { engine: &engine, inner_constant: c_inner })?;
            let ih = engine
                .inner
                .as_ref()
                .zip(c_inner)
                .map(|(inn, c)| c * sd_scale(&inn.points, &all) * rate(n, inn.points.dim()));
            let chosen = outer_cv.chosen;
            (c_inner, chosen, ih, chosen * rate(n, d), Some(BandwidthSearch { inner: inner_cv, outer: outer_cv }))
        }
    };

    Ok(TwoStepModel {
        variant,
        central: red.central,
        joint: red.joint,
        outer: red.outer,
        dims: red.dims,
        selections: red.selections,
        inner_constant,
        outer_constant,
        inner_bandwidth,
        outer_bandwidth,
        outer_scale,
        search,
        covariate_dim: sample.covariate_dim(),
        engine,
    })
}

/// Sample standard deviation of a column, or 1 when it is degenerate.
fn column_sd(m: &DMatrix<f64>, j: usize) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 1.0;
    }
    let c = m.column(j);
    let mean = c.mean();
    let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

fn check_positive(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config("bandwidths must be positive and finite".into()))
    }
}

/// Held-out prediction of `Y_t` from the inner regressor alone.
struct InnerCv<'a> {
    engine: &'a Engine,
    inner: &'a Inner,
}

impl FoldPredictor for InnerCv<'_> {
    fn predict_fold(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Vec<Vec<Option<f64>>> {
        let smoother = Smoother::subset(&self.inner.points, &self.engine.y, train);
        let base = sd_scale(&self.inner.points, train) * rate(train.len(), self.inner.points.dim());
        grid.iter()
            .map(|c| {
                test.iter()
                    .map(|&t| smooth_with_fallback(&smoother, &self.inner.kernel, self.inner.points.row(t), c * base).ok().map(|r| r.0))
                    .collect()
            })
            .collect()
    }
}

/// Held-out prediction of `Y_t` from the full estimator at `U_t`, for every
/// outer constant at once.
struct OuterCv<'a> {
    engine: &'a Engine,
    inner_constant: Option<f64>,
}

impl FoldPredictor for OuterCv<'_> {
    fn predict_fold(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Vec<Vec<Option<f64>>> {
        let e = self.engine;
        let nt = train.len();
        let outer = e.outer_smoother(train);
        let inner = e.inner_smoother(train);
        let inner_h = match (&e.inner, self.inner_constant) {
            (Some(inn), Some(c)) => c * sd_scale(&inn.points, train) * rate(nt, inn.points.dim()),
            _ => 0.0,
        };
        let hs: Vec<f64> = grid.iter().map(|c| c * rate(nt, e.outer_map.ncols())).collect();
        let mut out = vec![Vec::with_capacity(test.len()); grid.len()];
        for &t in test {
            let preds = e.predict_batch(e.u.row(t), train, &outer, inner.as_ref(), inner_h, &hs);
            for (c, p) in preds.into_iter().enumerate() {
                out[c].push(p.ok().map(|r| r.0));
            }
        }
        out
    }
}

impl TwoStepModel {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `B̂`, for the reduced and nested variants.
    pub fn central(&self) -> Option<&SubspaceEstimate> {
        self.central.as_ref()
    }

    /// The inner reduction on `[Z | U]` (two-step) or `[Z | B̂ᵀU]` (nested).
    pub fn joint(&self) -> Option<&SubspaceEstimate> {
        self.joint.as_ref()
    }

    /// The outer reduction, in `U` coordinates (two-step) or `B̂ᵀU`
    /// coordinates (nested).
    pub fn outer(&self) -> Option<&SubspaceEstimate> {
        self.outer.as_ref()
    }

    /// `p×d` map from `u0` to the argument of the outer kernel (includes
    /// the outer scaling).
    pub fn outer_map(&self) -> &DMatrix<f64> {
        &self.engine.outer_map
    }

    pub fn inner_bandwidth(&self) -> Option<f64> {
        self.inner_bandwidth
    }

    pub fn outer_bandwidth(&self) -> f64 {
        self.outer_bandwidth
    }

    pub fn transform(&self) -> Option<&TransformState> {
        self.engine.inner.as_ref().and_then(|i| i.transform.as_ref())
    }

    pub fn dimension_selections(&self) -> &[(String, DimensionSelection)] {
        &self.selections
    }

    pub fn bandwidth_search(&self) -> Option<&BandwidthSearch> {
        self.search.as_ref()
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            variant: self.variant,
            dims: self.dims,
            inner_constant: self.inner_constant,
            outer_constant: self.outer_constant,
            inner_bandwidth: self.inner_bandwidth,
            outer_bandwidth: self.outer_bandwidth,
            outer_scale: self.outer_scale.clone(),
            transform: self.transform().map(|t| t.kind()).unwrap_or_default(),
            dimension_selection: self.selections.clone(),
            bandwidth_search: self.search.clone(),
        }
    }

    pub fn predict(&self, u0: &[f64]) -> Result<(f64, PredictionDiagnostics)> {
        if u0.len() != self.covariate_dim {
            return Err(Error::DimensionMismatch { expected: self.covariate_dim, got: u0.len() });
        }
        let all: Vec<usize> = (0..self.engine.n()).collect();
        let outer = self.engine.outer_smoother(&all);
        let inner = self.engine.inner_smoother(&all);
        let inner_h = self.inner_bandwidth.unwrap_or(0.0);
        self.engine.predict_batch(u0, &all, &outer, inner.as_ref(), inner_h, &[self.outer_bandwidth]).remove(0)
    }

    /// Predictions at several points, sharing the smoother setup.
    pub fn predict_many(&self, points: &[Vec<f64>]) -> Vec<Result<(f64, PredictionDiagnostics)>> {
        let all: Vec<usize> = (0..self.engine.n()).collect();
        let outer = self.engine.outer_smoother(&all);
        let inner = self.engine.inner_smoother(&all);
        let inner_h = self.inner_bandwidth.unwrap_or(0.0);
        points
            .par_iter()
            .map(|u0| {
                if u0.len() != self.covariate_dim {
                    return Err(Error::DimensionMismatch { expected: self.covariate_dim, got: u0.len() });
                }
                self.engine.predict_batch(u0, &all, &outer, inner.as_ref(), inner_h, &[self.outer_bandwidth]).remove(0)
            })
            .collect()
    }
}
