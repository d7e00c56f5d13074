//! K-fold cross-validated choice of a bandwidth constant from a grid.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default grid for the inner bandwidth constant.
pub const DEFAULT_INNER_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
/// Default grid for the outer constant `C` in `h = C n^{-1/(4+d)}`.
pub const DEFAULT_OUTER_GRID: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_FOLDS: usize = 10;

/// Fold count, candidate grid (kept sorted and deduplicated) and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    folds: usize,
    grid: Vec<f64>,
    seed: u64,
}

impl CvPlan {
    pub fn new(folds: usize, grid: &[f64], seed: u64) -> Result<Self> {
        if folds < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
        }
        if grid.is_empty() {
            return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
        }
        if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument("bandwidth grid entries must be positive".into()));
        }
        let mut grid = grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(Self { folds, grid, seed })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Shuffle `0..n` with `seed` and cut it into `folds` contiguous blocks whose
/// sizes differ by at most one.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Complement of a fold, in increasing index order.
pub fn training_indices(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &t in test {
        mask[t] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Predicts held-out responses for every grid candidate at once, so work
/// shared across candidates is done once per fold.
pub trait FoldPredictor: Sync {
    /// `result[c][k]` is the prediction for `test[k]` under `grid[c]`, or
    /// `None` when the candidate cannot predict that point.
    fn predict_fold(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Vec<Vec<Option<f64>>>;
}

/// Chosen candidate and the mean held-out squared error of every candidate
/// (aligned with the sorted grid; `inf` when a candidate failed on a fold).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOutcome {
    pub chosen: f64,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Cross-validate with a batched predictor.
pub fn cv_select_batched<P: FoldPredictor>(responses: &[f64], plan: &CvPlan, predictor: &P) -> Result<CvOutcome> {
    let n = responses.len();
    if n < plan.folds {
        return Err(Error::InsufficientSample { needed: plan.folds - 1, got: n });
    }
    let folds = fold_partition(n, plan.folds, plan.seed);
    let grid = plan.grid();
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|test| {
            let train = training_indices(n, test);
            let preds = predictor.predict_fold(&train, test, grid);
            preds
                .iter()
                .map(|cand| {
                    let mut sse = 0.0;
                    for (k, p) in cand.iter().enumerate() {
                        match p {
                            Some(v) => sse += (responses[test[k]] - v).powi(2),
                            None => return f64::INFINITY,
                        }
                    }
                    sse / test.len() as f64
                })
                .collect()
        })
        .collect();

    let mut scores = vec![0.0; grid.len()];
    for (f, fold_scores) in per_fold.iter().enumerate() {
        if fold_scores.iter().all(|s| !s.is_finite()) {
            return Err(Error::CrossValidation { fold: f });
        }
        for (s, v) in scores.iter_mut().zip(fold_scores) {
            *s += v;
        }
    }
    for s in scores.iter_mut() {
        *s /= plan.folds as f64;
    }
    let mut best = 0;
    for c in 1..grid.len() {
        if scores[c] < scores[best] {
            best = c;
        }
    }
    Ok(CvOutcome { chosen: grid[best], grid: grid.to_vec(), scores })
}

struct ClosurePredictor<F>(F);

impl<F, P> FoldPredictor for ClosurePredictor<F>
where
    F: Fn(&[usize], f64) -> Result<P> + Sync,
    P: Fn(usize) -> Result<f64>,
{
    fn predict_fold(&self, train: &[usize], test: &[usize], grid: &[f64]) -> Vec<Vec<Option<f64>>> {
        grid.iter()
            .map(|&c| match (self.0)(train, c) {
                Ok(pred) => test.iter().map(|&t| pred(t).ok()).collect(),
                Err(_) => vec![None; test.len()],
            })
            .collect()
    }
}

/// Cross-validate with a fit closure: `fit(train, candidate)` returns a
/// predictor mapping a held-out index to its prediction.
pub fn cv_select<F, P>(responses: &[f64], plan: &CvPlan, fit: F) -> Result<CvOutcome>
where
    F: Fn(&[usize], f64) -> Result<P> + Sync,
    P: Fn(usize) -> Result<f64>,
{
    cv_select_batched(responses, plan, &ClosurePredictor(fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_kernel, nadaraya_watson};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn partition_is_balanced_permutation(n in 2usize..200, folds in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= folds);
            let parts = fold_partition(n, folds, seed);
            prop_assert_eq!(parts.len(), folds);
            let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = parts.concat();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn selection_ignores_grid_order(seed in 0u64..50) {
            let (x, y) = noisy_line(60, seed);
            let grid = [0.05, 0.1, 0.2, 0.4, 0.8];
            let mut rev = grid;
            rev.reverse();
            let a = cv_select(&y, &CvPlan::new(5, &grid, seed).unwrap(), nw_fit(&x, &y)).unwrap();
            let b = cv_select(&y, &CvPlan::new(5, &rev, seed).unwrap(), nw_fit(&x, &y)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    fn noisy_line(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        use rand::Rng;
        let mut g = rng::stream(seed, 9);
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y = x.iter().map(|v| (6.0 * v).sin() + 0.3 * (g.random::<f64>() - 0.5)).collect();
        (x, y)
    }

    fn nw_fit<'a>(x: &'a [f64], y: &'a [f64]) -> impl Fn(&[usize], f64) -> Result<Box<dyn Fn(usize) -> Result<f64> + 'a>> + Sync + 'a {
        move |train: &[usize], h: f64| {
            let pts = DMatrix::from_fn(train.len(), 1, |i, _| x[train[i]]);
            let vals: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let k = make_kernel(2, 1, h)?;
            Ok(Box::new(move |t: usize| nadaraya_watson(&k, &pts, &vals, &[x[t]])) as Box<dyn Fn(usize) -> Result<f64>>)
        }
    }

    #[test]
    fn single_candidate_is_returned() {
        let (x, y) = noisy_line(40, 1);
        let out = cv_select(&y, &CvPlan::new(4, &[0.3], 1).unwrap(), nw_fit(&x, &y)).unwrap();
        assert_eq!(out.chosen, 0.3);
        assert!(out.scores[0].is_finite());
    }

    #[test]
    fn noiseless_line_interior_minimum() {
        // Equispaced noiseless line: the smallest bandwidth leaves held-out
        // points without neighbours, larger ones add boundary bias.
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let grid = [0.005, 0.05, 0.1, 0.2, 0.4];
        let out = cv_select(&y, &CvPlan::new(10, &grid, 3).unwrap(), nw_fit(&x, &y)).unwrap();
        assert!(out.scores[0].is_infinite());
        let best = out.grid.iter().position(|&g| g == out.chosen).unwrap();
        assert!(best > 0);
        assert!(out.scores[best] < out.scores[grid.len() - 1]);
        for w in out.scores[best..].windows(2) {
            assert!(w[0] <= w[1], "scores not monotone past the minimum: {:?}", out.scores);
        }
    }

    #[test]
    fn ties_pick_smaller_candidate() {
        let y = vec![1.0; 20];
        let out = cv_select(&y, &CvPlan::new(4, &[2.0, 1.0, 3.0], 0).unwrap(), |_train: &[usize], _c: f64| {
            Ok(|_t: usize| Ok(1.0))
        })
        .unwrap();
        assert_eq!(out.chosen, 1.0);
        assert_eq!(out.scores, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_failing_fold_is_reported() {
        let y = vec![0.0; 10];
        let err = cv_select(&y, &CvPlan::new(2, &[1.0], 0).unwrap(), |_train: &[usize], _c: f64| {
            Ok(|_t: usize| Err::<f64, _>(Error::EmptyNeighborhood))
        })
        .unwrap_err();
        assert_eq!(err, Error::CrossValidation { fold: 0 });
    }

    #[test]
    fn plan_validation() {
        assert!(CvPlan::new(1, &[1.0], 0).is_err());
        assert!(CvPlan::new(3, &[], 0).is_err());
        assert!(CvPlan::new(3, &[1.0, -1.0], 0).is_err());
        assert_eq!(CvPlan::new(3, &[2.0, 1.0, 2.0], 0).unwrap().grid(), &[1.0, 2.0]);
    }
}
