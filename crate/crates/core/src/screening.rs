//! Fused Kolmogorov filter: rank candidate variables by how much their
//! distribution shifts across slices of the response.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Statistic for one candidate plus any slices merged because of ties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterStatistic {
    pub value: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenReport {
    /// Fused statistic per candidate column, in column order.
    pub statistics: Vec<f64>,
    pub partitions_used: Vec<usize>,
    /// Retained columns, largest statistic first.
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Slice counts `3..=floor(ln n)`; just `[3]` when `ln n < 3`.
pub fn default_slice_counts(n: usize) -> Vec<usize> {
    let top = (n as f64).ln().floor() as usize;
    if top < 3 {
        vec![3]
    } else {
        (3..=top).collect()
    }
}

/// Slice label of each `y` value for `g` quantile slices. Ties can leave
/// slices empty; those are dropped, which merges them with a neighbour.
fn slice_labels(y: &[f64], g: usize) -> (Vec<usize>, usize) {
    let n = y.len();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..g).map(|l| sorted[(l * n).div_ceil(g) - 1]).collect();
    let raw: Vec<usize> = y.iter().map(|v| cuts.partition_point(|c| c < v)).collect();
    let mut used = vec![false; g];
    for &l in &raw {
        used[l] = true;
    }
    let mut remap = vec![0; g];
    let mut k = 0;
    for l in 0..g {
        remap[l] = k;
        if used[l] {
            k += 1;
        }
    }
    (raw.into_iter().map(|l| remap[l]).collect(), k)
}

/// Largest Kolmogorov distance between the conditional empirical CDFs of
/// `x` over the slices in `labels`.
fn max_slice_distance(x: &[f64], labels: &[usize], slices: usize) -> f64 {
    if slices < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; slices];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut counts = vec![0usize; slices];
    let mut best = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let v = x[order[i]];
        while i < order.len() && x[order[i]] == v {
            counts[labels[order[i]]] += 1;
            i += 1;
        }
        // Over pairs, the largest gap at a point is max minus min.
        let (lo, hi) = counts
            .iter()
            .zip(&sizes)
            .map(|(&c, &s)| c as f64 / s as f64)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f), hi.max(f)));
        best = best.max(hi - lo);
    }
    best
}

/// Sum over slice counts of the largest between-slice KS distance.
pub fn fused_kfilter_detail(x: &[f64], y: &[f64], slice_counts: &[usize]) -> Result<FilterStatistic> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: x.len() });
    }
    if slice_counts.is_empty() {
        return Err(Error::InvalidArgument("no slice counts given".into()));
    }
    let n = y.len();
    let mut value = 0.0;
    let mut warnings = Vec::new();
    for &g in slice_counts {
        if g < 2 {
            return Err(Error::InvalidArgument(format!("slice count {g} < 2")));
        }
        if n < g {
            return Err(Error::InsufficientSample { needed: g - 1, got: n });
        }
        let (labels, used) = slice_labels(y, g);
        if used < g {
            warnings.push(format!("G={g}: ties in the response merged {} slice(s)", g - used));
        }
        value += max_slice_distance(x, &labels, used);
    }
    Ok(FilterStatistic { value, warnings })
}

pub fn fused_kfilter(x: &[f64], y: &[f64], slice_counts: &[usize]) -> Result<f64> {
    fused_kfilter_detail(x, y, slice_counts).map(|s| s.value)
}

/// Screen with the default slice counts for `n`.
pub fn screen(candidates: &DMatrix<f64>, y: &[f64], keep: usize) -> Result<ScreenReport> {
    screen_with(candidates, y, keep, &default_slice_counts(y.len()))
}

pub fn screen_with(candidates: &DMatrix<f64>, y: &[f64], keep: usize, slice_counts: &[usize]) -> Result<ScreenReport> {
    let q = candidates.ncols();
    if keep > q {
        return Err(Error::InvalidArgument(format!("keep = {keep} exceeds the {q} candidate columns")));
    }
    if candidates.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: candidates.nrows() });
    }
    let per_column: Vec<FilterStatistic> = (0..q)
        .into_par_iter()
        .map(|j| {
            let x: Vec<f64> = candidates.column(j).iter().copied().collect();
            fused_kfilter_detail(&x, y, slice_counts)
        })
        .collect::<Result<_>>()?;
    let statistics: Vec<f64> = per_column.iter().map(|s| s.value).collect();
    let mut order: Vec<usize> = (0..q).collect();
    // Stable sort keeps the smaller index first on ties.
    order.sort_by(|&a, &b| statistics[b].total_cmp(&statistics[a]));
    order.truncate(keep);
    // The slicing depends only on y, so every column reports the same merges.
    let warnings = per_column.into_iter().next().map(|s| s.warnings).unwrap_or_default();
    Ok(ScreenReport { statistics, partitions_used: slice_counts.to_vec(), kept: order, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64, idx: u64) -> Vec<f64> {
        let mut g = rng::stream(seed, idx);
        (0..n).map(|_| StandardNormal.sample(&mut g)).collect()
    }

    #[test]
    fn identical_variables_give_one() {
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() + i as f64).collect();
        assert!((fused_kfilter(&y, &y, &[3]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_x_gives_zero() {
        let y = normals(100, 1, 0);
        assert_eq!(fused_kfilter(&[2.0; 100], &y, &[3, 4]).unwrap(), 0.0);
    }

    #[test]
    fn independent_variables_stay_small() {
        let below = (0..100)
            .filter(|&s| {
                let x = normals(2000, s, 0);
                let y = normals(2000, s, 1);
                fused_kfilter(&x, &y, &[3, 4, 5]).unwrap() < 0.5
            })
            .count();
        assert!(below >= 95, "{below}/100 below 0.5");
    }

    #[test]
    fn tied_response_merges_slices() {
        let y: Vec<f64> = (0..20).map(|i| if i < 15 { 0.0 } else { 1.0 }).collect();
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let s = fused_kfilter_detail(&x, &y, &[4]).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_copy_ranks_first() {
        let n = 200;
        let mut m = DMatrix::zeros(n, 6);
        for j in 0..6 {
            let col = normals(n, 9, j as u64);
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        let y: Vec<f64> = m.column(3).iter().copied().collect();
        let r = screen(&m, &y, 2).unwrap();
        assert_eq!(r.kept[0], 3);
        assert_eq!(r.partitions_used, vec![3, 4, 5]);
        let all = screen(&m, &y, 6).unwrap();
        let mut sorted = all.kept.clone();
        sorted.sort();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert!(all.kept.windows(2).all(|w| all.statistics[w[0]] >= all.statistics[w[1]]));
        assert!(screen(&m, &y, 7).is_err());
    }

    #[test]
    fn slice_count_defaults() {
        assert_eq!(default_slice_counts(200), vec![3, 4, 5]);
        assert_eq!(default_slice_counts(10), vec![3]);
    }

    proptest! {
        #[test]
        fn statistic_is_bounded(seed in 0u64..500, n in 10usize..80) {
            let x = normals(n, seed, 0);
            let y = normals(n, seed, 1);
            let gs = [2, 3, 5];
            let k = fused_kfilter(&x, &y, &gs).unwrap();
            prop_assert!((0.0..=gs.len() as f64).contains(&k));
        }

        #[test]
        fn monotone_maps_of_x_do_not_matter(seed in 0u64..500, n in 10usize..80) {
            let x = normals(n, seed, 0);
            let y = normals(n, seed, 1);
            let fx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(fused_kfilter(&x, &y, &[3, 4]).unwrap(), fused_kfilter(&fx, &y, &[3, 4]).unwrap());
        }
    }
}
