//! Compactly supported product kernels of arbitrary even order and the
//! Nadaraya–Watson ratio estimator.
//!
//! The univariate profile of order `m` is the Epanechnikov kernel
//! `(3/4)(1 - t²)` multiplied by an even polynomial in `t` of degree `m - 2`
//! whose coefficients cancel the moments `2, 4, …, m - 2`. Order 2 is the
//! plain Epanechnikov kernel. Every profile is supported on `[-1, 1]`.
//!
//! The product kernel of dimension `s` and bandwidth `h` is
//! `K_h(x) = h^{-s} Π κ(x_j / h)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest order accepted by [`make_kernel`]. The moment system is a
/// Hilbert-type matrix and loses accuracy quickly beyond this.
pub const MAX_ORDER: usize = 16;
const MAX_COEFFS: usize = MAX_ORDER / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Epanechnikov,
}

/// A product kernel: family, even order `m`, dimension `s`, bandwidth `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    order: usize,
    dim: usize,
    bandwidth: f64,
    /// `κ(t) = (3/4)(1 - t²) Σ_k coeffs[k] t^{2k}` on `|t| < 1`.
    coeffs: [f64; MAX_COEFFS],
    n_coeffs: usize,
}

/// Build a kernel of the given even `order`, product dimension and bandwidth.
pub fn make_kernel(order: usize, dim: usize, bandwidth: f64) -> Result<KernelSpec> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::InvalidKernel(format!("order must be even and >= 2, got {order}")));
    }
    if order > MAX_ORDER {
        return Err(Error::InvalidKernel(format!("order {order} exceeds supported maximum {MAX_ORDER}")));
    }
    if dim == 0 {
        return Err(Error::InvalidKernel("dimension must be >= 1".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidKernel(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (coeffs, n_coeffs) = profile_coefficients(order);
    Ok(KernelSpec { family: KernelFamily::Epanechnikov, order, dim, bandwidth, coeffs, n_coeffs })
}

/// `∫_{-1}^{1} t^{2k} (3/4)(1 - t²) dt`.
fn base_even_moment(k: usize) -> f64 {
    let a = (2 * k) as f64;
    1.5 * (1.0 / (a + 1.0) - 1.0 / (a + 3.0))
}

fn profile_coefficients(order: usize) -> ([f64; MAX_COEFFS], usize) {
    let n = order / 2;
    let mut coeffs = [0.0; MAX_COEFFS];
    if n == 1 {
        coeffs[0] = 1.0;
        return (coeffs, 1);
    }
    // Row j: ∫ t^{2j} κ = δ_{j0} for j = 0..n-1.
    let a = DMatrix::from_fn(n, n, |j, k| base_even_moment(j + k));
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    let sol = a.lu().solve(&b).expect("moment system is nonsingular");
    for k in 0..n {
        coeffs[k] = sol[k];
    }
    (coeffs, n)
}

impl KernelSpec {
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Same kernel with a different bandwidth.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<KernelSpec> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidKernel(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(KernelSpec { bandwidth, ..*self })
    }

    /// Same kernel with a different product dimension.
    pub fn with_dim(&self, dim: usize) -> Result<KernelSpec> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be >= 1".into()));
        }
        Ok(KernelSpec { dim, ..*self })
    }

    /// Univariate profile κ(t).
    #[inline]
    pub fn profile(&self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let t2 = t * t;
        // Horner in t²
        let mut poly = 0.0;
        for k in (0..self.n_coeffs).rev() {
            poly = poly * t2 + self.coeffs[k];
        }
        0.75 * (1.0 - t2) * poly
    }

    /// Closed-form moment `∫ t^k κ(t) dt`.
    pub fn moment(&self, k: usize) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        (0..self.n_coeffs).map(|j| self.coeffs[j] * base_even_moment(j + k / 2)).sum()
    }

    /// `K_h(x) = h^{-s} Π κ(x_j / h)`.
    pub fn eval_product(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let scale = self.bandwidth.powi(self.dim as i32);
        Ok(self.unnormalized(x.iter().copied(), self.bandwidth) / scale)
    }

    /// `Π κ(d_j / h)` without the `h^{-s}` factor, which cancels in every
    /// ratio estimator. Stops at the first coordinate outside the support.
    #[inline]
    pub(crate) fn unnormalized<I: Iterator<Item = f64>>(&self, diffs: I, h: f64) -> f64 {
        let mut w = 1.0;
        for d in diffs {
            let t = d / h;
            if t.abs() >= 1.0 {
                return 0.0;
            }
            w *= self.profile(t);
        }
        w
    }
}

/// Nadaraya–Watson estimate `Σ vᵢ K_h(xᵢ - q) / Σ K_h(xᵢ - q)`.
///
/// `points` is n×s with one observation per row. Returns
/// [`Error::EmptyNeighborhood`] when the denominator is exactly zero.
pub fn nadaraya_watson(kernel: &KernelSpec, points: &DMatrix<f64>, values: &[f64], query: &[f64]) -> Result<f64> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("nadaraya_watson needs at least one point".into()));
    }
    if values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: values.len() });
    }
    if points.ncols() != kernel.dim() || query.len() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: query.len().min(points.ncols()) });
    }
    let h = kernel.bandwidth();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let w = kernel.unnormalized((0..query.len()).map(|j| points[(i, j)] - query[j]), h);
        num += w * values[i];
        den += w;
    }
    if den == 0.0 {
        return Err(Error::EmptyNeighborhood);
    }
    Ok(num / den)
}

/// Row-major point cloud; the layout used by the hot smoothing loops.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "point buffer does not match dimension");
        Self { data, dim }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self { data, dim: d }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean over coordinates of the per-coordinate standard deviation.
    pub fn mean_coordinate_sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for j in 0..self.dim {
            let mean = (0..n).map(|i| self.row(i)[j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (self.row(i)[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            total += var.sqrt();
        }
        total / self.dim as f64
    }
}

/// Kernel-weighted sums over a fixed set of points, with the points sorted on
/// their first coordinate so a query only visits its bandwidth window.
#[derive(Debug, Clone)]
pub struct Smoother {
    points: PointSet,
    values: Vec<f64>,
    order: Vec<usize>,
    keys: Vec<f64>,
}

/// Numerator, denominator and number of points with nonzero weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSum {
    pub numerator: f64,
    pub denominator: f64,
    pub support: usize,
}

impl WeightedSum {
    pub fn ratio(&self) -> Option<f64> {
        if self.denominator == 0.0 {
            None
        } else {
            Some(self.numerator / self.denominator)
        }
    }
}

impl Smoother {
    pub fn new(points: PointSet, values: Vec<f64>) -> Self {
        assert_eq!(points.len(), values.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points.row(a)[0].total_cmp(&points.row(b)[0]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| points.row(i)[0]).collect();
        Self { points, values, order, keys }
    }

    /// Smoother restricted to the rows in `idx`.
    pub fn subset(points: &PointSet, values: &[f64], idx: &[usize]) -> Self {
        let dim = points.dim();
        let mut data = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            data.extend_from_slice(points.row(i));
        }
        Self::new(PointSet::new(data, dim), idx.iter().map(|&i| values[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Weighted sums at `query` for bandwidth `h` (kernel's own bandwidth ignored).
    pub fn weighted_sum(&self, kernel: &KernelSpec, query: &[f64], h: f64) -> WeightedSum {
        debug_assert_eq!(query.len(), self.points.dim());
        let lo = self.keys.partition_point(|&k| k <= query[0] - h);
        let hi = self.keys.partition_point(|&k| k < query[0] + h);
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        let mut support = 0;
        for &i in &self.order[lo..hi] {
            let row = self.points.row(i);
            let w = kernel.unnormalized(row.iter().zip(query).map(|(a, b)| a - b), h);
            if w != 0.0 {
                numerator += w * self.values[i];
                denominator += w;
                support += 1;
            }
        }
        WeightedSum { numerator, denominator, support }
    }

    /// Nadaraya–Watson estimate at `query` with bandwidth `h`.
    pub fn estimate(&self, kernel: &KernelSpec, query: &[f64], h: f64) -> Result<f64> {
        self.weighted_sum(kernel, query, h).ratio().ok_or(Error::EmptyNeighborhood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn epanechnikov_peak_and_support() {
        let k = make_kernel(2, 1, 1.0).unwrap();
        assert_eq!(k.profile(0.0), 0.75);
        assert_eq!(k.profile(1.0), 0.0);
        assert_eq!(k.profile(-1.5), 0.0);
        assert_eq!(k.eval_product(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn fourth_order_matches_closed_form() {
        // (15/32)(1 - t²)(3 - 7t²)
        let k = make_kernel(4, 1, 1.0).unwrap();
        for &t in &[0.0, 0.2, 0.5, 0.77, -0.9] {
            let expected = 15.0 / 32.0 * (1.0 - t * t) * (3.0 - 7.0 * t * t);
            assert_relative_eq!(k.profile(t), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_moments() {
        for order in (2..=10).step_by(2) {
            let k = make_kernel(order, 1, 1.0).unwrap();
            assert_relative_eq!(k.moment(0), 1.0, epsilon = 1e-9);
            for l in 1..order {
                assert!(k.moment(l).abs() < 1e-9, "order {order} moment {l} = {}", k.moment(l));
            }
            assert!(k.moment(order).abs() > 1e-6);
        }
        assert_relative_eq!(make_kernel(2, 1, 1.0).unwrap().moment(2), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_kernel(3, 1, 1.0).is_err());
        assert!(make_kernel(0, 1, 1.0).is_err());
        assert!(make_kernel(2, 0, 1.0).is_err());
        assert!(make_kernel(2, 1, 0.0).is_err());
        assert!(make_kernel(2, 1, -1.0).is_err());
        assert!(make_kernel(2, 1, f64::NAN).is_err());
        assert!(make_kernel(MAX_ORDER + 2, 1, 1.0).is_err());
    }

    #[test]
    fn product_kernel_values() {
        let k = make_kernel(2, 2, 1.0).unwrap();
        assert_relative_eq!(k.eval_product(&[0.0, 0.0]).unwrap(), 0.5625);
        let k = make_kernel(2, 1, 2.0).unwrap();
        assert_relative_eq!(k.eval_product(&[1.0]).unwrap(), 0.28125, epsilon = 1e-15);
        let k = make_kernel(2, 3, 0.7).unwrap();
        assert_eq!(k.eval_product(&[0.1, 1.4, 0.0]).unwrap(), 0.0);
        assert!(matches!(k.eval_product(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nw_hand_values() {
        let k = make_kernel(2, 1, 2.0).unwrap();
        let pts = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let v = nadaraya_watson(&k, &pts, &[0.0, 1.0], &[0.0]).unwrap();
        assert_relative_eq!(v, 0.5625 / (0.75 + 0.5625), epsilon = 1e-15);

        let one = DMatrix::from_column_slice(1, 1, &[0.3]);
        assert_eq!(nadaraya_watson(&k, &one, &[4.2], &[1.0]).unwrap(), 4.2);
        assert_eq!(nadaraya_watson(&k, &one, &[4.2], &[5.0]), Err(Error::EmptyNeighborhood));
    }

    fn cloud() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.0f64..3.0, n * 2),
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(-1.0f64..1.0, 2),
            )
        })
    }

    proptest! {
        #[test]
        fn nw_convex_translation_and_scaling((pts, vals, q) in cloud(), h in 0.3f64..4.0, shift in -5.0f64..5.0) {
            let n = vals.len();
            let m = DMatrix::from_row_slice(n, 2, &pts);
            let k = make_kernel(2, 2, h).unwrap();
            let base = nadaraya_watson(&k, &m, &vals, &q);
            if let Ok(v) = base {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);

                let shifted = m.map(|x| x + shift);
                let qs: Vec<f64> = q.iter().map(|x| x + shift).collect();
                let vt = nadaraya_watson(&k, &shifted, &vals, &qs).unwrap();
                prop_assert!((vt - v).abs() <= 1e-9 * (1.0 + v.abs()));

                let scaled = m.map(|x| x / h);
                let qh: Vec<f64> = q.iter().map(|x| x / h).collect();
                let k1 = k.with_bandwidth(1.0).unwrap();
                let vs = nadaraya_watson(&k1, &scaled, &vals, &qh).unwrap();
                prop_assert!((vs - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn smoother_matches_brute_force((pts, vals, q) in cloud(), h in 0.2f64..3.0) {
            let n = vals.len();
            let m = DMatrix::from_row_slice(n, 2, &pts);
            let k = make_kernel(2, 2, h).unwrap();
            let s = Smoother::new(PointSet::new(pts.clone(), 2), vals.clone());
            match (nadaraya_watson(&k, &m, &vals, &q), s.estimate(&k, &q, h)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs())),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "mismatch {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn constant_values_reproduced((pts, _vals, q) in cloud(), c in -50.0f64..50.0) {
            let n = pts.len() / 2;
            let m = DMatrix::from_row_slice(n, 2, &pts);
            let k = make_kernel(2, 2, 2.5).unwrap();
            if let Ok(v) = nadaraya_watson(&k, &m, &vec![c; n], &q) {
                prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
            }
        }
    }
}
