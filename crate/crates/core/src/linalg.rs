//! Small dense helpers shared by the SDR and transform code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a covariance counts as singular.
const SINGULAR_TOL: f64 = 1e-10;

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n)
}

/// Covariance with divisor `n`.
pub fn covariance(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let centered = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - mean[j]);
    (centered.transpose() * &centered) / n as f64
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order (columns of the returned matrix follow the same order).
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, k| eig.eigenvectors[(i, order[k])]);
    (values, vectors)
}

/// Symmetric inverse square root `Σ^{-1/2}`; fails on (near-)singular input.
pub fn inv_sqrt_spd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(sigma);
    let top = values.first().copied().unwrap_or(0.0);
    let bottom = values.last().copied().unwrap_or(0.0);
    if !(top > 0.0) || bottom <= SINGULAR_TOL * top || !bottom.is_finite() {
        return Err(Error::SingularCovariance);
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|v| 1.0 / v.sqrt())));
    Ok(&vectors * d * vectors.transpose())
}

/// Orthonormal basis for the column span of `m` (Gram–Schmidt via QR), with
/// each column's largest-magnitude entry made positive.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let q = m.clone().qr().q();
    let mut q = q.columns(0, m.ncols()).into_owned();
    canonical_signs(&mut q);
    q
}

pub fn canonical_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Numerical rank via singular values.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_whitens() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let w = inv_sqrt_spd(&s).unwrap();
        let id = &w * &s * &w;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(inv_sqrt_spd(&singular), Err(Error::SingularCovariance));
    }

    #[test]
    fn orthonormal_columns_span_input() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, 2.0]);
        let q = orthonormalize(&m);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-12);
        let joined = DMatrix::from_fn(3, 4, |i, j| if j < 2 { m[(i, j)] } else { q[(i, j - 2)] });
        assert_eq!(rank(&joined, 1e-9), 2);
    }
}
