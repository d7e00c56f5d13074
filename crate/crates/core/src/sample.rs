use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Training data: response `y`, covariates `u` (n×p) and auxiliary
/// variables `z` (n×r). `r` may be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub y: Vec<f64>,
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl TrainingSample {
    pub fn new(y: Vec<f64>, u: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if u.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.nrows() });
        }
        if z.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: z.nrows() });
        }
        if u.ncols() == 0 {
            return Err(Error::InvalidArgument("sample needs at least one covariate".into()));
        }
        Ok(Self { y, u, z })
    }

    /// Sample without auxiliary variables.
    pub fn without_aux(y: Vec<f64>, u: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, u, DMatrix::zeros(n, 0))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate dimension `p`.
    pub fn covariate_dim(&self) -> usize {
        self.u.ncols()
    }

    /// Auxiliary dimension `r`.
    pub fn aux_dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn covariate_row(&self, i: usize) -> Vec<f64> {
        self.u.row(i).iter().copied().collect()
    }

    /// Rows selected by `idx`, in that order (duplicates allowed).
    pub fn subset(&self, idx: &[usize]) -> TrainingSample {
        TrainingSample {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            u: select_rows(&self.u, idx),
            z: select_rows(&self.z, idx),
        }
    }

    /// `[Z | U]`, the stacked regressor of the inner step.
    pub fn stacked(&self) -> DMatrix<f64> {
        hstack(&self.z, &self.u)
    }

    pub fn response_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.len(), 1, &self.y)
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let ca = a.ncols();
    DMatrix::from_fn(a.nrows(), ca + b.ncols(), |i, j| {
        if j < ca {
            a[(i, j)]
        } else {
            b[(i, j - ca)]
        }
    })
}
