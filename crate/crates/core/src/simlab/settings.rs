//! The five generative designs with analytic conditional means and the
//! population reduction matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sample::TrainingSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingId {
    A1,
    /// A1 with the single auxiliary variable `z1`.
    A1P,
    A2,
    A3,
    B,
}

impl SettingId {
    pub const ALL: [SettingId; 5] = [SettingId::A1, SettingId::A1P, SettingId::A2, SettingId::A3, SettingId::B];
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SettingId::A1 => "A1",
            SettingId::A1P => "A1P",
            SettingId::A2 => "A2",
            SettingId::A3 => "A3",
            SettingId::B => "B",
        };
        f.write_str(s)
    }
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A1" => Ok(SettingId::A1),
            "A1P" | "A1'" => Ok(SettingId::A1P),
            "A2" => Ok(SettingId::A2),
            "A3" => Ok(SettingId::A3),
            "B" => Ok(SettingId::B),
            other => Err(Error::Config(format!("unknown setting '{other}'"))),
        }
    }
}

/// Dimensions of every reduction in a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueDims {
    pub p: usize,
    pub r: usize,
    /// Central subspace of Y given U.
    pub central: usize,
    /// Joint reduction of (Z, U).
    pub joint: usize,
    /// Outer reduction of U for the joint two-step estimator.
    pub outer: usize,
    /// Joint reduction of (Z, BᵀU).
    pub nested_joint: usize,
    /// Outer reduction of BᵀU.
    pub nested_outer: usize,
}

/// Population reduction matrices as displayed for each design (columns not
/// normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct TrueMatrices {
    /// `B`, p×d0.
    pub central: DMatrix<f64>,
    /// `C_z`, r×d̄1.
    pub joint_aux: DMatrix<f64>,
    /// `C_u`, p×d̄1.
    pub joint_cov: DMatrix<f64>,
    /// `C`, p×d1.
    pub outer: DMatrix<f64>,
    /// `D_z`, r×d̄2.
    pub nested_aux: DMatrix<f64>,
    /// `D_u`, d0×d̄2.
    pub nested_cov: DMatrix<f64>,
    /// `D`, d0×d2.
    pub nested_outer: DMatrix<f64>,
}

impl TrueMatrices {
    /// `(C_z; C_u)`, the joint reduction of the stacked `(Z, U)`.
    pub fn joint(&self) -> DMatrix<f64> {
        vstack(&self.joint_aux, &self.joint_cov)
    }

    /// `(D_z; B D_u)`: the nested inner reduction expressed on `(Z, U)`.
    pub fn nested_joint_on_u(&self) -> DMatrix<f64> {
        vstack(&self.nested_aux, &(&self.central * &self.nested_cov))
    }

    /// `B D`: the nested outer reduction expressed on `U`.
    pub fn nested_outer_on_u(&self) -> DMatrix<f64> {
        &self.central * &self.nested_outer
    }
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ra = a.nrows();
    DMatrix::from_fn(ra + b.nrows(), a.ncols(), |i, j| if i < ra { a[(i, j)] } else { b[(i - ra, j)] })
}

fn rows(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

#[derive(Debug, Clone)]
enum CovariateLaw {
    Uniform { lower: [f64; 4], upper: [f64; 4] },
    Normal { mean: DVector<f64>, chol: DMatrix<f64> },
}

#[derive(Debug, Clone)]
enum NoiseLaw {
    /// η_k ~ Unif(0, upper_k), ε ~ N(0, 1).
    Uniform { upper: [f64; 3] },
    /// η ~ N(0, diag(var)), ε ~ N(0, eps_var).
    Normal { var: [f64; 3], eps_var: f64 },
}

/// A complete generative design.
#[derive(Debug, Clone)]
pub struct SettingSpec {
    pub id: SettingId,
    covariates: CovariateLaw,
    noise: NoiseLaw,
    pub dims: TrueDims,
    pub matrices: TrueMatrices,
}

impl SettingSpec {
    pub fn new(id: SettingId) -> Self {
        match id {
            SettingId::A1 | SettingId::A1P => a1(id),
            SettingId::A2 => a2(),
            SettingId::A3 => a3(),
            SettingId::B => setting_b(),
        }
    }

    /// Stated covariance of `U` for the Gaussian design; `None` otherwise.
    pub fn covariate_covariance(&self) -> Option<DMatrix<f64>> {
        match &self.covariates {
            CovariateLaw::Normal { chol, .. } => Some(chol * chol.transpose()),
            CovariateLaw::Uniform { .. } => None,
        }
    }

    pub fn covariate_mean(&self) -> DVector<f64> {
        match &self.covariates {
            CovariateLaw::Normal { mean, .. } => mean.clone(),
            CovariateLaw::Uniform { lower, upper } => DVector::from_fn(4, |k, _| 0.5 * (lower[k] + upper[k])),
        }
    }

    fn draw_u(&self, g: &mut ChaCha8Rng) -> [f64; 4] {
        match &self.covariates {
            CovariateLaw::Uniform { lower, upper } => {
                let mut u = [0.0; 4];
                for k in 0..4 {
                    u[k] = lower[k] + (upper[k] - lower[k]) * g.random::<f64>();
                }
                u
            }
            CovariateLaw::Normal { mean, chol } => {
                let e: [f64; 4] = std::array::from_fn(|_| std_normal(g));
                std::array::from_fn(|k| mean[k] + (0..=k).map(|j| chol[(k, j)] * e[j]).sum::<f64>())
            }
        }
    }

    fn draw_noise(&self, g: &mut ChaCha8Rng) -> ([f64; 3], f64) {
        match &self.noise {
            NoiseLaw::Uniform { upper } => {
                let eta = std::array::from_fn(|k| upper[k] * g.random::<f64>());
                let eps = std_normal(g);
                (eta, eps)
            }
            NoiseLaw::Normal { var, eps_var } => {
                let eta = std::array::from_fn(|k| var[k].sqrt() * std_normal(g));
                let eps = eps_var.sqrt() * std_normal(g);
                (eta, eps)
            }
        }
    }

    /// Structural equations: `(z, y)` from covariates and noise.
    pub fn structural(&self, u: &[f64; 4], eta: &[f64; 3], eps: f64) -> (Vec<f64>, f64) {
        let [u1, u2, u3, u4] = *u;
        let [e1, e2, e3] = *eta;
        match self.id {
            SettingId::A1 | SettingId::A1P => {
                let z1 = (u1 - u2).abs() + e1;
                let y = (z1 + 7.0 * u4) / (u3 * u3 + 1.0) + eps;
                if self.id == SettingId::A1 {
                    (vec![z1, u2 + e2, u1 + e3], y)
                } else {
                    (vec![z1], y)
                }
            }
            SettingId::A2 => {
                let z1 = -5.0 * (u2 - e1) + 0.1 * u1 * u3;
                let z2 = 0.5 * u1.abs() + e2;
                let z3 = -3.0 * (u2.abs() - e3);
                let y = z1 - 0.1 * u1 * u3 - 3.0 * z3 + u4.abs() + 0.5 * eps;
                (vec![z1, z2, z3], y)
            }
            SettingId::A3 => {
                let z1 = 2.0 * (-u1 + u4) + e1;
                let z2 = (-u1 + u4) + e2;
                let z3 = u4 + e3;
                let y = z1 - z2 + u1 + u2 + (u1 - u3).powi(2) + eps;
                (vec![z1, z2, z3], y)
            }
            SettingId::B => {
                let z1 = u1 + e1;
                let z2 = u2 + e2;
                let z3 = u1 + e3;
                let y = 2.0 * z3 * (z1 + u3) + eps;
                (vec![z1, z2, z3], y)
            }
        }
    }

    /// Draw `n` observations; bitwise reproducible in `(setting, n, seed)`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<TrainingSample> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let mut g = rng::stream(seed, 0);
        let r = self.dims.r;
        let mut y = Vec::with_capacity(n);
        let mut u = DMatrix::zeros(n, 4);
        let mut z = DMatrix::zeros(n, r);
        for i in 0..n {
            let ui = self.draw_u(&mut g);
            let (eta, eps) = self.draw_noise(&mut g);
            let (zi, yi) = self.structural(&ui, &eta, eps);
            for k in 0..4 {
                u[(i, k)] = ui[k];
            }
            for k in 0..r {
                z[(i, k)] = zi[k];
            }
            y.push(yi);
        }
        TrainingSample::new(y, u, z)
    }

    /// Analytic `E(Y | U = u0)`.
    pub fn true_psi(&self, u0: &[f64]) -> Result<f64> {
        if u0.len() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: u0.len() });
        }
        let (u1, u2, u3, u4) = (u0[0], u0[1], u0[2], u0[3]);
        let eta_mean = |k: usize| match &self.noise {
            NoiseLaw::Uniform { upper } => upper[k] / 2.0,
            NoiseLaw::Normal { .. } => 0.0,
        };
        Ok(match self.id {
            SettingId::A1 | SettingId::A1P => ((u1 - u2).abs() + eta_mean(0) + 7.0 * u4) / (u3 * u3 + 1.0),
            SettingId::A2 => -5.0 * u2 + 9.0 * u2.abs() - 9.0 * eta_mean(2) + 5.0 * eta_mean(0) + u4.abs(),
            SettingId::A3 => u2 + u4 + (u1 - u3).powi(2) + eta_mean(0) - eta_mean(1),
            // η1 and η3 are independent with mean zero
            SettingId::B => 2.0 * u1 * (u1 + u3),
        })
    }

    /// Draw `count` evaluation points from the covariate law, sorted by
    /// their true conditional mean (ties keep draw order).
    pub fn draw_eval_points(&self, count: usize, seed: u64) -> Result<Vec<EvalPoint>> {
        if count == 0 {
            return Err(Error::InvalidArgument("need at least one evaluation point".into()));
        }
        let mut g = rng::stream(seed, 1);
        let mut pts = Vec::with_capacity(count);
        for _ in 0..count {
            let u = self.draw_u(&mut g).to_vec();
            let psi = self.true_psi(&u)?;
            pts.push(EvalPoint { u0: u, psi });
        }
        pts.sort_by(|a, b| a.psi.total_cmp(&b.psi));
        Ok(pts)
    }

    /// Monte-Carlo average of `Y` at fixed `u0` over fresh noise; test oracle
    /// for [`SettingSpec::true_psi`].
    pub fn simulate_conditional_mean(&self, u0: &[f64; 4], draws: usize, seed: u64) -> (f64, f64) {
        let mut g = rng::stream(seed, 2);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..draws {
            let (eta, eps) = self.draw_noise(&mut g);
            let (_, y) = self.structural(u0, &eta, eps);
            sum += y;
            sq += y * y;
        }
        let m = sum / draws as f64;
        let var = (sq / draws as f64 - m * m).max(0.0);
        (m, (var / draws as f64).sqrt())
    }
}

fn std_normal(g: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(g)
}

/// A covariate value with its true conditional mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub u0: Vec<f64>,
    pub psi: f64,
}

fn a1(id: SettingId) -> SettingSpec {
    let central = rows(4, 3, &[1., 0., 0., -1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    let joint_cov = rows(4, 2, &[0., 0., 0., 0., 0., 1., 7., 0.]);
    let outer = rows(4, 1, &[1., -1., 0., 0.]);
    let nested_cov = rows(3, 2, &[0., 0., 0., 1., 7., 0.]);
    let nested_outer = rows(3, 1, &[1., 0., 0.]);
    let (r, aux) = if id == SettingId::A1 {
        (3, rows(3, 2, &[1., 0., 0., 0., 0., 0.]))
    } else {
        (1, rows(1, 2, &[1., 0.]))
    };
    SettingSpec {
        id,
        covariates: CovariateLaw::Uniform { lower: [-1., -3., -10., 8.], upper: [7., -1., -2., 18.] },
        noise: NoiseLaw::Uniform { upper: [2., 3., 5.] },
        dims: TrueDims { p: 4, r, central: 3, joint: 2, outer: 1, nested_joint: 2, nested_outer: 1 },
        matrices: TrueMatrices {
            central,
            joint_aux: aux.clone(),
            joint_cov,
            outer,
            nested_aux: aux,
            nested_cov,
            nested_outer,
        },
    }
}

fn a2() -> SettingSpec {
    SettingSpec {
        id: SettingId::A2,
        covariates: CovariateLaw::Uniform { lower: [3., 0., -5., 8.], upper: [5., 9., -2., 18.] },
        noise: NoiseLaw::Uniform { upper: [7., 3., 5.] },
        dims: TrueDims { p: 4, r: 3, central: 2, joint: 4, outer: 3, nested_joint: 2, nested_outer: 1 },
        matrices: TrueMatrices {
            central: rows(4, 2, &[0., 0., 1., 0., 0., 0., 0., 1.]),
            joint_aux: rows(3, 4, &[1., 0., 0., 0., 0., 0., 0., 0., -3., 0., 0., 0.]),
            joint_cov: rows(4, 4, &[0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1.]),
            outer: rows(4, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0.]),
            nested_aux: rows(3, 2, &[1., 0., 0., 0., -3., 0.]),
            nested_cov: rows(2, 2, &[0., 0., 0., 1.]),
            nested_outer: rows(2, 1, &[1., 0.]),
        },
    }
}

fn a3() -> SettingSpec {
    SettingSpec {
        id: SettingId::A3,
        covariates: CovariateLaw::Uniform { lower: [-1., -3., -10., 2.], upper: [3., -1., -2., 4.] },
        noise: NoiseLaw::Uniform { upper: [7., 3., 5.] },
        dims: TrueDims { p: 4, r: 3, central: 2, joint: 2, outer: 1, nested_joint: 3, nested_outer: 2 },
        matrices: TrueMatrices {
            central: rows(4, 2, &[0., 1., 1., 0., 0., -1., 1., 0.]),
            joint_aux: rows(3, 2, &[1., 0., -1., 0., 0., 0.]),
            joint_cov: rows(4, 2, &[1., 1., 1., 0., 0., -1., 0., 0.]),
            outer: rows(4, 1, &[-1., 0., 0., 1.]),
            nested_aux: rows(3, 3, &[1., 0., 0., -1., 0., 0., 0., 0., 0.]),
            nested_cov: rows(2, 3, &[0., 1., 0., 0., 0., 1.]),
            nested_outer: DMatrix::identity(2, 2),
        },
    }
}

fn setting_b() -> SettingSpec {
    let sigma = rows(4, 4, &[1., 0., 0.2, 0., 0., 0.3, 0., 0., 0.2, 0., 2., 0., 0., 0., 0., 1.]);
    let chol = sigma.clone().cholesky().expect("covariance is positive definite").l();
    SettingSpec {
        id: SettingId::B,
        covariates: CovariateLaw::Normal { mean: DVector::from_row_slice(&[3., -2., -6., 3.]), chol },
        noise: NoiseLaw::Normal { var: [3., 1., 2.], eps_var: 3.0 },
        dims: TrueDims { p: 4, r: 3, central: 2, joint: 2, outer: 1, nested_joint: 2, nested_outer: 1 },
        matrices: TrueMatrices {
            central: rows(4, 2, &[1., 0., 0., 0., 0., 1., 0., 0.]),
            joint_aux: rows(3, 2, &[1., 0., 0., 0., 0., 1.]),
            joint_cov: rows(4, 2, &[0., 0., 0., 0., 1., 0., 0., 0.]),
            outer: rows(4, 1, &[1., 0., 0., 0.]),
            nested_aux: rows(3, 2, &[1., 0., 0., 0., 0., 1.]),
            nested_cov: rows(2, 2, &[0., 0., 1., 0.]),
            nested_outer: rows(2, 1, &[1., 0.]),
        },
    }
}
