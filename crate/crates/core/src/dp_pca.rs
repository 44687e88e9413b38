//! Decentralized differentially private PCA.
//!
//! Each site perturbs its local second-moment matrix `C_s = X_s X_sᵀ / N_s`
//! with CAPE noise drawn on the upper triangle and mirrored. The aggregator
//! averages the releases and keeps the top-`R` eigenvectors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accounting::GaussianMech;
use crate::cape::{cape_release, plan_symmetric};
use crate::linalg::{sorted_symmetric_eigen, RealMatrix, RealVector};
use crate::secure_sum::SecureSum;
use crate::{CapeError, Result};

/// What to do with samples whose norm exceeds 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormPolicy {
    Reject,
    #[default]
    Clip,
}

/// Noisy local covariances, their average and the released subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceRelease {
    pub c_hat_s: Vec<RealMatrix>,
    pub c_hat: RealMatrix,
    pub v_r: RealMatrix,
    /// Top-`R` eigenvalues of `c_hat`, descending.
    pub eigenvalues: RealVector,
}

impl CovarianceRelease {
    /// `Λ_R^{-1/2} V_Rᵀ`, with eigenvalues floored at `floor`.
    pub fn whitening(&self, floor: f64) -> RealMatrix {
        whitening(&self.v_r, &self.eigenvalues, floor)
    }
}

/// `Λ^{-1/2} Vᵀ` with eigenvalues floored at `floor`.
pub fn whitening(v_r: &RealMatrix, eigenvalues: &RealVector, floor: f64) -> RealMatrix {
    let mut k = v_r.transpose();
    for (mut row, &l) in k.row_iter_mut().zip(eigenvalues.iter()) {
        row /= l.max(floor).sqrt();
    }
    k
}

/// `√2/N_s`: replacing one unit-norm column moves `C_s` by at most this in
/// Frobenius norm.
pub fn covariance_sensitivity(n_s: usize) -> f64 {
    std::f64::consts::SQRT_2 / n_s as f64
}

/// Gaussian mechanism for one site's covariance release.
pub fn pca_tau(n_s: usize, epsilon: f64, delta: f64) -> Result<GaussianMech> {
    if n_s == 0 {
        return Err(CapeError::Domain("site holds no samples".into()));
    }
    GaussianMech::calibrate(covariance_sensitivity(n_s), epsilon, delta)
}

/// Applies the norm policy so that every column has norm at most 1.
pub fn enforce_norms(x: &RealMatrix, policy: NormPolicy) -> Result<RealMatrix> {
    let mut out = x.clone();
    for (index, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 1.0 {
            match policy {
                NormPolicy::Reject => {
                    return Err(CapeError::NormViolation {
                        index,
                        norm,
                        bound: 1.0,
                    })
                }
                NormPolicy::Clip => col /= norm,
            }
        }
    }
    Ok(out)
}

/// `X Xᵀ / N`.
pub fn second_moment(x: &RealMatrix) -> RealMatrix {
    let n = x.ncols().max(1) as f64;
    (x * x.transpose()) / n
}

fn upper_triangle(m: &RealMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_upper_triangle(v: &[f64], d: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

fn top_r(c: &RealMatrix, rank: usize) -> (RealVector, RealMatrix) {
    let (values, vectors) = sorted_symmetric_eigen(c);
    (
        values.rows(0, rank).into_owned(),
        vectors.columns(0, rank).into_owned(),
    )
}

fn check_rank(rank: usize, d: usize) -> Result<()> {
    if rank == 0 || rank > d {
        return Err(CapeError::Domain(format!("rank {rank} must lie in 1..={d}")));
    }
    Ok(())
}

/// CAPE PCA over equally sized sites with local noise level `tau_s`.
pub fn cape_pca<R: Rng + ?Sized>(
    x_s: &[RealMatrix],
    tau_s: f64,
    rank: usize,
    policy: NormPolicy,
    secure: &SecureSum,
    rng: &mut R,
) -> Result<CovarianceRelease> {
    let d = x_s.first().map_or(0, |x| x.nrows());
    check_rank(rank, d)?;
    let n_s = x_s[0].ncols();
    if x_s.iter().any(|x| x.nrows() != d) {
        return Err(CapeError::ShapeMismatch("sites differ in dimension".into()));
    }
    if x_s.iter().any(|x| x.ncols() != n_s) {
        return Err(CapeError::AsymmetricInput {
            total: x_s.iter().map(|x| x.ncols()).sum(),
            sites: x_s.len(),
        });
    }
    let plan = plan_symmetric(n_s * x_s.len(), x_s.len(), tau_s)?;
    let local: Vec<Vec<f64>> = x_s
        .iter()
        .map(|x| enforce_norms(x, policy).map(|x| upper_triangle(&second_moment(&x))))
        .collect::<Result<_>>()?;
    let release = cape_release(&local, &plan, secure, rng)?;
    let c_hat_s = release
        .per_site
        .iter()
        .map(|v| from_upper_triangle(v, d))
        .collect();
    let c_hat = from_upper_triangle(&release.aggregate, d);
    let (eigenvalues, v_r) = top_r(&c_hat, rank);
    Ok(CovarianceRelease {
        c_hat_s,
        c_hat,
        v_r,
        eigenvalues,
    })
}

/// Non-private PCA of the pooled data under the same norm policy.
pub fn pooled_pca(x: &RealMatrix, rank: usize, policy: NormPolicy) -> Result<(RealVector, RealMatrix)> {
    check_rank(rank, x.nrows())?;
    let x = enforce_norms(x, policy)?;
    Ok(top_r(&second_moment(&x), rank))
}

/// Single-site PCA with independent symmetric Gaussian noise at level `tau`.
pub fn local_dp_pca<R: Rng + ?Sized>(
    x: &RealMatrix,
    tau: f64,
    rank: usize,
    policy: NormPolicy,
    rng: &mut R,
) -> Result<CovarianceRelease> {
    let d = x.nrows();
    check_rank(rank, d)?;
    let c = second_moment(&enforce_norms(x, policy)?);
    let noisy: Vec<f64> = upper_triangle(&c)
        .into_iter()
        .map(|v| v + tau * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let c_hat = from_upper_triangle(&noisy, d);
    let (eigenvalues, v_r) = top_r(&c_hat, rank);
    Ok(CovarianceRelease {
        c_hat_s: vec![c_hat.clone()],
        c_hat,
        v_r,
        eigenvalues,
    })
}
