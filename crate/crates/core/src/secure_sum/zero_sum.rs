//! Zero-sum noise generation on top of the secure sum.

use rand::Rng;
use rand_distr::StandardNormal;

use super::SecureSum;
use crate::{CapeError, Result};

/// Per-site noise arrays whose (weighted) sum vanishes up to `residual_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumNoise {
    pub per_site: Vec<Vec<f64>>,
    pub residual_bound: f64,
}

impl ZeroSumNoise {
    /// Largest element-wise `|sum_s w_s e_s|`.
    pub fn max_residual(&self, weights: Option<&[f64]>) -> f64 {
        let len = self.per_site.first().map_or(0, |v| v.len());
        (0..len)
            .map(|i| {
                self.per_site
                    .iter()
                    .enumerate()
                    .map(|(s, e)| weights.map_or(1.0, |w| w[s]) * e[i])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

fn draw<R: Rng + ?Sized>(len: usize, tau: f64, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| tau * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn check_sites(tau_s: &[f64], secure: &SecureSum) -> Result<()> {
    if tau_s.len() != secure.sites() {
        return Err(CapeError::ShapeMismatch(format!(
            "{} noise levels for {} sites",
            tau_s.len(),
            secure.sites()
        )));
    }
    if tau_s.len() < 3 {
        return Err(CapeError::InvalidNetwork(format!(
            "zero-sum noise needs at least 3 sites, got {}",
            tau_s.len()
        )));
    }
    if tau_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(CapeError::Domain("noise levels must be finite and >= 0".into()));
    }
    Ok(())
}

/// Each site draws `ê_s ~ N(0, τ_s²)` and subtracts the securely computed
/// average, giving `e_s = ê_s - (1/S) Σ ê_i`.
pub fn generate_zero_sum<R: Rng + ?Sized>(
    len: usize,
    tau_s: &[f64],
    secure: &SecureSum,
    rng: &mut R,
) -> Result<ZeroSumNoise> {
    check_sites(tau_s, secure)?;
    let raw: Vec<Vec<f64>> = tau_s.iter().map(|&t| draw(len, t, rng)).collect();
    let refs: Vec<&[f64]> = raw.iter().map(|v| v.as_slice()).collect();
    let total = secure.sum(&refs, rng)?;
    let s = tau_s.len() as f64;
    let per_site = raw
        .into_iter()
        .map(|e| e.iter().zip(&total).map(|(x, t)| x - t / s).collect())
        .collect();
    Ok(ZeroSumNoise {
        per_site,
        residual_bound: secure.residual_bound(),
    })
}

/// Validates that weights are positive and sum to one within `1e-9`.
pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(CapeError::InvalidWeights("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CapeError::InvalidWeights(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Weighted variant: sites share `μ_s ê_s` and set
/// `e_s = ê_s - (1/(μ_s S)) Σ μ_i ê_i`, so that `Σ μ_s e_s = 0`.
pub fn generate_zero_sum_weighted<R: Rng + ?Sized>(
    len: usize,
    sigma_s: &[f64],
    weights: &[f64],
    secure: &SecureSum,
    rng: &mut R,
) -> Result<ZeroSumNoise> {
    check_sites(sigma_s, secure)?;
    if weights.len() != sigma_s.len() {
        return Err(CapeError::InvalidWeights(format!(
            "{} weights for {} sites",
            weights.len(),
            sigma_s.len()
        )));
    }
    check_weights(weights)?;
    let raw: Vec<Vec<f64>> = sigma_s.iter().map(|&t| draw(len, t, rng)).collect();
    let scaled: Vec<Vec<f64>> = raw
        .iter()
        .zip(weights)
        .map(|(e, &w)| e.iter().map(|x| w * x).collect())
        .collect();
    let refs: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
    let total = secure.sum(&refs, rng)?;
    let s = sigma_s.len() as f64;
    let per_site = raw
        .into_iter()
        .zip(weights)
        .map(|(e, &w)| e.iter().zip(&total).map(|(x, t)| x - t / (w * s)).collect())
        .collect();
    Ok(ZeroSumNoise {
        per_site,
        residual_bound: secure.residual_bound(),
    })
}
