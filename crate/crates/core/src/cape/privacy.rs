use serde::{Deserialize, Serialize};

use super::plan::{max_colluders, NoisePlan};
use crate::linalg::{RealMatrix, RealVector};
use crate::{CapeError, Result};

/// Privacy-loss parameters and the resulting `(ε, δ)` pair for one site.
///
/// The privacy loss is `z ~ N(μ_z, σ_z²)` and
/// `δ = 2 (σ_z/(ε − μ_z)) φ((ε − μ_z)/σ_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapeDelta {
    pub mu_z: f64,
    pub sigma_z: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// `ln δ`, finite even where `delta` underflows to zero.
    pub log_delta: f64,
    /// False when `ε ≥ 1`, outside the proven range.
    pub within_range: bool,
}

impl CapeDelta {
    fn from_moments(epsilon: f64, mu_z: f64, sigma_z: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CapeError::Domain(format!("epsilon {epsilon} must be > 0")));
        }
        if mu_z == 0.0 && sigma_z == 0.0 {
            return Ok(Self {
                mu_z,
                sigma_z,
                epsilon,
                delta: 0.0,
                log_delta: f64::NEG_INFINITY,
                within_range: epsilon < 1.0,
            });
        }
        if epsilon <= mu_z {
            return Err(CapeError::Domain(format!(
                "epsilon {epsilon} must exceed the mean privacy loss {mu_z}"
            )));
        }
        let x = (epsilon - mu_z) / sigma_z;
        let log_delta = std::f64::consts::LN_2 + sigma_z.ln() - (epsilon - mu_z).ln()
            - 0.5 * x * x
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            mu_z,
            sigma_z,
            epsilon,
            delta: log_delta.exp(),
            log_delta,
            within_range: epsilon < 1.0,
        })
    }
}

fn check_symmetric_inputs(n_total: usize, sites: usize, colluders: usize, tau: f64) -> Result<()> {
    if sites < 2 || n_total == 0 {
        return Err(CapeError::InvalidNetwork(format!(
            "need at least 2 sites and samples, got {sites} sites and {n_total} samples"
        )));
    }
    let bound = max_colluders(sites);
    if colluders > bound {
        return Err(CapeError::InvalidCollusion {
            colluders,
            bound,
            sites,
        });
    }
    if !(tau >= 0.0) {
        return Err(CapeError::Domain(format!("noise level {tau} must be >= 0")));
    }
    Ok(())
}

/// `μ_z` exactly as printed for the symmetric setting.
pub fn printed_mu_z(n_total: usize, sites: usize, colluders: usize, tau: f64) -> f64 {
    let s = sites as f64;
    let sc = colluders as f64;
    let n = n_total as f64;
    let h = s - sc;
    s.powi(3) / (2.0 * tau * tau * n * n * (1.0 + s))
        * ((h + 2.0) / h + (9.0 / h) * sc * sc / (s * (1.0 + s) - 3.0 * sc * sc))
}

/// `μ_z = ½ ṽᵀΣ⁻¹ṽ` evaluated in closed form for the symmetric setting.
///
/// With `S_H = S − S_C`, the honest-release covariance
/// `(1 + 1/S)τ²I − (τ²/S)11ᵀ` has inverse `S/((1+S)τ²)(I + 11ᵀ/(S_C+1))`,
/// and the Schur complement of the partial noise sum is
/// `S_H τ² (1 − S_C²/(S(S_C+1)))`.
pub fn exact_mu_z(n_total: usize, sites: usize, colluders: usize, tau: f64) -> f64 {
    let s = sites as f64;
    let sc = colluders as f64;
    let sh = s - sc;
    let t2 = tau * tau;
    let direct = s * (sc + 2.0) / ((1.0 + s) * (sc + 1.0) * t2);
    let u = sc / (sc + 1.0);
    let k = sh * t2 * (1.0 - sc * sc / (s * (sc + 1.0)));
    let inv11 = direct + u * u / k;
    let v = s / n_total as f64;
    0.5 * v * v * inv11
}

/// Symmetric-setting `(ε, δ)` using the printed closed form for `μ_z`.
pub fn cape_delta(epsilon: f64, n_total: usize, sites: usize, colluders: usize, tau: f64) -> Result<CapeDelta> {
    check_symmetric_inputs(n_total, sites, colluders, tau)?;
    if tau.is_infinite() {
        return CapeDelta::from_moments(epsilon, 0.0, 0.0);
    }
    let mu = printed_mu_z(n_total, sites, colluders, tau);
    CapeDelta::from_moments(epsilon, mu, (2.0 * mu).sqrt())
}

/// Symmetric-setting `(ε, δ)` using the exact quadratic form.
pub fn cape_delta_exact(epsilon: f64, n_total: usize, sites: usize, colluders: usize, tau: f64) -> Result<CapeDelta> {
    check_symmetric_inputs(n_total, sites, colluders, tau)?;
    if tau.is_infinite() {
        return CapeDelta::from_moments(epsilon, 0.0, 0.0);
    }
    let mu = exact_mu_z(n_total, sites, colluders, tau);
    CapeDelta::from_moments(epsilon, mu, (2.0 * mu).sqrt())
}

/// Covariance of what the adversary observes: the releases of the honest
/// sites followed by the partial sum of their `ê_s`.
pub fn adversary_covariance(plan: &NoisePlan, honest: &[usize]) -> Result<RealMatrix> {
    let s = plan.sites as f64;
    if honest.is_empty() || honest.iter().any(|&h| h >= plan.sites) {
        return Err(CapeError::ShapeMismatch("honest set out of range".into()));
    }
    let mu = &plan.weights;
    let var = |i: usize| plan.sigma_s[i] * plan.sigma_s[i];
    let total: f64 = (0..plan.sites).map(|i| mu[i] * mu[i] * var(i)).sum();
    let honest_weighted: f64 = honest.iter().map(|&i| mu[i] * var(i)).sum();
    let h = honest.len();
    let mut cov = RealMatrix::zeros(h + 1, h + 1);
    for (a, &i) in honest.iter().enumerate() {
        for (b, &j) in honest.iter().enumerate() {
            cov[(a, b)] = if i == j {
                plan.tau_s[i] * plan.tau_s[i]
            } else {
                -(mu[i] * var(i) / mu[j] + mu[j] * var(j) / mu[i]) / s + total / (mu[i] * mu[j] * s * s)
            };
        }
        // Cov(e_i, Σ_{k∈H} ê_k) = σ_i² - (1/(μ_i S)) Σ_{k∈H} μ_k σ_k².
        let cross = var(i) - honest_weighted / (mu[i] * s);
        cov[(a, h)] = cross;
        cov[(h, a)] = cross;
    }
    cov[(h, h)] = honest.iter().map(|&i| var(i)).sum();
    Ok(cov)
}

/// `(μ_z, σ_z)` for a shift `v` under covariance `Σ`: `μ_z = ½ vᵀΣ⁻¹v`,
/// `σ_z² = vᵀΣ⁻¹v`.
pub fn loss_moments_from_covariance(cov: &RealMatrix, v: &RealVector) -> Result<(f64, f64)> {
    let chol = cov.clone().cholesky().ok_or(CapeError::NotPositiveDefinite)?;
    let q = v.dot(&chol.solve(v));
    Ok((0.5 * q, q.sqrt()))
}

/// `(ε, δ)` for a general plan, evaluated numerically. The first
/// `S − S_C` sites are taken as honest and the worst case over honest
/// target sites is returned. The shift at target `s` is its sensitivity,
/// `1/N_s` for a mean.
pub fn cape_delta_asymmetric(epsilon: f64, plan: &NoisePlan, sensitivities: &[f64]) -> Result<CapeDelta> {
    if sensitivities.len() != plan.sites {
        return Err(CapeError::ShapeMismatch(format!(
            "{} sensitivities for {} sites",
            sensitivities.len(),
            plan.sites
        )));
    }
    if !plan.collusion_valid() {
        return Err(CapeError::InvalidCollusion {
            colluders: plan.colluders,
            bound: max_colluders(plan.sites),
            sites: plan.sites,
        });
    }
    let honest: Vec<usize> = (0..plan.honest()).collect();
    let cov = adversary_covariance(plan, &honest)?;
    let mut worst: Option<(f64, f64)> = None;
    for (a, &site) in honest.iter().enumerate() {
        let mut v = RealVector::zeros(honest.len() + 1);
        v[a] = sensitivities[site];
        let (mu, sigma) = loss_moments_from_covariance(&cov, &v)?;
        if worst.is_none_or(|(m, _)| mu > m) {
            worst = Some((mu, sigma));
        }
    }
    let (mu, sigma) = worst.expect("at least one honest site");
    CapeDelta::from_moments(epsilon, mu, sigma)
}

/// Mean-query sensitivities `1/N_s` from the plan's sample counts.
pub fn mean_sensitivities(plan: &NoisePlan) -> Result<Vec<f64>> {
    plan.samples
        .as_ref()
        .map(|n| n.iter().map(|&k| 1.0 / k as f64).collect())
        .ok_or_else(|| CapeError::Config("plan has no sample counts".into()))
}
