use serde::{Deserialize, Serialize};

use crate::linalg::{solve_checked, RealMatrix, RealVector};
use crate::secure_sum::check_weights;
use crate::{CapeError, Result};

/// Largest number of colluding sites the privacy analysis tolerates.
pub fn max_colluders(sites: usize) -> usize {
    sites.div_ceil(3).saturating_sub(1)
}

/// Per-site noise budget of one CAPE release.
///
/// Site `s` draws `ê_s ~ N(0, σ_s²)` for the zero-sum part and
/// `g_s ~ N(0, τ_gs²)` for the independent part. The zero-sum part ends up
/// with variance `τ_es²` and `τ_es² + τ_gs² = τ_s²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub sites: usize,
    pub colluders: usize,
    pub samples: Option<Vec<usize>>,
    pub tau_s: Vec<f64>,
    pub tau_e: Vec<f64>,
    pub tau_g: Vec<f64>,
    pub tau_pool: f64,
    pub weights: Vec<f64>,
    pub sigma_s: Vec<f64>,
}

impl NoisePlan {
    pub fn honest(&self) -> usize {
        self.sites - self.colluders
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.sites as f64;
        self.weights.iter().all(|&m| (m - w).abs() <= 1e-12)
    }

    /// True when the collusion assumption of the privacy analysis holds.
    pub fn collusion_valid(&self) -> bool {
        self.colluders <= max_colluders(self.sites)
    }

    pub fn with_colluders(mut self, colluders: usize) -> Result<Self> {
        if colluders >= self.sites {
            return Err(CapeError::InvalidCollusion {
                colluders,
                bound: max_colluders(self.sites),
                sites: self.sites,
            });
        }
        self.colluders = colluders;
        Ok(self)
    }

    pub fn with_samples(mut self, samples: Vec<usize>) -> Result<Self> {
        if samples.len() != self.sites || samples.contains(&0) {
            return Err(CapeError::ShapeMismatch(format!(
                "need {} positive sample counts",
                self.sites
            )));
        }
        self.samples = Some(samples);
        Ok(self)
    }

    /// Same plan with every noise level multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mul = |v: &[f64]| v.iter().map(|x| x * factor).collect();
        Self {
            tau_s: mul(&self.tau_s),
            tau_e: mul(&self.tau_e),
            tau_g: mul(&self.tau_g),
            sigma_s: mul(&self.sigma_s),
            tau_pool: self.tau_pool * factor,
            ..self.clone()
        }
    }

    /// Largest relative violation of `τ_es² + τ_gs² = τ_s²` and of
    /// `Σ μ_s² τ_gs² = τ_pool²`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let split = (0..self.sites)
            .map(|s| {
                let target = self.tau_s[s] * self.tau_s[s];
                let got = self.tau_e[s] * self.tau_e[s] + self.tau_g[s] * self.tau_g[s];
                rel(got, target)
            })
            .fold(0.0, f64::max);
        let pooled: f64 = self
            .weights
            .iter()
            .zip(&self.tau_g)
            .map(|(m, g)| m * m * g * g)
            .sum();
        (split, rel(pooled, self.tau_pool * self.tau_pool))
    }
}

fn rel(got: f64, target: f64) -> f64 {
    if target == 0.0 {
        got.abs()
    } else {
        ((got - target) / target).abs()
    }
}

/// Equal sample counts and equal local noise `τ` at every site.
pub fn plan_symmetric(n_total: usize, sites: usize, tau: f64) -> Result<NoisePlan> {
    if sites < 3 {
        return Err(CapeError::InvalidNetwork(format!(
            "CAPE needs at least 3 sites, got {sites}"
        )));
    }
    if n_total % sites != 0 {
        return Err(CapeError::AsymmetricInput {
            total: n_total,
            sites,
        });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(CapeError::Domain(format!("noise level {tau} must be >= 0")));
    }
    let s = sites as f64;
    Ok(NoisePlan {
        sites,
        colluders: max_colluders(sites),
        samples: Some(vec![n_total / sites; sites]),
        tau_s: vec![tau; sites],
        tau_e: vec![tau * (1.0 - 1.0 / s).sqrt(); sites],
        tau_g: vec![tau / s.sqrt(); sites],
        tau_pool: tau / s,
        weights: vec![1.0 / s; sites],
        sigma_s: vec![tau; sites],
    })
}

/// Solves for `σ_s²` given per-site targets `τ_s`, weights `μ_s` and the
/// pooled target, with `τ_gs² = τ_pool²/(μ_s² S)`.
pub fn plan_asymmetric(tau_s: &[f64], weights: &[f64], tau_pool: f64) -> Result<NoisePlan> {
    let sites = tau_s.len();
    if sites < 3 {
        return Err(CapeError::InvalidNetwork(format!(
            "CAPE needs at least 3 sites, got {sites}"
        )));
    }
    if weights.len() != sites {
        return Err(CapeError::InvalidWeights(format!(
            "{} weights for {sites} sites",
            weights.len()
        )));
    }
    check_weights(weights)?;
    if tau_s.iter().any(|&t| !(t > 0.0 && t.is_finite())) || !(tau_pool >= 0.0) {
        return Err(CapeError::Domain("noise levels must be positive".into()));
    }
    let s = sites as f64;
    let diag = (1.0 - 1.0 / s) * (1.0 - 1.0 / s);
    let m = RealMatrix::from_fn(sites, sites, |r, c| {
        if r == c {
            diag
        } else {
            weights[c] * weights[c] / (weights[r] * weights[r] * s * s)
        }
    });
    let tau_g_sq: Vec<f64> = weights
        .iter()
        .map(|w| tau_pool * tau_pool / (w * w * s))
        .collect();
    let rhs = RealVector::from_iterator(
        sites,
        tau_s.iter().zip(&tau_g_sq).map(|(t, g)| t * t - g),
    );
    let sigma_sq = solve_checked(&m, &rhs)?;
    if let Some((site, &value)) = sigma_sq.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(CapeError::InfeasiblePlan { site, value });
    }
    let cross: f64 = weights
        .iter()
        .zip(sigma_sq.iter())
        .map(|(w, v)| w * w * v)
        .sum();
    let tau_e_sq: Vec<f64> = (0..sites)
        .map(|i| (1.0 - 2.0 / s) * sigma_sq[i] + cross / (weights[i] * weights[i] * s * s))
        .collect();
    if let Some((site, &value)) = tau_e_sq.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(CapeError::InfeasiblePlan { site, value });
    }
    Ok(NoisePlan {
        sites,
        colluders: max_colluders(sites),
        samples: None,
        tau_s: tau_s.to_vec(),
        tau_e: tau_e_sq.iter().map(|v| v.sqrt()).collect(),
        tau_g: tau_g_sq.iter().map(|v| v.sqrt()).collect(),
        tau_pool,
        weights: weights.to_vec(),
        sigma_s: sigma_sq.iter().map(|v| v.sqrt()).collect(),
    })
}
