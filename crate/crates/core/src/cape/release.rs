use rand::Rng;
use rand_distr::StandardNormal;

use super::plan::NoisePlan;
use crate::secure_sum::{generate_zero_sum, generate_zero_sum_weighted, SecureSum};
use crate::{CapeError, Result};

/// Per-site noisy releases and the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct CapeRelease {
    pub per_site: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
}

fn check_values(values: &[Vec<f64>], sites: usize) -> Result<usize> {
    if values.len() != sites {
        return Err(CapeError::ShapeMismatch(format!(
            "{} site values for {sites} sites",
            values.len()
        )));
    }
    let len = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != len) {
        return Err(CapeError::ShapeMismatch("site values differ in shape".into()));
    }
    Ok(len)
}

/// Releases `â_s = f(x_s) + e_s + g_s` from every site and aggregates
/// `Σ μ_s â_s`. The zero-sum parts cancel in the aggregate.
pub fn cape_release<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    plan: &NoisePlan,
    secure: &SecureSum,
    rng: &mut R,
) -> Result<CapeRelease> {
    let len = check_values(values, plan.sites)?;
    let zero_sum = if plan.is_uniform() {
        generate_zero_sum(len, &plan.sigma_s, secure, rng)?
    } else {
        generate_zero_sum_weighted(len, &plan.sigma_s, &plan.weights, secure, rng)?
    };
    let per_site: Vec<Vec<f64>> = values
        .iter()
        .zip(&zero_sum.per_site)
        .zip(&plan.tau_g)
        .map(|((f, e), &tg)| {
            f.iter()
                .zip(e)
                .map(|(fi, ei)| fi + ei + tg * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let aggregate = weighted_sum(&per_site, &plan.weights);
    Ok(CapeRelease {
        per_site,
        aggregate,
    })
}

fn weighted_sum(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let len = rows.first().map_or(0, Vec::len);
    (0..len)
        .map(|i| rows.iter().zip(weights).map(|(r, w)| w * r[i]).sum())
        .collect()
}

/// Conventional decentralized averaging: every site adds its full local
/// noise `N(0, τ_s²)` independently.
pub fn conventional_release<R: Rng + ?Sized>(
    values: &[Vec<f64>],
    tau_s: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_values(values, tau_s.len())?;
    let noisy: Vec<Vec<f64>> = values
        .iter()
        .zip(tau_s)
        .map(|(f, &t)| f.iter().map(|x| x + t * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let w = vec![1.0 / tau_s.len() as f64; tau_s.len()];
    Ok(weighted_sum(&noisy, &w))
}

/// Variance of the conventional aggregate, `(1/S²) Σ τ_s²`.
pub fn conventional_variance(tau_s: &[f64]) -> f64 {
    let s = tau_s.len() as f64;
    tau_s.iter().map(|t| t * t).sum::<f64>() / (s * s)
}
