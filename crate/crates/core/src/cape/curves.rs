use serde::{Deserialize, Serialize};

use super::privacy::{cape_delta, cape_delta_exact};
use crate::accounting::gaussian_log_delta;
use crate::{CapeError, Result};

/// Sensitivity of the protected statistic as a function of sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sensitivity {
    /// `Δ(N) = 1/N`.
    Mean,
    /// `Δ(N) = scale · N^(−exponent)`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl Sensitivity {
    pub fn at(&self, n: f64) -> f64 {
        match *self {
            Sensitivity::Mean => 1.0 / n,
            Sensitivity::PowerLaw { scale, exponent } => scale * n.powf(-exponent),
        }
    }
}

/// Aggregate noise variance of CAPE relative to the pooled scenario,
/// `H(n) = Σ Δ²(N_s) / (S³ Δ²(N))`.
pub fn h_ratio(n: &[usize], sensitivity: Sensitivity) -> Result<f64> {
    if n.is_empty() || n.contains(&0) {
        return Err(CapeError::Domain("sample counts must be positive".into()));
    }
    let s = n.len() as f64;
    let total: usize = n.iter().sum();
    let pooled = sensitivity.at(total as f64);
    let sum: f64 = n.iter().map(|&k| sensitivity.at(k as f64).powi(2)).sum();
    Ok(sum / (s.powi(3) * pooled * pooled))
}

/// Upper bound of `H(n)` for the mean, attained at `(N−S+1, 1, …, 1)`.
pub fn h_upper_bound(n_total: usize, sites: usize) -> f64 {
    let n = n_total as f64;
    let s = sites as f64;
    n * n / s.powi(3) * (1.0 / (n - s + 1.0).powi(2) + s - 1.0)
}

/// True when `a` is majorized by `b` (same total, sorted prefix sums of
/// `a` never exceed those of `b`).
pub fn majorized_by(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() || a.iter().sum::<usize>() != b.iter().sum::<usize>() {
        return false;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(|x, y| y.cmp(x));
    b.sort_unstable_by(|x, y| y.cmp(x));
    let mut pa = 0;
    let mut pb = 0;
    a.iter().zip(&b).all(|(x, y)| {
        pa += x;
        pb += y;
        pa <= pb
    })
}

/// One point of the δ comparison at equal aggregate noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub sites: usize,
    pub colluders: usize,
    pub n_total: usize,
    pub epsilon: f64,
    pub tau_s: f64,
    /// `ln δ` from the printed closed form; NaN when `ε ≤ μ_z`.
    pub log_delta_cape: f64,
    /// `ln δ` from the exact symmetric closed form; NaN when `ε ≤ μ_z`.
    pub log_delta_cape_exact: f64,
    pub log_delta_conv: f64,
    pub log_delta_pool: f64,
}

/// Grid specification for [`delta_comparison_curves`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrid {
    pub sites: usize,
    pub colluders: usize,
    pub n_total: usize,
    pub epsilon: f64,
    pub taus: Vec<f64>,
}

/// Compares `δ` of CAPE, conventional and pooled releases that all reach the
/// pooled aggregate variance `τ_s²/S²` for a mean query.
///
/// The conventional scheme needs per-site noise `τ_s/√S` at sensitivity
/// `1/N_s`; the pooled release needs `τ_s/S` at sensitivity `1/N`. Both
/// invert the Gaussian-mechanism calibration for `δ`. Values are natural
/// logs so that tiny `δ` stays comparable.
pub fn delta_comparison_curves(grid: &DeltaGrid) -> Result<Vec<DeltaRow>> {
    let s = grid.sites as f64;
    if grid.sites < 2 || grid.n_total % grid.sites != 0 {
        return Err(CapeError::AsymmetricInput {
            total: grid.n_total,
            sites: grid.sites,
        });
    }
    let n_s = (grid.n_total / grid.sites) as f64;
    grid.taus
        .iter()
        .map(|&tau| {
            let cape = match cape_delta(grid.epsilon, grid.n_total, grid.sites, grid.colluders, tau) {
                Ok(d) => d.log_delta,
                Err(CapeError::Domain(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            let exact = match cape_delta_exact(grid.epsilon, grid.n_total, grid.sites, grid.colluders, tau) {
                Ok(d) => d.log_delta,
                Err(CapeError::Domain(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            Ok(DeltaRow {
                sites: grid.sites,
                colluders: grid.colluders,
                n_total: grid.n_total,
                epsilon: grid.epsilon,
                tau_s: tau,
                log_delta_cape: cape,
                log_delta_cape_exact: exact,
                log_delta_conv: gaussian_log_delta(tau / s.sqrt(), 1.0 / n_s, grid.epsilon),
                log_delta_pool: gaussian_log_delta(tau / s, 1.0 / grid.n_total as f64, grid.epsilon),
            })
        })
        .collect()
}

/// `n` points evenly spaced on a log scale from `a` to `b` inclusive.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            (0..n)
                .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}
