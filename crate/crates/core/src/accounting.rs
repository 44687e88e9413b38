//! Gaussian mechanism calibration and multi-round privacy accounting.
//!
//! Every iteration of the decentralized ICA releases two Gaussian-noised
//! statistics, the weight gradient and the bias gradient. The accountants
//! here turn per-release noise levels into an overall `(ε, δ)` guarantee.
//!
//! * Naive composition adds `ε` and `δ` over all `2J*` releases.
//! * Strong composition is the standard advanced composition bound.
//! * Rényi DP composes the two releases as one Gaussian with
//!   `1/σ²_RDP = 1/σ²_W + 1/σ²_b` and converts at the optimal order.
//! * The moments accountant bounds the log-MGF of the privacy loss by
//!   `α(t) ≤ (J*Δ²/(2σ²))(t + t²)` and minimizes over `t`.
//!
//! For pure Gaussian releases the last two coincide at their optima.

use serde::{Deserialize, Serialize};

use crate::{CapeError, Result};

/// Gaussian mechanism `τ = (Δ/ε)√(2 ln(1.25/δ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMech {
    pub sensitivity: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    /// False when `ε ≥ 1`, outside the range where the calibration is proven.
    pub within_range: bool,
}

impl GaussianMech {
    /// Calibrates for any `ε > 0`, flagging `ε ≥ 1`.
    pub fn calibrate(sensitivity: f64, epsilon: f64, delta: f64) -> Result<Self> {
        if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
            return Err(CapeError::Domain(format!("sensitivity {sensitivity} must be >= 0")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CapeError::Domain(format!("epsilon {epsilon} must be > 0")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CapeError::Domain(format!("delta {delta} must lie in (0, 1)")));
        }
        let tau = sensitivity / epsilon * (2.0 * (1.25 / delta).ln()).sqrt();
        Ok(Self {
            sensitivity,
            epsilon,
            delta,
            tau,
            within_range: epsilon < 1.0,
        })
    }
}

/// Noise standard deviation of the Gaussian mechanism for `ε ∈ (0, 1)`.
pub fn gaussian_sigma(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    let mech = GaussianMech::calibrate(sensitivity, epsilon, delta)?;
    if !mech.within_range {
        return Err(CapeError::Domain(format!("epsilon {epsilon} must lie in (0, 1)")));
    }
    Ok(mech.tau)
}

/// Natural log of the smallest `δ` for which noise `τ` gives `(ε, δ)`-DP
/// under the Gaussian mechanism calibration. Stays finite where `δ`
/// itself would underflow.
pub fn gaussian_log_delta(tau: f64, sensitivity: f64, epsilon: f64) -> f64 {
    let r = tau * epsilon / sensitivity;
    1.25f64.ln() - 0.5 * r * r
}

/// Naive composition over `J*` iterations of two releases.
pub fn naive_composition(eps_per_round: f64, delta_per_round: f64, j_star: u64) -> (f64, f64) {
    let k = 2.0 * j_star as f64;
    (k * eps_per_round, k * delta_per_round)
}

/// Advanced composition of `k` releases, each `(ε, δ)`-DP:
/// `ε√(2k ln(1/δ')) + kε(e^ε − 1)` and `kδ + δ'`.
pub fn strong_composition(eps_per: f64, delta_per: f64, k: u64, delta_slack: f64) -> (f64, f64) {
    let kf = k as f64;
    let eps = eps_per * (2.0 * kf * (1.0 / delta_slack).ln()).sqrt() + kf * eps_per * eps_per.exp_m1();
    (eps, kf * delta_per + delta_slack)
}

/// Inverse-variance combination `1/σ² = Σ 1/σ_j²`.
pub fn combine_sigma_sq(sigmas_sq: &[f64]) -> f64 {
    1.0 / sigmas_sq.iter().map(|s| 1.0 / s).sum::<f64>()
}

/// RDP epsilon at order `α` after `J*` iterations of the two releases.
pub fn rdp_total(sigma_w_sq: f64, sigma_b_sq: f64, j_star: u64, alpha: f64) -> Result<f64> {
    if alpha <= 1.0 {
        return Err(CapeError::Domain(format!("RDP order {alpha} must exceed 1")));
    }
    let sigma_rdp_sq = combine_sigma_sq(&[sigma_w_sq, sigma_b_sq]);
    Ok(alpha * j_star as f64 / (2.0 * sigma_rdp_sq))
}

/// Converts `(α, αJ*/(2σ²_RDP))`-RDP to `(ε, δ_r)`-DP at the optimal order.
/// Returns `(ε, α_opt)`.
pub fn rdp_to_dp(sigma_rdp_sq: f64, j_star: u64, delta_r: f64) -> Result<(f64, f64)> {
    if !(delta_r > 0.0 && delta_r < 1.0) {
        return Err(CapeError::Domain(format!("delta {delta_r} must lie in (0, 1)")));
    }
    if j_star == 0 {
        return Ok((0.0, f64::INFINITY));
    }
    let j = j_star as f64;
    let log_inv = (1.0 / delta_r).ln();
    let alpha = 1.0 + (2.0 / j * sigma_rdp_sq * log_inv).sqrt();
    let eps = alpha * j / (2.0 * sigma_rdp_sq) + log_inv / (alpha - 1.0);
    Ok((eps, alpha))
}

/// Log of the moments-accountant `δ` at a given `ε`, for a total moment
/// `α(t) = (c/2)(t + t²)` with `c = J*Δ²/σ²`. Minimized over `t ≥ 0`.
pub fn ma_log_delta(c: f64, epsilon: f64) -> f64 {
    if c == 0.0 {
        return f64::NEG_INFINITY;
    }
    let t = (epsilon / c - 0.5).max(0.0);
    0.5 * c * (t + t * t) - t * epsilon
}

/// Smallest `ε` with `min_t exp(α(t) − tε) = δ_target`.
///
/// Minimizing `(c/2)(t + t²) − tε` gives `t = ε/c − 1/2`, and substituting
/// leaves `ε²/(2c) − ε/2 + c/8 + ln δ = 0`. The root with `t ≥ 0` is
/// `ε = c/2 + √(2c ln(1/δ))`.
pub fn ma_epsilon(sigma: f64, sensitivity: f64, j_star: u64, delta_target: f64) -> Result<f64> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(CapeError::NoSolution(delta_target));
    }
    if !(sigma > 0.0) {
        return Err(CapeError::Domain(format!("noise std {sigma} must be > 0")));
    }
    let c = j_star as f64 * sensitivity * sensitivity / (sigma * sigma);
    if c == 0.0 {
        return Ok(0.0);
    }
    let disc = 2.0 * c * (1.0 / delta_target).ln();
    if !(disc >= 0.0) {
        return Err(CapeError::NoSolution(delta_target));
    }
    Ok(0.5 * c + disc.sqrt())
}

/// Moments accountant for the two per-iteration releases at unit
/// sensitivity.
pub fn ma_epsilon_pair(sigma_w_sq: f64, sigma_b_sq: f64, j_star: u64, delta_target: f64) -> Result<f64> {
    let sigma_sq = combine_sigma_sq(&[sigma_w_sq, sigma_b_sq]);
    ma_epsilon(sigma_sq.sqrt(), 1.0, j_star, delta_target)
}

/// How the aggregator-level noise variance is normalized before RDP
/// composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RdpVarianceConvention {
    /// `ρ²τ²_pool/Δ_pool`, with the sensitivity not squared.
    AsPrinted,
    /// `τ²_pool/Δ²_pool`, the unit-sensitivity normalization.
    #[default]
    SquaredSensitivity,
}

/// Normalized variance of one aggregated release.
pub fn rdp_sigma_sq(tau_pool: f64, sensitivity_pool: f64, rho: f64, convention: RdpVarianceConvention) -> f64 {
    match convention {
        RdpVarianceConvention::AsPrinted => rho * rho * tau_pool * tau_pool / sensitivity_pool,
        RdpVarianceConvention::SquaredSensitivity => {
            (tau_pool / sensitivity_pool) * (tau_pool / sensitivity_pool)
        }
    }
}

/// Running RDP account. Each entry is the per-iteration coefficient
/// `Σ_r 1/(2σ_r²)`, so the total at order `α` is `α` times their sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RdpLedger {
    pub per_iteration: Vec<f64>,
}

impl RdpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one iteration made of Gaussian releases with the given
    /// normalized variances.
    pub fn record(&mut self, sigmas_sq: &[f64]) {
        self.per_iteration
            .push(sigmas_sq.iter().map(|s| 0.5 / s).sum());
    }

    pub fn iterations(&self) -> usize {
        self.per_iteration.len()
    }

    fn coefficient(&self) -> f64 {
        self.per_iteration.iter().sum()
    }

    /// Equivalent `σ²_RDP` if all iterations were identical.
    pub fn sigma_rdp_sq(&self) -> f64 {
        self.iterations() as f64 / (2.0 * self.coefficient())
    }

    pub fn epsilon_at(&self, alpha: f64) -> f64 {
        alpha * self.coefficient()
    }

    /// `(ε, α_opt)` at `δ_r`.
    pub fn to_dp(&self, delta_r: f64) -> Result<(f64, f64)> {
        if !(delta_r > 0.0 && delta_r < 1.0) {
            return Err(CapeError::Domain(format!("delta {delta_r} must lie in (0, 1)")));
        }
        let k = self.coefficient();
        if k == 0.0 {
            return Ok((0.0, f64::INFINITY));
        }
        let log_inv = (1.0 / delta_r).ln();
        let alpha = 1.0 + (log_inv / k).sqrt();
        Ok((alpha * k + log_inv / (alpha - 1.0), alpha))
    }
}

/// Moments-accountant state for `J*` identical Gaussian iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentLedger {
    pub sensitivity: f64,
    pub sigma: f64,
    pub iterations: u64,
    pub delta_target: f64,
}

impl MomentLedger {
    fn c(&self) -> f64 {
        self.iterations as f64 * self.sensitivity * self.sensitivity / (self.sigma * self.sigma)
    }

    /// Upper bound on the overall log-moment at `t`.
    pub fn moment(&self, t: f64) -> f64 {
        0.5 * self.c() * (t + t * t)
    }

    pub fn log_delta_at(&self, epsilon: f64) -> f64 {
        ma_log_delta(self.c(), epsilon)
    }

    pub fn epsilon(&self) -> Result<f64> {
        ma_epsilon(self.sigma, self.sensitivity, self.iterations, self.delta_target)
    }
}

/// One row of the accountant comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantRow {
    pub j_star: u64,
    pub eps_naive: f64,
    pub eps_strong: f64,
    pub eps_rdp: f64,
    pub eps_ma: f64,
}

/// Overall `ε` of each accountant at unit sensitivity for the two releases
/// per iteration with variances `σ²_W`, `σ²_b`, all targeting `δ_target`.
///
/// Naive and strong composition need a per-release `(ε₀, δ₀)`. Half of the
/// budget goes to the slack term and the rest is split evenly across the
/// `k = 2J*` releases. `ε₀` is the Gaussian-mechanism value at the smaller
/// of the two variances, which is the larger of the two per-release values.
pub fn accountant_compare(
    sigma_w_sq: f64,
    sigma_b_sq: f64,
    delta_target: f64,
    j_grid: &[u64],
) -> Result<Vec<AccountantRow>> {
    if !(delta_target > 0.0 && delta_target < 1.0) {
        return Err(CapeError::Domain(format!("delta {delta_target} must lie in (0, 1)")));
    }
    if !(sigma_w_sq > 0.0 && sigma_b_sq > 0.0) {
        return Err(CapeError::Domain("variances must be positive".into()));
    }
    let sigma_rdp_sq = combine_sigma_sq(&[sigma_w_sq, sigma_b_sq]);
    let min_sigma = sigma_w_sq.min(sigma_b_sq).sqrt();
    j_grid
        .iter()
        .map(|&j| {
            if j == 0 {
                return Ok(AccountantRow {
                    j_star: 0,
                    eps_naive: 0.0,
                    eps_strong: 0.0,
                    eps_rdp: 0.0,
                    eps_ma: 0.0,
                });
            }
            let k = 2 * j;
            let delta_slack = delta_target / 2.0;
            let delta0 = delta_target / (2.0 * k as f64);
            let eps0 = (2.0 * (1.25 / delta0).ln()).sqrt() / min_sigma;
            let (eps_naive, _) = naive_composition(eps0, delta0, j);
            let (eps_strong, _) = strong_composition(eps0, delta0, k, delta_slack);
            let (eps_rdp, _) = rdp_to_dp(sigma_rdp_sq, j, delta_target)?;
            let eps_ma = ma_epsilon(sigma_rdp_sq.sqrt(), 1.0, j, delta_target)?;
            Ok(AccountantRow {
                j_star: j,
                eps_naive,
                eps_strong,
                eps_rdp,
                eps_ma,
            })
        })
        .collect()
}

/// Relative tolerance used when comparing accountants that agree
/// analytically.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_sigma_values() {
        let tau = gaussian_sigma(1.0, 0.5, 1e-2).unwrap();
        assert_relative_eq!(tau, 2.0 * (2.0 * 125f64.ln()).sqrt(), max_relative = 1e-15);
        assert_eq!(gaussian_sigma(0.0, 0.5, 1e-2).unwrap(), 0.0);
        let twice = gaussian_sigma(2.0, 0.5, 1e-2).unwrap();
        assert_relative_eq!(twice, 2.0 * tau, max_relative = 1e-15);
        assert!(gaussian_sigma(1.0, 1.5, 1e-2).is_err());
        assert!(gaussian_sigma(1.0, 0.5, 1.0).is_err());
        let wide = GaussianMech::calibrate(1.0, 2.0, 1e-2).unwrap();
        assert!(!wide.within_range);
    }

    #[test]
    fn log_delta_inverts_calibration() {
        let tau = gaussian_sigma(0.3, 0.7, 1e-4).unwrap();
        assert_relative_eq!(gaussian_log_delta(tau, 0.3, 0.7), 1e-4f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn naive_values() {
        let (e, d) = naive_composition(0.3, 1e-5, 1);
        assert_relative_eq!(e, 0.6);
        assert_relative_eq!(d, 2e-5);
        assert_eq!(naive_composition(0.3, 1e-5, 0), (0.0, 0.0));
        let (e, d) = naive_composition(0.01, 1e-5, 100);
        assert_relative_eq!(e, 2.0, max_relative = 1e-12);
        assert_relative_eq!(d, 200.0 * 1e-5, max_relative = 1e-12);
    }

    #[test]
    fn rdp_total_values() {
        assert_relative_eq!(rdp_total(0.25, 0.25, 1, 2.0).unwrap(), 8.0);
        assert_eq!(rdp_total(0.25, 0.25, 0, 2.0).unwrap(), 0.0);
        assert_relative_eq!(rdp_total(0.25, 0.25, 20, 3.0).unwrap(), 2.0 * rdp_total(0.25, 0.25, 10, 3.0).unwrap());
        assert!(rdp_total(0.25, 0.25, 1, 1.0).is_err());
    }

    fn grid_min(sigma_rdp_sq: f64, j: u64, delta: f64) -> f64 {
        let k = j as f64 / (2.0 * sigma_rdp_sq);
        let log_inv = (1.0 / delta).ln();
        (1..=99_000)
            .map(|i| 1.0 + i as f64 * 1e-3)
            .map(|a| a * k + log_inv / (a - 1.0))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn rdp_closed_form_matches_grid() {
        let (eps, alpha) = rdp_to_dp(0.125, 200, 1e-5).unwrap();
        assert!(alpha > 1.0);
        let grid = grid_min(0.125, 200, 1e-5);
        assert!(eps <= grid * (1.0 + 1e-12));
        assert!((grid - eps) / eps < 1e-3);
    }

    #[test]
    fn rdp_limits_and_monotonicity() {
        let (_, alpha) = rdp_to_dp(0.5, 10, 1.0 - 1e-12).unwrap();
        assert!(alpha - 1.0 < 1e-5);
        let mut prev = 0.0;
        for j in [1, 2, 5, 10, 100, 1000] {
            let (e, _) = rdp_to_dp(0.5, j, 1e-5).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn ma_round_trip() {
        for (sigma, j, delta) in [(0.5, 100, 1e-5), (2.0, 1, 1e-3), (0.1, 1000, 1e-8)] {
            let eps = ma_epsilon(sigma, 1.0, j, delta).unwrap();
            let c = j as f64 / (sigma * sigma);
            let t_opt = eps / c - 0.5;
            assert!(t_opt >= 0.0);
            let back = ma_log_delta(c, eps).exp();
            assert_relative_eq!(back, delta, max_relative = 1e-6);
        }
        assert_eq!(ma_epsilon(0.5, 1.0, 0, 1e-5).unwrap(), 0.0);
        assert!(ma_epsilon(0.5, 1.0, 10, 1.5).is_err());
    }

    #[test]
    fn ma_matches_brute_force_over_t() {
        let sigma_sq = combine_sigma_sq(&[0.25, 0.25]);
        let c = 100.0 / sigma_sq;
        let eps = ma_epsilon(sigma_sq.sqrt(), 1.0, 100, 1e-5).unwrap();
        let mut best = f64::INFINITY;
        let mut t = 0.0;
        while t <= 1e4 {
            best = best.min(0.5 * c * (t + t * t) - t * eps);
            t += if t < 10.0 { 1e-4 } else { 1.0 };
        }
        assert!((best.exp() - 1e-5).abs() / 1e-5 < 0.01);
    }

    #[test]
    fn ma_equals_rdp_for_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s2: f64 = rng.random_range(0.05..5.0);
            let j: u64 = rng.random_range(1..1000);
            let d: f64 = 10f64.powf(rng.random_range(-8.0..-2.0));
            let (rdp, _) = rdp_to_dp(s2, j, d).unwrap();
            let ma = ma_epsilon(s2.sqrt(), 1.0, j, d).unwrap();
            assert_relative_eq!(ma, rdp, max_relative = 1e-12);
        }
    }

    #[test]
    fn strong_single_round() {
        let (e, d) = strong_composition(0.1, 1e-6, 1, 1e-9);
        let expect = 0.1 * (2.0 * 1e9f64.ln()).sqrt() + 0.1 * 0.1f64.exp_m1();
        assert_relative_eq!(e, expect, max_relative = 1e-14);
        assert_relative_eq!(d, 1e-6 + 1e-9);
    }

    #[test]
    fn strong_grows_like_sqrt_k_for_small_eps() {
        let (a, _) = strong_composition(1e-4, 0.0, 1000, 1e-5);
        let (b, _) = strong_composition(1e-4, 0.0, 100_000, 1e-5);
        let slope = (b / a).ln() / 100f64.ln();
        assert!((slope - 0.5).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn strong_beats_naive_only_for_small_per_release_eps() {
        // e^ε - 1 ≥ 1 once ε ≥ ln 2, after which the linear term alone
        // exceeds the naive sum.
        let (s, _) = strong_composition(0.05, 1e-7, 2000, 1e-5);
        assert!(s < 2000.0 * 0.05);
        let (s, _) = strong_composition(1.0, 1e-7, 2000, 1e-5);
        assert!(s > 2000.0 * 1.0);
    }

    #[test]
    fn compare_ordering_at_reference_settings() {
        let rows = accountant_compare(0.25, 0.25, 1e-5, &[0, 1, 10, 100, 1000]).unwrap();
        assert_eq!(rows[0].eps_ma, 0.0);
        for r in &rows[1..] {
            assert!(r.eps_ma <= r.eps_rdp * (1.0 + TIE_TOLERANCE));
            assert!(r.eps_rdp < r.eps_strong);
            assert!(r.eps_rdp < r.eps_naive);
        }
        for w in rows.windows(2) {
            assert!(w[1].eps_naive >= w[0].eps_naive);
            assert!(w[1].eps_strong >= w[0].eps_strong);
            assert!(w[1].eps_rdp >= w[0].eps_rdp);
            assert!(w[1].eps_ma >= w[0].eps_ma);
        }
    }

    #[test]
    fn ledgers_agree_with_closed_forms() {
        let mut ledger = RdpLedger::new();
        for _ in 0..50 {
            ledger.record(&[0.25, 0.25]);
        }
        assert_relative_eq!(ledger.sigma_rdp_sq(), 0.125, max_relative = 1e-12);
        assert_relative_eq!(ledger.epsilon_at(2.0), rdp_total(0.25, 0.25, 50, 2.0).unwrap(), max_relative = 1e-12);
        let (a, _) = ledger.to_dp(1e-5).unwrap();
        let (b, _) = rdp_to_dp(0.125, 50, 1e-5).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);

        let ma = MomentLedger {
            sensitivity: 1.0,
            sigma: 0.125f64.sqrt(),
            iterations: 50,
            delta_target: 1e-5,
        };
        let eps = ma.epsilon().unwrap();
        assert_relative_eq!(ma.log_delta_at(eps), 1e-5f64.ln(), max_relative = 1e-9);
        assert_relative_eq!(ma.moment(1.0), 50.0 / 0.125, max_relative = 1e-12);
    }

    #[test]
    fn variance_conventions() {
        assert_relative_eq!(rdp_sigma_sq(2.0, 0.5, 1.0, RdpVarianceConvention::SquaredSensitivity), 16.0);
        assert_relative_eq!(rdp_sigma_sq(2.0, 0.5, 0.1, RdpVarianceConvention::AsPrinted), 0.08, max_relative = 1e-12);
    }
}
