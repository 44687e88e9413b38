//! Correlation-assisted private estimation.
//!
//! Each site releases `â_s = f(x_s) + e_s + g_s`, where the `e_s` sum to zero
//! across sites and `g_s` is small independent noise. The aggregate
//! `Σ μ_s â_s` carries only the independent part and so reaches the noise
//! level of a centralized Gaussian mechanism on the pooled data.

mod curves;
mod plan;
mod privacy;
mod release;

pub use curves::{
    delta_comparison_curves, h_ratio, h_upper_bound, log_spaced, majorized_by, DeltaGrid, DeltaRow,
    Sensitivity,
};
pub use plan::{max_colluders, plan_asymmetric, plan_symmetric, NoisePlan};
pub use privacy::{
    adversary_covariance, cape_delta, cape_delta_asymmetric, cape_delta_exact, exact_mu_z,
    loss_moments_from_covariance, mean_sensitivities, printed_mu_z, CapeDelta,
};
pub use release::{cape_release, conventional_release, conventional_variance, CapeRelease};
