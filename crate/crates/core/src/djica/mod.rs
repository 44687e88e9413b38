//! Decentralized Infomax ICA with differential privacy.
//!
//! Sites hold PCA-reduced data `X_s^r` (`R × N_s`). Each iteration they
//! compute clipped Infomax gradients for the shared unmixing matrix `W` and
//! bias `b`; the aggregator averages the (noised) gradients and takes a
//! gradient step.

mod baseline;
mod gradient;
mod train;

pub use baseline::{dp_djica_baseline, laplace_scale, BaselineRun};
pub use gradient::{
    gradients_from_sources, infomax_gradients, infomax_objective, infomax_objective_sites,
    source_estimates, GradientBundle, Z_CLAMP,
};
pub use train::{
    cape_average, cape_djica, djica_nonprivate, local_dp_ica, train, GradientNoise, IcaConfig,
    IcaRun, IterationRecord, Step, TrainState,
};
