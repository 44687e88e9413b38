//! Differentially private decentralized computation with correlated noise.
//!
//! Sites release local statistics perturbed by a zero-sum correlated term plus
//! a small independent term. The correlated parts cancel at the aggregator, so
//! the averaged release carries the same noise variance as a centralized
//! Gaussian mechanism on the pooled data while every individual release stays
//! differentially private.
//!
//! The crate is organised bottom-up:
//!
//! * [`secure_sum`]: finite-field quantization, Shamir sharing and the
//!   threshold secure sum used to draw zero-sum noise.
//! * [`cape`]: noise planning, the correlated-noise release, baselines and
//!   the per-site `(ε, δ)` relation.
//! * [`accounting`]: Gaussian mechanism calibration and multi-round
//!   composition (naive, strong, Rényi, moments accountant).
//! * [`dp_pca`]: decentralized DP PCA over noisy local covariances.
//! * [`djica`]: decentralized Infomax ICA with clipped, noised gradients.
//! * [`datagen`] and [`metrics`]: synthetic GARCH sources, spatial mixing and
//!   evaluation indices.
//! * [`harness`]: experiment configuration, sweeps, persistence and exports.

pub mod accounting;
pub mod cape;
pub mod datagen;
pub mod djica;
pub mod dp_pca;
mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod secure_sum;

pub use error::{CapeError, Result};
pub use linalg::{RealMatrix, RealVector};
