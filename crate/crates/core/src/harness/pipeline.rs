use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::record::{LedgerTotals, RunRecord};
use crate::accounting::{ma_epsilon_pair, naive_composition, rdp_sigma_sq, RdpLedger};
use crate::datagen::{generate_dataset, SynthDataset};
use crate::djica::{
    cape_djica, djica_nonprivate, dp_djica_baseline, local_dp_ica, GradientNoise, IcaRun,
};
use crate::dp_pca::{cape_pca, local_dp_pca, pca_tau, pooled_pca, whitening};
use crate::linalg::{RealMatrix, RealVector};
use crate::metrics::normalized_gain_index;
use crate::secure_sum::SecureSum;
use crate::{CapeError, Result};

const PCA_STREAM: u64 = 1;
const ICA_STREAM: u64 = 2;

/// One point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub subjects: usize,
    pub epsilon_i: f64,
    pub seed: u64,
    /// Per-iteration budget of the pure-DP baseline; defaults to `epsilon_i`.
    pub baseline_epsilon: Option<f64>,
}

impl RunSpec {
    pub fn describe(&self) -> String {
        format!(
            "{} M={} eps_i={} seed={}",
            self.algorithm, self.subjects, self.epsilon_i, self.seed
        )
    }
}

/// Random stream `stream` of `seed`: each purpose gets its own stream so
/// that runs differing only in algorithm or budget share data and PCA noise.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reduced data and the map that produced it.
pub struct Reduction {
    pub k: RealMatrix,
    pub sites: Vec<RealMatrix>,
    pub pca_tau: Option<f64>,
}

fn reduce(cfg: &ExperimentConfig, ds: &SynthDataset, algorithm: Algorithm, seed: u64) -> Result<Reduction> {
    let r = ds.params.sources;
    let policy = cfg.pipeline.norm_policy;
    let per_site = ds.sites[0].ncols();
    let mut rng = stream_rng(seed, PCA_STREAM);
    let (vals, v, tau) = match algorithm {
        Algorithm::Djica => {
            let (vals, v) = pooled_pca(&ds.pooled(), r, policy)?;
            (vals, v, None)
        }
        Algorithm::LocalDpIca => {
            let tau = pca_tau(per_site, cfg.privacy.pca_epsilon, cfg.privacy.pca_delta)?.tau;
            let rel = local_dp_pca(&ds.sites[0], tau, r, policy, &mut rng)?;
            (rel.eigenvalues, rel.v_r, Some(tau))
        }
        Algorithm::CapeDjica | Algorithm::DpDjica => {
            let tau = pca_tau(per_site, cfg.privacy.pca_epsilon, cfg.privacy.pca_delta)?.tau;
            let secure = SecureSum::with_defaults(ds.sites.len())?;
            let rel = cape_pca(&ds.sites, tau, r, policy, &secure, &mut rng)?;
            (rel.eigenvalues, rel.v_r, Some(tau))
        }
    };
    let k = if cfg.pipeline.whiten {
        whitening(&v, &vals, cfg.pipeline.eigen_floor)
    } else {
        v.transpose()
    };
    let sites = match algorithm {
        Algorithm::LocalDpIca => vec![&k * &ds.sites[0]],
        _ => ds.sites.iter().map(|x| &k * x).collect(),
    };
    Ok(Reduction {
        k,
        sites,
        pca_tau: tau,
    })
}

fn gaussian_ledger(
    cfg: &ExperimentConfig,
    run: &IcaRun,
    noise: &GradientNoise,
    sites: usize,
) -> Result<LedgerTotals> {
    let p = &cfg.privacy;
    let j = run.state.j;
    let s = sites as f64;
    let mut ledger = RdpLedger::new();
    for rec in &run.history {
        ledger.record(&[
            rdp_sigma_sq(noise.weight.tau / s, noise.weight.sensitivity / s, rec.rho, p.rdp_convention),
            rdp_sigma_sq(noise.bias.tau / s, noise.bias.sensitivity / s, rec.rho, p.rdp_convention),
        ]);
    }
    let (eps_rdp, _) = ledger.to_dp(p.delta_target)?;
    let [sw, sb] = noise.sigma_sq();
    let eps_ma = ma_epsilon_pair(sw, sb, j as u64, p.delta_target)?;
    let (eps_naive, delta_naive) = naive_composition(p.epsilon_i, p.delta_i, j as u64);
    Ok(LedgerTotals {
        iterations: j,
        eps_naive: Some(eps_naive),
        delta_naive: Some(delta_naive),
        eps_rdp: Some(eps_rdp),
        eps_ma: Some(eps_ma),
        pca_epsilon: Some(p.pca_epsilon),
        pca_delta: Some(p.pca_delta),
        eps_with_pca: Some(eps_rdp + p.pca_epsilon),
    })
}

/// Overall RDP `ε` of `iterations` CAPE iterations at the configured
/// per-iteration budget, under the unit-sensitivity normalization.
pub fn cape_epsilon_for(cfg: &ExperimentConfig, epsilon_i: f64, iterations: usize) -> Result<f64> {
    let noise = GradientNoise::calibrate(&cfg.ica, 1, epsilon_i, cfg.privacy.delta_i)?;
    let mut ledger = RdpLedger::new();
    for _ in 0..iterations {
        ledger.record(&noise.sigma_sq());
    }
    Ok(ledger.to_dp(cfg.privacy.delta_target)?.0)
}

/// Generates the data, runs PCA and the selected ICA variant, and scores
/// the result.
pub fn run_once(cfg: &ExperimentConfig, spec: &RunSpec) -> Result<RunRecord> {
    let start = Instant::now();
    let params = crate::datagen::DatasetParams {
        subjects: spec.subjects,
        ..cfg.dataset.clone()
    };
    let ds = generate_dataset(&params, spec.seed)?;
    let red = reduce(cfg, &ds, spec.algorithm, spec.seed)?;
    let subjects_per_site = ds.subjects_per_site();
    let mut rng = stream_rng(spec.seed, ICA_STREAM);
    let p = &cfg.privacy;
    let (w, b, run_state, history, ledger, epsilon_i): (RealMatrix, RealVector, _, _, _, Option<f64>) =
        match spec.algorithm {
            Algorithm::CapeDjica => {
                let noise = GradientNoise::calibrate(&cfg.ica, subjects_per_site, spec.epsilon_i, p.delta_i)?;
                let secure = SecureSum::with_defaults(red.sites.len())?;
                let run = cape_djica(&red.sites, &noise, &cfg.ica, &secure, &mut rng)?;
                let ledger = gaussian_ledger(cfg, &run, &noise, red.sites.len())?;
                (run.state.w.clone(), run.state.b.clone(), run.state, run.history, ledger, Some(spec.epsilon_i))
            }
            Algorithm::LocalDpIca => {
                let noise = GradientNoise::calibrate(&cfg.ica, subjects_per_site, spec.epsilon_i, p.delta_i)?;
                let run = local_dp_ica(&red.sites[0], &noise, &cfg.ica, &mut rng)?;
                let ledger = gaussian_ledger(cfg, &run, &noise, 1)?;
                (run.state.w.clone(), run.state.b.clone(), run.state, run.history, ledger, Some(spec.epsilon_i))
            }
            Algorithm::Djica => {
                let run = djica_nonprivate(&red.sites, &cfg.ica)?;
                let ledger = LedgerTotals::nonprivate(run.state.j);
                (run.state.w.clone(), run.state.b.clone(), run.state, run.history, ledger, None)
            }
            Algorithm::DpDjica => {
                let eps = spec.baseline_epsilon.unwrap_or(spec.epsilon_i);
                let base = dp_djica_baseline(&red.sites, eps, &cfg.ica, &mut rng)?;
                let j = base.run.state.j;
                let ledger = LedgerTotals {
                    iterations: j,
                    eps_naive: Some(base.epsilon_total),
                    delta_naive: Some(0.0),
                    eps_rdp: None,
                    eps_ma: None,
                    pca_epsilon: Some(p.pca_epsilon),
                    pca_delta: Some(p.pca_delta),
                    eps_with_pca: Some(base.epsilon_total + p.pca_epsilon),
                };
                let state = base.run.state;
                (state.w.clone(), state.b.clone(), state, base.run.history, ledger, Some(eps))
            }
        };
    let report = normalized_gain_index(&w, &red.k, &ds.mixing)?;
    Ok(RunRecord {
        config_hash: cfg.hash(),
        algorithm: spec.algorithm,
        seed: spec.seed,
        dataset: params,
        epsilon_i,
        iterations: run_state.j,
        converged: run_state.converged,
        q_ngi: report.q_ngi,
        history,
        ledger,
        w,
        b,
        reduction: red.k,
        wall_clock_ms: start.elapsed().as_millis() as u64,
        digest: String::new(),
    }
    .seal())
}

/// Like [`run_once`] with the grid point attached to any error.
pub fn run_once_in_context(cfg: &ExperimentConfig, spec: &RunSpec) -> Result<RunRecord> {
    let rec = run_once(cfg, spec).map_err(|e: CapeError| e.context(spec.describe()))?;
    log::debug!(
        "{}: q = {:.4}, {} iterations, {} ms",
        spec.describe(),
        rec.q_ngi,
        rec.iterations,
        rec.wall_clock_ms
    );
    Ok(rec)
}
