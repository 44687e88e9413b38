//! Table generators behind the CLI subcommands. Every generator is a pure
//! function of the configuration, so repeated runs give identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::matrix_io::{save_matrix, write_csv_rows};
use super::pipeline::stream_rng;
use super::sweep::{RunRow, SweepOutput};
use crate::accounting::{accountant_compare, AccountantRow};
use crate::cape::{
    cape_release, conventional_release, delta_comparison_curves, h_ratio, h_upper_bound, log_spaced,
    max_colluders, plan_symmetric, DeltaGrid, DeltaRow, Sensitivity,
};
use crate::datagen::{GarchParams, SynthDataset};
use crate::secure_sum::{generate_zero_sum, SecureSum};
use crate::{CapeError, Result};

pub const NOISE_DEMO_CSV: &str = "noise_demo.csv";
pub const DELTA_CURVES_CSV: &str = "delta_curves.csv";
pub const H_RATIO_CSV: &str = "h_ratio.csv";
pub const ACCOUNTANT_CSV: &str = "accountant_compare.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_RUNS_CSV: &str = "sweep_runs.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Empirical checks of the zero-sum construction and CAPE aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDemoRow {
    pub sites: usize,
    pub tau: f64,
    pub trials: usize,
    /// Mean over sites of `Var(e_s) / (τ²(1 − 1/S))`.
    pub zero_sum_var_ratio: f64,
    pub max_residual: f64,
    pub residual_bound: f64,
    /// `Var(a_cape) / τ_pool²`.
    pub pooled_var_ratio: f64,
    /// `Var(a_conv) / Var(a_cape)`.
    pub variance_gain: f64,
    pub gain_over_sites: f64,
}

fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// One row per site count. The three stages draw from separate streams.
pub fn noise_demo(cfg: &ExperimentConfig) -> Result<Vec<NoiseDemoRow>> {
    let p = &cfg.noise_demo;
    let seed = cfg.seeds[0];
    p.sites
        .iter()
        .enumerate()
        .map(|(i, &sites)| {
            let secure = SecureSum::with_defaults(sites)?;
            let base = 3 * i as u64;
            let mut rng = stream_rng(seed, 10 + base);
            let zs = generate_zero_sum(p.trials, &vec![p.tau; sites], &secure, &mut rng)?;
            let expected = p.tau * p.tau * (1.0 - 1.0 / sites as f64);
            let zero_sum_var_ratio = zs.per_site.iter().map(|e| sample_var(e) / expected).sum::<f64>()
                / sites as f64;

            let plan = plan_symmetric(sites, sites, p.tau)?;
            let zeros = vec![vec![0.0; p.trials]; sites];
            let mut rng = stream_rng(seed, 11 + base);
            let cape = cape_release(&zeros, &plan, &secure, &mut rng)?;
            let var_cape = sample_var(&cape.aggregate);
            let mut rng = stream_rng(seed, 12 + base);
            let conv = conventional_release(&zeros, &plan.tau_s, &mut rng)?;
            let gain = sample_var(&conv) / var_cape;
            Ok(NoiseDemoRow {
                sites,
                tau: p.tau,
                trials: p.trials,
                zero_sum_var_ratio,
                max_residual: zs.max_residual(None),
                residual_bound: zs.residual_bound,
                pooled_var_ratio: var_cape / (plan.tau_pool * plan.tau_pool),
                variance_gain: gain,
                gain_over_sites: gain / sites as f64,
            })
        })
        .collect()
}

/// δ comparison over the configured grid with the largest tolerated
/// number of colluders.
pub fn delta_curves(cfg: &ExperimentConfig) -> Result<Vec<DeltaRow>> {
    let p = &cfg.delta_curves;
    let taus = log_spaced(p.tau_min, p.tau_max, p.points);
    let mut rows = Vec::new();
    for &sites in &p.sites {
        for &epsilon in &p.epsilons {
            rows.extend(delta_comparison_curves(&DeltaGrid {
                sites,
                colluders: max_colluders(sites),
                n_total: p.samples_per_site * sites,
                epsilon,
                taus: taus.clone(),
            })?);
        }
    }
    Ok(rows)
}

/// `H(n)` for partitions that move from equal counts to the extreme
/// `(N−S+1, 1, …, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HRatioRow {
    pub sites: usize,
    pub n_total: usize,
    pub largest: usize,
    pub h: f64,
    pub h_upper: f64,
}

pub const H_STEPS: usize = 10;

fn skewed_partition(n_total: usize, sites: usize, step: usize) -> Vec<usize> {
    let even = n_total / sites;
    let extreme = n_total - sites + 1;
    let largest = even + (extreme - even) * step / H_STEPS;
    let rest = n_total - largest;
    let k = sites - 1;
    let mut parts = vec![largest];
    parts.extend((0..k).map(|j| rest / k + usize::from(j < rest % k)));
    parts
}

pub fn h_ratio_table(cfg: &ExperimentConfig) -> Result<Vec<HRatioRow>> {
    let p = &cfg.delta_curves;
    let mut rows = Vec::new();
    for &sites in &p.sites {
        let n_total = p.samples_per_site * sites;
        for step in 0..=H_STEPS {
            let parts = skewed_partition(n_total, sites, step);
            rows.push(HRatioRow {
                sites,
                n_total,
                largest: parts[0],
                h: h_ratio(&parts, Sensitivity::Mean)?,
                h_upper: h_upper_bound(n_total, sites),
            });
        }
    }
    Ok(rows)
}

pub fn accountant_table(cfg: &ExperimentConfig) -> Result<Vec<AccountantRow>> {
    let p = &cfg.accountant;
    accountant_compare(p.sigma_w_sq, p.sigma_b_sq, p.delta_target, &p.iterations)
}

/// Dataset description written next to the matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sources: usize,
    pub dim: usize,
    pub subjects: usize,
    pub time_points: usize,
    pub sites: usize,
    pub seed: u64,
    pub garch: GarchParams,
    pub files: Vec<String>,
}

/// Writes `sources.bin`, `mixing.bin`, `site_XX.bin` and `manifest.json`.
pub fn write_dataset(dir: &Path, ds: &SynthDataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec!["sources.bin".to_string(), "mixing.bin".to_string()];
    save_matrix(&dir.join(&files[0]), &ds.sources)?;
    save_matrix(&dir.join(&files[1]), &ds.mixing)?;
    for (s, x) in ds.sites.iter().enumerate() {
        let name = format!("site_{s:02}.bin");
        save_matrix(&dir.join(&name), x)?;
        files.push(name);
    }
    let p = &ds.params;
    let manifest = DatasetManifest {
        sources: p.sources,
        dim: p.dim(),
        subjects: p.subjects,
        time_points: p.time_points,
        sites: p.sites,
        seed: ds.seed,
        garch: p.garch,
        files,
    };
    std::fs::write(dir.join(MANIFEST_JSON), serde_json::to_string_pretty(&manifest).map_err(|e| CapeError::Format(e.to_string()))?)?;
    Ok(manifest)
}

/// Writes the sweep summary and per-run rows.
pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv_rows(&dir.join(SWEEP_CSV), &out.summary)?;
    let runs: Vec<RunRow> = out.records.iter().flatten().map(RunRow::from).collect();
    write_csv_rows(&dir.join(SWEEP_RUNS_CSV), &runs)
}
