use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::pipeline::{cape_epsilon_for, run_once_in_context, RunSpec};
use super::record::RunRecord;
use crate::Result;

/// One grid point of a sweep: every seed at fixed algorithm, `M` and `ε_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub algorithm: Algorithm,
    pub subjects: usize,
    /// Grid value of `ε_i`; `None` for the non-private run.
    pub epsilon_i: Option<f64>,
    /// Per-iteration budget actually given to the pure-DP baseline.
    pub baseline_epsilon: Option<f64>,
}

/// Summary over the seeds of a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub subjects: usize,
    pub epsilon_i: Option<f64>,
    pub baseline_epsilon: Option<f64>,
    pub runs: usize,
    pub mean_q: f64,
    pub std_q: f64,
    pub mean_iterations: f64,
    pub eps_naive: Option<f64>,
    pub eps_rdp: Option<f64>,
    pub eps_ma: Option<f64>,
    pub pca_epsilon: Option<f64>,
}

/// Flat per-run row for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub algorithm: Algorithm,
    pub subjects: usize,
    pub epsilon_i: Option<f64>,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub q_ngi: f64,
    pub eps_naive: Option<f64>,
    pub eps_rdp: Option<f64>,
    pub eps_ma: Option<f64>,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            algorithm: r.algorithm,
            subjects: r.dataset.subjects,
            epsilon_i: r.epsilon_i,
            seed: r.seed,
            iterations: r.iterations,
            converged: r.converged,
            q_ngi: r.q_ngi,
            eps_naive: r.ledger.eps_naive,
            eps_rdp: r.ledger.eps_rdp,
            eps_ma: r.ledger.eps_ma,
        }
    }
}

/// Records of every run plus per-grid-point summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<GridPoint>,
    pub records: Vec<Vec<RunRecord>>,
    pub summary: Vec<SweepRow>,
}

/// Expands the sweep grid in algorithm, subjects, `ε_i` order.
pub fn grid_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let mut points = Vec::new();
    for &algorithm in &cfg.sweep.algorithms {
        for &subjects in &cfg.sweep.subjects {
            if algorithm == Algorithm::Djica {
                points.push(GridPoint {
                    algorithm,
                    subjects,
                    epsilon_i: None,
                    baseline_epsilon: None,
                });
                continue;
            }
            for &eps in &cfg.sweep.epsilons {
                let baseline_epsilon = if algorithm == Algorithm::DpDjica {
                    Some(if cfg.sweep.match_baseline_epsilon {
                        let j = cfg.ica.max_iter.max(1);
                        cape_epsilon_for(cfg, eps, j)? / j as f64
                    } else {
                        eps
                    })
                } else {
                    None
                };
                points.push(GridPoint {
                    algorithm,
                    subjects,
                    epsilon_i: Some(eps),
                    baseline_epsilon,
                });
            }
        }
    }
    Ok(points)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

pub fn summarize(point: &GridPoint, records: &[RunRecord]) -> SweepRow {
    let q: Vec<f64> = records.iter().map(|r| r.q_ngi).collect();
    let its: Vec<f64> = records.iter().map(|r| r.iterations as f64).collect();
    SweepRow {
        algorithm: point.algorithm,
        subjects: point.subjects,
        epsilon_i: point.epsilon_i,
        baseline_epsilon: point.baseline_epsilon,
        runs: records.len(),
        mean_q: if q.is_empty() { f64::NAN } else { mean(&q) },
        std_q: std(&q),
        mean_iterations: if its.is_empty() { f64::NAN } else { mean(&its) },
        eps_naive: mean_opt(records.iter().map(|r| r.ledger.eps_naive)),
        eps_rdp: mean_opt(records.iter().map(|r| r.ledger.eps_rdp)),
        eps_ma: mean_opt(records.iter().map(|r| r.ledger.eps_ma)),
        pca_epsilon: mean_opt(records.iter().map(|r| r.ledger.pca_epsilon)),
    }
}

/// Runs every grid point for every seed. Runs execute in parallel and are
/// collected in grid order, so the output does not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let points = grid_points(cfg)?;
    let specs: Vec<RunSpec> = points
        .iter()
        .flat_map(|p| {
            cfg.seeds.iter().map(move |&seed| RunSpec {
                algorithm: p.algorithm,
                subjects: p.subjects,
                epsilon_i: p.epsilon_i.unwrap_or(f64::INFINITY),
                seed,
                baseline_epsilon: p.baseline_epsilon,
            })
        })
        .collect();
    let flat: Vec<RunRecord> = specs
        .par_iter()
        .map(|s| run_once_in_context(cfg, s))
        .collect::<Result<_>>()?;
    let per = cfg.seeds.len();
    let records: Vec<Vec<RunRecord>> = flat.chunks(per).map(<[RunRecord]>::to_vec).collect();
    let summary = points
        .iter()
        .zip(&records)
        .map(|(p, r)| summarize(p, r))
        .collect();
    Ok(SweepOutput {
        points,
        records,
        summary,
    })
}
