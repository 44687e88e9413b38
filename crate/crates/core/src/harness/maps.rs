use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix_io::{save_matrix_csv, write_csv_rows};
use super::record::RunRecord;
use crate::datagen::SynthDataset;
use crate::linalg::{correlation, RealMatrix};
use crate::{CapeError, Result};

/// One recovered spatial map matched to a true mixing column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    pub component: usize,
    pub estimate: usize,
    /// Absolute correlation with the true column.
    pub correlation: f64,
    /// Estimated map, sign-aligned and least-squares scaled to the truth.
    pub grid: RealMatrix,
    pub truth: RealMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapRow {
    component: usize,
    estimate: usize,
    correlation: f64,
}

/// Estimated mixing matrix `(W K)⁺` in observation space.
pub fn estimated_mixing(w: &RealMatrix, reduction: &RealMatrix) -> Result<RealMatrix> {
    (w * reduction)
        .pseudo_inverse(1e-12)
        .map_err(|e| CapeError::Domain(e.to_string()))
}

fn to_grid(col: &[f64], side: usize) -> RealMatrix {
    RealMatrix::from_fn(side, side, |y, x| col[y * side + x])
}

/// Matches estimated to true maps by greedy absolute correlation and
/// reshapes both to `side × side` grids.
pub fn export_spatial_maps(
    w: &RealMatrix,
    reduction: &RealMatrix,
    mixing: &RealMatrix,
    side: usize,
) -> Result<Vec<SpatialMap>> {
    if mixing.nrows() != side * side || reduction.ncols() != mixing.nrows() {
        return Err(CapeError::ShapeMismatch(format!(
            "mixing is {}x{}, reduction {}x{}, image side {side}",
            mixing.nrows(),
            mixing.ncols(),
            reduction.nrows(),
            reduction.ncols()
        )));
    }
    let est = estimated_mixing(w, reduction)?;
    let r = mixing.ncols();
    if est.ncols() != r {
        return Err(CapeError::ShapeMismatch(format!(
            "{} estimated components for {r} true ones",
            est.ncols()
        )));
    }
    let cols = |m: &RealMatrix, j: usize| m.column(j).iter().copied().collect::<Vec<f64>>();
    let truth: Vec<Vec<f64>> = (0..r).map(|j| cols(mixing, j)).collect();
    let guess: Vec<Vec<f64>> = (0..r).map(|j| cols(&est, j)).collect();
    let mut corr = vec![vec![0.0; r]; r];
    for (t, tc) in truth.iter().enumerate() {
        for (g, gc) in guess.iter().enumerate() {
            corr[t][g] = correlation(tc, gc);
        }
    }
    let mut used_t = vec![false; r];
    let mut used_g = vec![false; r];
    let mut maps = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best = (0, 0, -1.0);
        for t in (0..r).filter(|&t| !used_t[t]) {
            for g in (0..r).filter(|&g| !used_g[g]) {
                if corr[t][g].abs() > best.2 {
                    best = (t, g, corr[t][g].abs());
                }
            }
        }
        let (t, g, c) = best;
        used_t[t] = true;
        used_g[g] = true;
        let dot: f64 = truth[t].iter().zip(&guess[g]).map(|(a, b)| a * b).sum();
        let nsq: f64 = guess[g].iter().map(|v| v * v).sum();
        let scale = if nsq > 0.0 { dot / nsq } else { 0.0 };
        let aligned: Vec<f64> = guess[g].iter().map(|v| v * scale).collect();
        maps.push(SpatialMap {
            component: t,
            estimate: g,
            correlation: c,
            grid: to_grid(&aligned, side),
            truth: to_grid(&truth[t], side),
        });
    }
    maps.sort_by_key(|m| m.component);
    Ok(maps)
}

/// Spatial maps of a stored run against the dataset it was trained on.
pub fn maps_for_record(record: &RunRecord, dataset: &SynthDataset) -> Result<Vec<SpatialMap>> {
    if record.dataset != dataset.params || record.seed != dataset.seed {
        return Err(CapeError::ShapeMismatch(
            "run record and dataset were generated from different parameters".into(),
        ));
    }
    export_spatial_maps(&record.w, &record.reduction, &dataset.mixing, dataset.params.image_side)
}

/// Writes `map_XX.csv`, `truth_XX.csv` and a `maps.csv` summary.
pub fn write_spatial_maps(dir: &Path, maps: &[SpatialMap]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for m in maps {
        save_matrix_csv(&dir.join(format!("map_{:02}.csv", m.component)), &m.grid)?;
        save_matrix_csv(&dir.join(format!("truth_{:02}.csv", m.component)), &m.truth)?;
    }
    let rows: Vec<MapRow> = maps
        .iter()
        .map(|m| MapRow {
            component: m.component,
            estimate: m.estimate,
            correlation: m.correlation,
        })
        .collect();
    write_csv_rows(&dir.join("maps.csv"), &rows)
}

/// Mean matched correlation.
pub fn mean_correlation(maps: &[SpatialMap]) -> f64 {
    maps.iter().map(|m| m.correlation).sum::<f64>() / maps.len().max(1) as f64
}
