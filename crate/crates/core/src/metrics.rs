//! Source-separation quality indices.

use serde::{Deserialize, Serialize};

use crate::linalg::RealMatrix;
use crate::{CapeError, Result};

/// Gain matrix `P = W · reduction · A` and its normalized gain index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub gain_matrix: RealMatrix,
    pub q_ngi: f64,
}

/// Normalized Amari-style index of a square gain matrix. Rows are first
/// divided by their largest magnitude, which makes the index invariant to
/// row scaling and permutation. Zero exactly at scaled permutations, one
/// when every entry has the same magnitude. A zero row or column scores 1.
pub fn gain_index(p: &RealMatrix) -> f64 {
    let r = p.nrows();
    debug_assert_eq!(r, p.ncols());
    if r < 2 {
        return 0.0;
    }
    let mut abs = p.map(f64::abs);
    if abs.iter().any(|v| !v.is_finite()) {
        return 1.0;
    }
    let mut total = 0.0;
    for i in 0..r {
        let max = abs.row(i).max();
        if max == 0.0 {
            return 1.0;
        }
        abs.row_mut(i).unscale_mut(max);
        total += abs.row(i).sum() - 1.0;
    }
    for j in 0..r {
        let col = abs.column(j);
        let max = col.max();
        if max == 0.0 {
            return 1.0;
        }
        total += col.sum() / max - 1.0;
    }
    total / (2.0 * r as f64 * (r as f64 - 1.0))
}

/// Index of `W · reduction · A` where `reduction` maps observations to the
/// space `W` acts on (`V_Rᵀ`, optionally followed by whitening).
pub fn normalized_gain_index(w: &RealMatrix, reduction: &RealMatrix, a: &RealMatrix) -> Result<GainReport> {
    if w.ncols() != reduction.nrows() || reduction.ncols() != a.nrows() || w.nrows() != a.ncols() {
        return Err(CapeError::ShapeMismatch(format!(
            "gain matrix of {}x{} · {}x{} · {}x{} is not square",
            w.nrows(),
            w.ncols(),
            reduction.nrows(),
            reduction.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let p = w * reduction * a;
    let q = gain_index(&p);
    Ok(GainReport {
        gain_matrix: p,
        q_ngi: q,
    })
}
