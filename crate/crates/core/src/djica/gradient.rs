use serde::{Deserialize, Serialize};

use crate::linalg::{RealMatrix, RealVector};
use crate::{CapeError, Result};

/// Sigmoid arguments are clamped to `±Z_CLAMP`.
pub const Z_CLAMP: f64 = 500.0;

/// Clipped mean gradients of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub g_s: RealMatrix,
    pub h_s: RealVector,
    pub b_g: f64,
    pub b_h: f64,
    /// Largest per-sample `‖G_n‖_F` after clipping.
    pub max_g_norm: f64,
    /// Largest per-sample `‖h_n‖₂` after clipping.
    pub max_h_norm: f64,
    pub samples: usize,
}

/// `Z = W X + b 1ᵀ`, clamped.
pub fn source_estimates(w: &RealMatrix, b: &RealVector, x: &RealMatrix) -> RealMatrix {
    let mut z = w * x;
    for mut col in z.column_iter_mut() {
        col += b;
        col.apply(|v| *v = v.clamp(-Z_CLAMP, Z_CLAMP));
    }
    z
}

/// `1 − 2 sigmoid(z) = −tanh(z/2)`.
fn y_hat(z: &RealMatrix) -> RealMatrix {
    z.map(|v| -(0.5 * v).tanh())
}

fn check_bounds(b_g: f64, b_h: f64) -> Result<()> {
    if !(b_g > 0.0 && b_h > 0.0) {
        return Err(CapeError::Domain(format!(
            "clip bounds must be positive, got B_G = {b_g}, B_h = {b_h}"
        )));
    }
    Ok(())
}

/// Clipped Infomax gradients at `(W, b)` on the columns of `x`.
///
/// The per-sample weight gradient is `G_n = (I + ŷ_n z_nᵀ) W` with
/// `ŷ = 1 − 2 sigmoid(z)`, scaled down to Frobenius norm `b_g` when larger.
/// The per-sample bias gradient `ŷ_n` is clipped to `b_h`.
pub fn infomax_gradients(
    w: &RealMatrix,
    b: &RealVector,
    x: &RealMatrix,
    b_g: f64,
    b_h: f64,
) -> Result<GradientBundle> {
    if w.nrows() != w.ncols() || w.ncols() != x.nrows() || b.len() != w.nrows() {
        return Err(CapeError::ShapeMismatch(format!(
            "W is {}x{}, b has {} entries, X is {}x{}",
            w.nrows(),
            w.ncols(),
            b.len(),
            x.nrows(),
            x.ncols()
        )));
    }
    gradients_from_sources(w, &source_estimates(w, b, x), b_g, b_h)
}

/// Same as [`infomax_gradients`] with the source estimates `z` given.
pub fn gradients_from_sources(w: &RealMatrix, z: &RealMatrix, b_g: f64, b_h: f64) -> Result<GradientBundle> {
    check_bounds(b_g, b_h)?;
    let (r, n) = z.shape();
    if n == 0 {
        return Err(CapeError::Domain("no samples".into()));
    }
    let yh = y_hat(z);
    let wt = w.transpose();
    let u = &wt * z;
    let v = &wt * &yh;
    let w_sq = w.norm_squared();
    let mut cg = Vec::with_capacity(n);
    let mut max_g: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let mut h = RealVector::zeros(r);
    for k in 0..n {
        let y_sq = yh.column(k).norm_squared();
        let g_sq = (w_sq + 2.0 * u.column(k).dot(&v.column(k)) + y_sq * u.column(k).norm_squared()).max(0.0);
        let g_norm = g_sq.sqrt();
        let c = 1.0 / (g_norm / b_g).max(1.0);
        max_g = max_g.max(c * g_norm);
        cg.push(c);
        let h_norm = y_sq.sqrt();
        let ch = 1.0 / (h_norm / b_h).max(1.0);
        max_h = max_h.max(ch * h_norm);
        h.axpy(ch, &yh.column(k), 1.0);
    }
    let mut scaled = yh;
    for (mut col, &c) in scaled.column_iter_mut().zip(&cg) {
        col *= c;
    }
    let sum_c: f64 = cg.iter().sum();
    let nf = n as f64;
    let g = (w * sum_c + scaled * z.transpose() * w) / nf;
    h /= nf;
    if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(CapeError::Divergence {
            iteration: 0,
            reason: "non-finite gradient".into(),
        });
    }
    Ok(GradientBundle {
        g_s: g,
        h_s: h,
        b_g,
        b_h,
        max_g_norm: max_g,
        max_h_norm: max_h,
        samples: n,
    })
}

/// `ln sigmoid'(z) = −|z| − 2 ln(1 + e^{−|z|})`.
fn log_sigmoid_derivative(z: f64) -> f64 {
    let a = z.abs();
    -a - 2.0 * (-a).exp().ln_1p()
}

/// Infomax objective `ln|det W| + (1/N) Σ_n Σ_i ln sigmoid'(z_in)`: the
/// output entropy up to a data-dependent constant.
pub fn infomax_objective(w: &RealMatrix, b: &RealVector, x: &RealMatrix) -> f64 {
    let z = source_estimates(w, b, x);
    let n = x.ncols().max(1) as f64;
    w.determinant().abs().ln() + z.iter().map(|&v| log_sigmoid_derivative(v)).sum::<f64>() / n
}

/// Mean objective over sites of equal size.
pub fn infomax_objective_sites(w: &RealMatrix, b: &RealVector, x_s: &[RealMatrix]) -> f64 {
    x_s.iter().map(|x| infomax_objective(w, b, x)).sum::<f64>() / x_s.len().max(1) as f64
}
