//! Synthetic multi-subject data: GARCH(1,1) sources mixed by smooth spatial
//! maps and split across sites by subject.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{condition_number, correlation, RealMatrix};
use crate::{CapeError, Result};

const BURN_IN: usize = 500;
const MAX_SOURCE_CORRELATION: f64 = 0.2;
const MAX_MIXING_CONDITION: f64 = 10.0;
const MAX_ATTEMPTS: usize = 100;

/// `σ_t² = ω + a₁ ε²_{t−1} + β₁ σ²_{t−1}`, `ε_t = σ_t ξ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl Default for GarchParams {
    fn default() -> Self {
        Self {
            omega: 0.1,
            alpha1: 0.1,
            beta1: 0.8,
        }
    }
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0
            && self.alpha1 >= 0.0
            && self.beta1 >= 0.0
            && self.alpha1 + self.beta1 < 1.0
            && self.omega.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CapeError::Domain(format!(
                "GARCH parameters {self:?} are not stationary"
            )))
        }
    }

    /// Kurtosis of the stationary series, infinite when the fourth moment
    /// does not exist.
    pub fn kurtosis(&self) -> f64 {
        let p = self.alpha1 + self.beta1;
        let denom = 1.0 - p * p - 2.0 * self.alpha1 * self.alpha1;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            3.0 * (1.0 - p * p) / denom
        }
    }
}

/// How mixing columns are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKind {
    /// Sums of two signed 2-D Gaussian bumps on the image grid.
    #[default]
    Bumps,
    /// I.i.d. standard normal entries.
    Gaussian,
}

fn garch_series<R: Rng + ?Sized>(n: usize, p: &GarchParams, rng: &mut R) -> Vec<f64> {
    let mut var = p.omega / (1.0 - p.alpha1 - p.beta1);
    let mut eps = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + BURN_IN {
        var = p.omega + p.alpha1 * eps * eps + p.beta1 * var;
        eps = var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if t >= BURN_IN {
            out.push(eps);
        }
    }
    standardize(&mut out);
    out
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// `R × (M·N_m)` matrix of standardized GARCH rows. A row correlated above
/// 0.2 with an earlier row is redrawn.
pub fn generate_garch_sources<R: Rng + ?Sized>(
    r: usize,
    m: usize,
    n_m: usize,
    params: &GarchParams,
    rng: &mut R,
) -> Result<RealMatrix> {
    params.validate()?;
    let n = m * n_m;
    if r == 0 || n < 2 {
        return Err(CapeError::Domain(format!(
            "need at least one source and two samples, got R = {r}, N = {n}"
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(r);
    while rows.len() < r {
        let mut attempts = 0;
        let row = loop {
            let cand = garch_series(n, params, rng);
            if rows
                .iter()
                .all(|prev| correlation(prev, &cand).abs() < MAX_SOURCE_CORRELATION)
            {
                break cand;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(CapeError::Domain(
                    "could not draw weakly correlated sources; increase N".into(),
                ));
            }
        };
        rows.push(row);
    }
    Ok(RealMatrix::from_fn(r, n, |i, j| rows[i][j]))
}

fn bump_column<R: Rng + ?Sized>(side: usize, rng: &mut R) -> Vec<f64> {
    let mut col = vec![0.0; side * side];
    let s = side as f64;
    for k in 0..2 {
        let cy = rng.random_range(0.0..s);
        let cx = rng.random_range(0.0..s);
        let width = rng.random_range(0.08 * s..0.2 * s).max(0.75);
        let amp = rng.random_range(0.5..1.0) * if k == 0 || rng.random::<bool>() { 1.0 } else { -1.0 };
        for y in 0..side {
            for x in 0..side {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                col[y * side + x] += amp * (-d2 / (2.0 * width * width)).exp();
            }
        }
    }
    col
}

/// `D × R` mixing matrix with columns of Euclidean norm `column_norm`.
/// Draws are repeated until the condition number is at most 10.
pub fn generate_mixing<R: Rng + ?Sized>(
    image_side: usize,
    r: usize,
    kind: MixingKind,
    column_norm: f64,
    rng: &mut R,
) -> Result<RealMatrix> {
    let d = image_side * image_side;
    if r == 0 || r > d {
        return Err(CapeError::Domain(format!("need 0 < R <= D, got R = {r}, D = {d}")));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut a = match kind {
            MixingKind::Bumps => {
                let cols: Vec<Vec<f64>> = (0..r).map(|_| bump_column(image_side, rng)).collect();
                RealMatrix::from_fn(d, r, |i, j| cols[j][i])
            }
            MixingKind::Gaussian => RealMatrix::from_fn(d, r, |_, _| rng.sample(StandardNormal)),
        };
        for mut c in a.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c *= column_norm / n;
            }
        }
        if condition_number(&(a.transpose() * &a)).sqrt() <= MAX_MIXING_CONDITION {
            return Ok(a);
        }
    }
    Err(CapeError::Domain(
        "could not draw a well-conditioned mixing matrix; increase the image size".into(),
    ))
}

/// Everything needed to build one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub sources: usize,
    pub image_side: usize,
    pub subjects: usize,
    pub time_points: usize,
    pub sites: usize,
    pub garch: GarchParams,
    pub mixing: MixingKind,
    /// Norm of each mixing column; `None` means `1/√R`.
    pub column_norm: Option<f64>,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            sources: 8,
            image_side: 10,
            subjects: 64,
            time_points: 50,
            sites: 4,
            garch: GarchParams::default(),
            mixing: MixingKind::Bumps,
            column_norm: None,
        }
    }
}

impl DatasetParams {
    pub fn dim(&self) -> usize {
        self.image_side * self.image_side
    }

    pub fn samples(&self) -> usize {
        self.subjects * self.time_points
    }

    pub fn validate(&self) -> Result<()> {
        self.garch.validate()?;
        if self.sites == 0 || self.subjects % self.sites != 0 {
            return Err(CapeError::AsymmetricInput {
                total: self.subjects,
                sites: self.sites,
            });
        }
        if self.sources == 0 || self.sources > self.dim() || self.time_points == 0 {
            return Err(CapeError::Domain(format!(
                "invalid shape R = {}, D = {}, N_m = {}",
                self.sources,
                self.dim(),
                self.time_points
            )));
        }
        Ok(())
    }
}

/// Sources, mixing and per-site observations `X_s = A S_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub params: DatasetParams,
    pub seed: u64,
    pub sources: RealMatrix,
    pub mixing: RealMatrix,
    pub sites: Vec<RealMatrix>,
}

impl SynthDataset {
    pub fn subjects_per_site(&self) -> usize {
        self.params.subjects / self.params.sites
    }

    /// All site observations side by side in site order.
    pub fn pooled(&self) -> RealMatrix {
        hstack(&self.sites)
    }
}

/// Concatenates matrices with equal row counts.
pub fn hstack(blocks: &[RealMatrix]) -> RealMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Mixes the sources and assigns contiguous blocks of subjects to sites.
pub fn mix_and_partition(
    sources: RealMatrix,
    mixing: RealMatrix,
    params: DatasetParams,
    seed: u64,
) -> Result<SynthDataset> {
    params.validate()?;
    if sources.nrows() != mixing.ncols() || mixing.nrows() != params.dim() {
        return Err(CapeError::ShapeMismatch(format!(
            "sources {}x{}, mixing {}x{}",
            sources.nrows(),
            sources.ncols(),
            mixing.nrows(),
            mixing.ncols()
        )));
    }
    if sources.ncols() != params.samples() {
        return Err(CapeError::ShapeMismatch(format!(
            "{} samples for {} subjects of {} time points",
            sources.ncols(),
            params.subjects,
            params.time_points
        )));
    }
    let per_site = params.samples() / params.sites;
    let sites = (0..params.sites)
        .map(|s| &mixing * sources.columns(s * per_site, per_site))
        .collect();
    Ok(SynthDataset {
        params,
        seed,
        sources,
        mixing,
        sites,
    })
}

/// Builds a full dataset from a seed.
pub fn generate_dataset(params: &DatasetParams, seed: u64) -> Result<SynthDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = generate_garch_sources(
        params.sources,
        params.subjects,
        params.time_points,
        &params.garch,
        &mut rng,
    )?;
    let norm = params
        .column_norm
        .unwrap_or(1.0 / (params.sources as f64).sqrt());
    let mixing = generate_mixing(params.image_side, params.sources, params.mixing, norm, &mut rng)?;
    mix_and_partition(sources, mixing, params.clone(), seed)
}
