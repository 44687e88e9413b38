use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gradient::{gradients_from_sources, source_estimates};
use super::train::{train, IcaConfig, IcaRun, Step};
use crate::linalg::RealMatrix;
use crate::{CapeError, Result};

/// Output of the source-perturbation baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    /// Run on the rescaled data, with `W` mapped back to input coordinates.
    pub run: IcaRun,
    /// Factor applied to the inputs to meet the norm restriction.
    pub scale: f64,
    /// Pure-DP total `J* ε_i`.
    pub epsilon_total: f64,
}

/// Laplace scale for perturbing `Z = W X` when every sample has norm at
/// most `1/(2√R)`: the L1 sensitivity of one column is at most `‖W‖_F`.
pub fn laplace_scale(w: &RealMatrix, epsilon: f64) -> f64 {
    w.norm() / epsilon
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Decentralized Infomax where each site perturbs its local source
/// estimates with Laplace noise, giving `ε_i`-DP per iteration.
pub fn dp_djica_baseline<R: Rng + ?Sized>(
    x_s: &[RealMatrix],
    epsilon_i: f64,
    config: &IcaConfig,
    rng: &mut R,
) -> Result<BaselineRun> {
    if !(epsilon_i > 0.0) {
        return Err(CapeError::Domain(format!("epsilon {epsilon_i} must be > 0")));
    }
    let first = x_s
        .first()
        .ok_or_else(|| CapeError::InvalidNetwork("no sites".into()))?;
    let r = first.nrows();
    if x_s.iter().any(|x| x.nrows() != r || x.ncols() != first.ncols()) {
        return Err(CapeError::ShapeMismatch("sites differ in shape".into()));
    }
    let max_norm = x_s
        .iter()
        .flat_map(|x| x.column_iter().map(|c| c.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let scale = if max_norm > 0.0 {
        1.0 / (2.0 * (r as f64).sqrt() * max_norm)
    } else {
        1.0
    };
    let scaled: Vec<RealMatrix> = x_s.iter().map(|x| x * scale).collect();
    let mut run = train(
        r,
        config,
        |_| f64::NAN,
        |state| {
            let lambda = if epsilon_i.is_finite() {
                laplace_scale(&state.w, epsilon_i)
            } else {
                0.0
            };
            let s = scaled.len() as f64;
            let mut g = RealMatrix::zeros(r, r);
            let mut h = crate::linalg::RealVector::zeros(r);
            for x in &scaled {
                let mut z = source_estimates(&state.w, &state.b, x);
                if lambda > 0.0 {
                    z.apply(|v| *v += laplace(lambda, rng));
                }
                let bundle = gradients_from_sources(&state.w, &z, config.b_g, config.bias_bound())?;
                g += bundle.g_s;
                h += bundle.h_s;
            }
            Ok(Step {
                g: g / s,
                h: h / s,
                sigmas_sq: None,
            })
        },
    )?;
    run.state.w *= scale;
    let epsilon_total = run.state.j as f64 * epsilon_i;
    Ok(BaselineRun {
        run,
        scale,
        epsilon_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::djica::train::djica_nonprivate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn laplace_scale_is_inverse_in_epsilon() {
        let w = RealMatrix::identity(4, 4);
        assert_eq!(laplace_scale(&w, 1.0), 2.0);
        assert_eq!(laplace_scale(&w, 0.5), 4.0);
    }

    #[test]
    fn laplace_draws_have_right_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 100_000;
        let mean_abs = (0..n).map(|_| laplace(2.0, &mut rng).abs()).sum::<f64>() / n as f64;
        assert!((mean_abs / 2.0 - 1.0).abs() < 0.02, "{mean_abs}");
    }

    #[test]
    fn infinite_budget_is_nonprivate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = RealMatrix::from_fn(3, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sites = vec![x.columns(0, 30).into_owned(), x.columns(30, 30).into_owned()];
        let config = IcaConfig {
            max_iter: 20,
            ..IcaConfig::default()
        };
        let base = dp_djica_baseline(&sites, f64::INFINITY, &config, &mut rng).unwrap();
        let scaled: Vec<RealMatrix> = sites.iter().map(|x| x * base.scale).collect();
        let reference = djica_nonprivate(&scaled, &config).unwrap();
        assert!((&base.run.state.w - reference.state.w * base.scale).amax() < 1e-12);
        for x in &scaled {
            let bound = 1.0 / (2.0 * 3f64.sqrt());
            assert!(x.column_iter().all(|c| c.norm() <= bound * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn privacy_total_is_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = RealMatrix::from_fn(2, 20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let config = IcaConfig {
            max_iter: 7,
            tol: 0.0,
            ..IcaConfig::default()
        };
        let base = dp_djica_baseline(&[x], 0.3, &config, &mut rng).unwrap();
        assert!((base.epsilon_total - 2.1).abs() < 1e-12);
    }
}
