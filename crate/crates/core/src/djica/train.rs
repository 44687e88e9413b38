use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gradient::{infomax_gradients, infomax_objective_sites, GradientBundle};
use crate::accounting::{GaussianMech, RdpLedger};
use crate::cape::{cape_release, plan_symmetric};
use crate::linalg::{RealMatrix, RealVector};
use crate::secure_sum::SecureSum;
use crate::{CapeError, Result};

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub max_iter: usize,
    /// Stop once `‖Δ_W‖_F² < tol`.
    pub tol: f64,
    /// Initial learning rate; `None` means `0.015/ln R`.
    pub rho: Option<f64>,
    pub b_g: f64,
    /// Bias clip bound; `None` means `√B_G`.
    pub b_h: Option<f64>,
    /// Updates with `‖Δ_W‖_F` above this are rescaled to it and the
    /// learning rate is multiplied by `rho_decay`.
    pub update_cap: f64,
    pub rho_decay: f64,
    pub divergence_bound: f64,
    /// Evaluate the objective on every iteration (diagnostic only).
    pub record_objective: bool,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            rho: None,
            b_g: 30.0,
            b_h: None,
            update_cap: 1.0,
            rho_decay: 0.9,
            divergence_bound: 1e8,
            record_objective: false,
        }
    }
}

impl IcaConfig {
    pub fn initial_rho(&self, r: usize) -> f64 {
        self.rho.unwrap_or_else(|| {
            if r < 2 {
                0.015
            } else {
                0.015 / (r as f64).ln()
            }
        })
    }

    pub fn bias_bound(&self) -> f64 {
        self.b_h.unwrap_or_else(|| self.b_g.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tol >= 0.0
            && self.b_g > 0.0
            && self.bias_bound() > 0.0
            && self.rho.is_none_or(|r| r > 0.0)
            && self.update_cap > 0.0
            && self.rho_decay > 0.0
            && self.rho_decay <= 1.0
            && self.divergence_bound > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CapeError::Config(format!("invalid ICA configuration {self:?}")))
        }
    }
}

/// Per-site Gaussian noise on the weight and bias gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientNoise {
    pub weight: GaussianMech,
    pub bias: GaussianMech,
}

impl GradientNoise {
    /// Calibrates for `subjects` subjects at the releasing site, with
    /// sensitivities `2B_G/M_s` and `2B_h/M_s`.
    pub fn calibrate(config: &IcaConfig, subjects: usize, epsilon: f64, delta: f64) -> Result<Self> {
        if subjects == 0 {
            return Err(CapeError::Domain("site holds no subjects".into()));
        }
        let m = subjects as f64;
        Ok(Self {
            weight: GaussianMech::calibrate(2.0 * config.b_g / m, epsilon, delta)?,
            bias: GaussianMech::calibrate(2.0 * config.bias_bound() / m, epsilon, delta)?,
        })
    }

    /// Normalized variances `(τ/Δ)²` of the two releases.
    pub fn sigma_sq(&self) -> [f64; 2] {
        [
            (self.weight.tau / self.weight.sensitivity).powi(2),
            (self.bias.tau / self.bias.sensitivity).powi(2),
        ]
    }
}

/// Optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub w: RealMatrix,
    pub b: RealVector,
    pub rho: f64,
    pub j: usize,
    pub delta_w_norm: f64,
    pub converged: bool,
}

impl TrainState {
    /// `W = I`, `b = 0`.
    pub fn new(r: usize, rho: f64) -> Self {
        Self {
            w: RealMatrix::identity(r, r),
            b: RealVector::zeros(r),
            rho,
            j: 0,
            delta_w_norm: 0.0,
            converged: false,
        }
    }
}

/// One iteration of the history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta_w_norm: f64,
    pub delta_b_norm: f64,
    pub rho: f64,
    pub objective: Option<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaRun {
    pub state: TrainState,
    pub history: Vec<IterationRecord>,
    pub ledger: RdpLedger,
}

/// Aggregated gradient estimate of one iteration.
pub struct Step {
    pub g: RealMatrix,
    pub h: RealVector,
    /// Normalized variances of this iteration's releases, if any.
    pub sigmas_sq: Option<[f64; 2]>,
}

/// Gradient-descent driver shared by all variants.
pub fn train<F>(r: usize, config: &IcaConfig, objective: impl Fn(&TrainState) -> f64, mut step: F) -> Result<IcaRun>
where
    F: FnMut(&TrainState) -> Result<Step>,
{
    config.validate()?;
    let mut state = TrainState::new(r, config.initial_rho(r));
    let mut history = Vec::new();
    let mut ledger = RdpLedger::new();
    while state.j < config.max_iter {
        let iteration = state.j + 1;
        let Step { g, h, sigmas_sq } = step(&state).map_err(|e| match e {
            CapeError::Divergence { reason, .. } => CapeError::Divergence { iteration, reason },
            other => other,
        })?;
        if let Some(s) = sigmas_sq {
            ledger.record(&s);
        }
        let rho = state.rho;
        let mut dw = g * rho;
        let mut norm = dw.norm();
        if norm > config.update_cap {
            dw *= config.update_cap / norm;
            norm = config.update_cap;
            state.rho *= config.rho_decay;
        }
        let db = h * rho;
        state.w += &dw;
        state.b += &db;
        state.j = iteration;
        state.delta_w_norm = norm;
        let w_norm = state.w.norm();
        if !w_norm.is_finite() || w_norm > config.divergence_bound || state.b.iter().any(|v| !v.is_finite()) {
            return Err(CapeError::Divergence {
                iteration,
                reason: format!("‖W‖_F = {w_norm:e} exceeds {:e}", config.divergence_bound),
            });
        }
        history.push(IterationRecord {
            iteration,
            delta_w_norm: norm,
            delta_b_norm: db.norm(),
            rho,
            objective: config.record_objective.then(|| objective(&state)),
        });
        if norm * norm < config.tol {
            state.converged = true;
            break;
        }
    }
    Ok(IcaRun {
        state,
        history,
        ledger,
    })
}

fn check_sites(x_s: &[RealMatrix]) -> Result<usize> {
    let first = x_s
        .first()
        .ok_or_else(|| CapeError::InvalidNetwork("no sites".into()))?;
    let r = first.nrows();
    if x_s.iter().any(|x| x.nrows() != r) {
        return Err(CapeError::ShapeMismatch("sites differ in dimension".into()));
    }
    if x_s.iter().any(|x| x.ncols() != first.ncols()) {
        return Err(CapeError::AsymmetricInput {
            total: x_s.iter().map(|x| x.ncols()).sum(),
            sites: x_s.len(),
        });
    }
    Ok(r)
}

fn site_gradients(state: &TrainState, x_s: &[RealMatrix], config: &IcaConfig) -> Result<Vec<GradientBundle>> {
    x_s.iter()
        .map(|x| infomax_gradients(&state.w, &state.b, x, config.b_g, config.bias_bound()))
        .collect()
}

fn mean_of(bundles: &[GradientBundle]) -> (RealMatrix, RealVector) {
    let s = bundles.len() as f64;
    let mut g = RealMatrix::zeros(bundles[0].g_s.nrows(), bundles[0].g_s.ncols());
    let mut h = RealVector::zeros(bundles[0].h_s.len());
    for b in bundles {
        g += &b.g_s;
        h += &b.h_s;
    }
    (g / s, h / s)
}

/// Averages site values through a CAPE release at local noise `tau`.
pub fn cape_average<R: Rng + ?Sized>(
    values: Vec<Vec<f64>>,
    tau: f64,
    secure: &SecureSum,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sites = values.len();
    let plan = plan_symmetric(sites, sites, tau)?;
    Ok(cape_release(&values, &plan, secure, rng)?.aggregate)
}

/// Decentralized DP Infomax: every site releases its clipped gradients with
/// CAPE noise and the aggregator averages them.
pub fn cape_djica<R: Rng + ?Sized>(
    x_s: &[RealMatrix],
    noise: &GradientNoise,
    config: &IcaConfig,
    secure: &SecureSum,
    rng: &mut R,
) -> Result<IcaRun> {
    let r = check_sites(x_s)?;
    if secure.sites() != x_s.len() {
        return Err(CapeError::ShapeMismatch(format!(
            "secure sum over {} sites for {} data sets",
            secure.sites(),
            x_s.len()
        )));
    }
    let sigmas = noise.sigma_sq();
    train(
        r,
        config,
        |s| infomax_objective_sites(&s.w, &s.b, x_s),
        |state| {
            let bundles = site_gradients(state, x_s, config)?;
            let g_vals = bundles.iter().map(|b| b.g_s.as_slice().to_vec()).collect();
            let h_vals = bundles.iter().map(|b| b.h_s.as_slice().to_vec()).collect();
            let g = cape_average(g_vals, noise.weight.tau, secure, rng)?;
            let h = cape_average(h_vals, noise.bias.tau, secure, rng)?;
            Ok(Step {
                g: RealMatrix::from_vec(r, r, g),
                h: RealVector::from_vec(h),
                sigmas_sq: Some(sigmas),
            })
        },
    )
}

/// Non-private decentralized Infomax: plain average of the site gradients.
pub fn djica_nonprivate(x_s: &[RealMatrix], config: &IcaConfig) -> Result<IcaRun> {
    let r = check_sites(x_s)?;
    train(
        r,
        config,
        |s| infomax_objective_sites(&s.w, &s.b, x_s),
        |state| {
            let (g, h) = mean_of(&site_gradients(state, x_s, config)?);
            Ok(Step { g, h, sigmas_sq: None })
        },
    )
}

/// Single-site DP Infomax with independent Gaussian noise at the full
/// local level.
pub fn local_dp_ica<R: Rng + ?Sized>(
    x: &RealMatrix,
    noise: &GradientNoise,
    config: &IcaConfig,
    rng: &mut R,
) -> Result<IcaRun> {
    let r = x.nrows();
    let sites = std::slice::from_ref(x);
    let sigmas = noise.sigma_sq();
    train(
        r,
        config,
        |s| infomax_objective_sites(&s.w, &s.b, sites),
        |state| {
            let bundle = infomax_gradients(&state.w, &state.b, x, config.b_g, config.bias_bound())?;
            let tg = noise.weight.tau;
            let th = noise.bias.tau;
            let g = bundle.g_s.map(|v| v + tg * rng.sample::<f64, _>(StandardNormal));
            let h = bundle.h_s.map(|v| v + th * rng.sample::<f64, _>(StandardNormal));
            Ok(Step {
                g,
                h,
                sigmas_sq: Some(sigmas),
            })
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::hstack;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laplace_sources(r: usize, n: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
        RealMatrix::from_fn(r, n, |_, _| {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
    }

    fn mixed(r: usize, n: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = laplace_sources(r, n, &mut rng);
        let a = RealMatrix::identity(r, r) + RealMatrix::from_fn(r, r, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        a * s
    }

    fn split(x: &RealMatrix, sites: usize) -> Vec<RealMatrix> {
        let per = x.ncols() / sites;
        (0..sites).map(|s| x.columns(s * per, per).into_owned()).collect()
    }

    fn zero_noise(config: &IcaConfig) -> GradientNoise {
        let mut n = GradientNoise::calibrate(config, 10, 1.0, 0.01).unwrap();
        n.weight.tau = 0.0;
        n.bias.tau = 0.0;
        n
    }

    fn short() -> IcaConfig {
        IcaConfig {
            max_iter: 60,
            rho: Some(0.05),
            record_objective: true,
            ..IcaConfig::default()
        }
    }

    #[test]
    fn noise_free_sites_track_pooled_run() {
        let x = mixed(4, 400, 0);
        let config = short();
        let pooled = djica_nonprivate(std::slice::from_ref(&x), &config).unwrap();
        let sites = split(&x, 4);
        let ss = SecureSum::with_defaults(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cape = cape_djica(&sites, &zero_noise(&config), &config, &ss, &mut rng).unwrap();
        assert_eq!(pooled.history.len(), cape.history.len());
        for (a, b) in pooled.history.iter().zip(&cape.history) {
            assert!((a.delta_w_norm - b.delta_w_norm).abs() < 1e-10);
        }
        assert!((&pooled.state.w - &cape.state.w).amax() < 1e-10);
        assert!((&pooled.state.b - &cape.state.b).amax() < 1e-10);
        let nonpriv = djica_nonprivate(&sites, &config).unwrap();
        assert!((&pooled.state.w - &nonpriv.state.w).amax() < 1e-10);
        assert_eq!(hstack(&sites), x);
    }

    #[test]
    fn single_site_noise_free_is_pooled() {
        let x = mixed(3, 200, 2);
        let config = short();
        let pooled = djica_nonprivate(std::slice::from_ref(&x), &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let local = local_dp_ica(&x, &zero_noise(&config), &config, &mut rng).unwrap();
        assert_eq!(pooled.state.w, local.state.w);
        assert!(local.ledger.iterations() == config.max_iter);
    }

    #[test]
    fn objective_increases_for_small_steps() {
        let x = mixed(3, 300, 4) * 0.5;
        let config = IcaConfig {
            max_iter: 100,
            rho: Some(0.002),
            record_objective: true,
            ..IcaConfig::default()
        };
        let run = djica_nonprivate(&[x], &config).unwrap();
        let objs: Vec<f64> = run.history.iter().map(|h| h.objective.unwrap()).collect();
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn noise_calibration_scales() {
        let config = IcaConfig::default();
        let a = GradientNoise::calibrate(&config, 16, 0.5, 1e-2).unwrap();
        let b = GradientNoise::calibrate(&config, 8, 0.5, 1e-2).unwrap();
        assert!((b.weight.tau / a.weight.tau - 2.0).abs() < 1e-12);
        let expect = 2.0 * 30.0 / 16.0 / 0.5 * (2.0 * 125f64.ln()).sqrt();
        assert!((a.weight.tau - expect).abs() < 1e-12);
        assert!((a.bias.sensitivity - 2.0 * 30f64.sqrt() / 16.0).abs() < 1e-15);
        let [sw, sb] = a.sigma_sq();
        assert!((sw - sb).abs() < 1e-12);
    }

    #[test]
    fn aggregate_gradient_noise_is_pooled_level() {
        let ss = SecureSum::with_defaults(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tau = 2.0;
        let len = 1000;
        let mut sum_sq = 0.0;
        let mut count = 0;
        for _ in 0..100 {
            let agg = cape_average(vec![vec![0.0; len]; 4], tau, &ss, &mut rng).unwrap();
            sum_sq += agg.iter().map(|v| v * v).sum::<f64>();
            count += len;
        }
        let ratio = sum_sq / count as f64 / (tau * tau / 16.0);
        assert!((0.95..1.05).contains(&ratio), "{ratio}");
    }

    #[test]
    fn averaged_noise_shrinks() {
        let ss = SecureSum::with_defaults(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut mean_norm = |n: usize| {
            let mut acc = vec![0.0; 16];
            for _ in 0..n {
                let agg = cape_average(vec![vec![0.0; 16]; 4], 1.0, &ss, &mut rng).unwrap();
                acc.iter_mut().zip(&agg).for_each(|(a, v)| *a += v);
            }
            acc.iter().map(|a| (a / n as f64).powi(2)).sum::<f64>().sqrt()
        };
        let small = mean_norm(100);
        let large = mean_norm(10_000);
        let ratio = small / large;
        assert!((5.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn update_cap_decays_rate() {
        let x = mixed(3, 100, 7) * 50.0;
        let config = IcaConfig {
            max_iter: 5,
            rho: Some(1.0),
            ..IcaConfig::default()
        };
        let run = djica_nonprivate(&[x], &config).unwrap();
        assert!(run.history.iter().all(|h| h.delta_w_norm <= 1.0 + 1e-12));
        assert!(run.state.rho < 1.0);
    }

    #[test]
    fn divergence_detected() {
        let x = mixed(2, 50, 8);
        let config = IcaConfig {
            max_iter: 50,
            divergence_bound: 1.5,
            update_cap: 1e9,
            rho: Some(1.0),
            ..IcaConfig::default()
        };
        assert!(matches!(
            djica_nonprivate(&[x], &config),
            Err(CapeError::Divergence { .. })
        ));
    }

    #[test]
    fn defaults() {
        let c = IcaConfig::default();
        assert!((c.initial_rho(8) - 0.015 / 8f64.ln()).abs() < 1e-15);
        assert!((c.bias_bound() - 30f64.sqrt()).abs() < 1e-15);
        assert!(IcaConfig { b_g: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn stops_at_tolerance() {
        let x = RealMatrix::zeros(2, 10);
        let config = IcaConfig {
            tol: 10.0,
            ..IcaConfig::default()
        };
        let run = djica_nonprivate(&[x], &config).unwrap();
        assert!(run.state.converged);
        assert_eq!(run.state.j, 1);
    }
}
