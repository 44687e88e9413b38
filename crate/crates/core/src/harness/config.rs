use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::RdpVarianceConvention;
use crate::datagen::{DatasetParams, GarchParams};
use crate::djica::IcaConfig;
use crate::dp_pca::NormPolicy;
use crate::{CapeError, Result};

/// What the experiment does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NoiseDemo,
    DeltaCurves,
    AccountantCompare,
    RunDjica,
    #[default]
    Sweep,
}

/// ICA variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    CapeDjica,
    /// Non-private decentralized Infomax.
    Djica,
    LocalDpIca,
    DpDjica,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::CapeDjica => "cape-djica",
            Algorithm::Djica => "djica",
            Algorithm::LocalDpIca => "local-dp-ica",
            Algorithm::DpDjica => "dp-djica",
        }
    }

    pub fn is_private(&self) -> bool {
        !matches!(self, Algorithm::Djica)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = CapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cape-djica" => Ok(Algorithm::CapeDjica),
            "djica" => Ok(Algorithm::Djica),
            "local-dp-ica" => Ok(Algorithm::LocalDpIca),
            "dp-djica" => Ok(Algorithm::DpDjica),
            other => Err(CapeError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Privacy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacyParams {
    /// Per-iteration `ε` of each gradient release.
    pub epsilon_i: f64,
    pub delta_i: f64,
    /// `δ` at which overall `ε` is reported.
    pub delta_target: f64,
    pub pca_epsilon: f64,
    pub pca_delta: f64,
    pub rdp_convention: RdpVarianceConvention,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        Self {
            epsilon_i: 2.0,
            delta_i: 1e-2,
            delta_target: 1e-5,
            pca_epsilon: 1.0,
            pca_delta: 1e-5,
            rdp_convention: RdpVarianceConvention::default(),
        }
    }
}

/// Preprocessing between PCA and ICA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    /// Rescale the projected data by the released eigenvalues.
    pub whiten: bool,
    /// Eigenvalue floor used when whitening.
    pub eigen_floor: f64,
    pub norm_policy: NormPolicy,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            whiten: true,
            eigen_floor: 1e-6,
            norm_policy: NormPolicy::Clip,
        }
    }
}

/// Grid of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    pub epsilons: Vec<f64>,
    pub subjects: Vec<usize>,
    /// Give the baseline the per-iteration budget that matches the RDP
    /// total of CAPE at the same grid point over `max_iter` iterations.
    pub match_baseline_epsilon: bool,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::CapeDjica],
            epsilons: vec![0.5, 1.0, 2.0, 5.0],
            subjects: vec![64],
            match_baseline_epsilon: true,
        }
    }
}

/// Zero-sum and variance-gain demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseDemoParams {
    pub sites: Vec<usize>,
    pub tau: f64,
    pub trials: usize,
}

impl Default for NoiseDemoParams {
    fn default() -> Self {
        Self {
            sites: vec![4, 10],
            tau: 1.0,
            trials: 100_000,
        }
    }
}

/// `δ`-versus-`τ` comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaCurveParams {
    pub sites: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub points: usize,
    pub samples_per_site: usize,
}

impl Default for DeltaCurveParams {
    fn default() -> Self {
        Self {
            sites: vec![4, 10],
            epsilons: vec![0.1, 0.5],
            tau_min: 0.1,
            tau_max: 10.0,
            points: 50,
            samples_per_site: 100,
        }
    }
}

/// Accountant comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccountantParams {
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub delta_target: f64,
    pub iterations: Vec<u64>,
}

impl Default for AccountantParams {
    fn default() -> Self {
        Self {
            sigma_w_sq: 0.25,
            sigma_b_sq: 0.25,
            delta_target: 1e-5,
            iterations: vec![1, 10, 100, 1000],
        }
    }
}

/// Full experiment description, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetParams,
    pub privacy: PrivacyParams,
    pub ica: IcaConfig,
    pub pipeline: PipelineParams,
    pub sweep: SweepGrid,
    pub noise_demo: NoiseDemoParams,
    pub delta_curves: DeltaCurveParams,
    pub accountant: AccountantParams,
}

/// Desk-scale settings: heavier-tailed sources than the GARCH default and
/// a larger learning rate, so that the non-private baseline separates the
/// sources within 1000 full-batch iterations.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            algorithm: Algorithm::default(),
            seeds: (0..10).collect(),
            output_dir: None,
            dataset: DatasetParams {
                garch: GarchParams {
                    omega: 0.05,
                    alpha1: 0.2,
                    beta1: 0.75,
                },
                ..DatasetParams::default()
            },
            privacy: PrivacyParams::default(),
            ica: IcaConfig {
                rho: Some(0.05),
                ..IcaConfig::default()
            },
            pipeline: PipelineParams::default(),
            sweep: SweepGrid::default(),
            noise_demo: NoiseDemoParams::default(),
            delta_curves: DeltaCurveParams::default(),
            accountant: AccountantParams::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(CapeError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CapeError::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CapeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CapeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CapeError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CapeError::Config("seeds must not be empty".into()));
        }
        self.dataset
            .validate()
            .map_err(|e| CapeError::Config(format!("dataset: {e}")))?;
        self.ica.validate()?;
        let p = &self.privacy;
        positive("privacy.epsilon_i", p.epsilon_i)?;
        positive("privacy.pca_epsilon", p.pca_epsilon)?;
        probability("privacy.delta_i", p.delta_i)?;
        probability("privacy.delta_target", p.delta_target)?;
        probability("privacy.pca_delta", p.pca_delta)?;
        positive("pipeline.eigen_floor", self.pipeline.eigen_floor)?;
        for &e in &self.sweep.epsilons {
            positive("sweep.epsilons", e)?;
        }
        for &m in &self.sweep.subjects {
            if m == 0 || m % self.dataset.sites != 0 {
                return Err(CapeError::Config(format!(
                    "sweep subject count {m} is not a positive multiple of {} sites",
                    self.dataset.sites
                )));
            }
        }
        let n = &self.noise_demo;
        positive("noise_demo.tau", n.tau)?;
        if n.trials < 2 || n.sites.iter().any(|&s| s < 3) {
            return Err(CapeError::Config("noise_demo needs >= 2 trials and >= 3 sites".into()));
        }
        let d = &self.delta_curves;
        positive("delta_curves.tau_min", d.tau_min)?;
        positive("delta_curves.tau_max", d.tau_max)?;
        if d.tau_max < d.tau_min || d.points == 0 || d.samples_per_site == 0 {
            return Err(CapeError::Config("invalid delta_curves grid".into()));
        }
        for &e in &d.epsilons {
            positive("delta_curves.epsilons", e)?;
        }
        if d.sites.iter().any(|&s| s < 3) {
            return Err(CapeError::Config("delta_curves needs >= 3 sites".into()));
        }
        let a = &self.accountant;
        positive("accountant.sigma_w_sq", a.sigma_w_sq)?;
        positive("accountant.sigma_b_sq", a.sigma_b_sq)?;
        probability("accountant.delta_target", a.delta_target)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
