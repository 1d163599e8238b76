//! Experiment configuration: a flat, human-editable TOML document with one
//! nested `[learner]` table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, InrNormalization, Scenario, SeparationReference};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV_VAR: &str = "FDXBL_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub carrier_hz: f64,
    /// Element spacing in wavelengths.
    pub element_spacing_wavelengths: f64,
    /// Separation between the two arrays in wavelengths.
    pub array_separation_wavelengths: f64,
    pub separation_ref: SeparationReference,
    /// How the peak-INR target pins the self-interference gain.
    pub inr_normalization: InrNormalization,
    pub snr_max_db: f64,
    pub inr_max_db: f64,
    /// Rician factors to sweep (dB).
    pub kappa_db: Vec<f64>,
    /// Rician factor for the CDF experiment (dB).
    pub cdf_kappa_db: f64,
    /// dB-domain measurement noise variance.
    pub sigma2: f64,
    /// Probing horizons to train/evaluate.
    pub horizons: Vec<usize>,
    pub n_eval_pairs: usize,
    /// Training seeds; evaluation reports one run per seed.
    pub seeds: Vec<u64>,
    /// Base seed for evaluation channel/noise streams.
    pub eval_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            carrier_hz: 28e9,
            element_spacing_wavelengths: 0.5,
            array_separation_wavelengths: 10.0,
            separation_ref: SeparationReference::CenterToCenter,
            inr_normalization: InrNormalization::FrobeniusCeiling,
            snr_max_db: 10.0,
            inr_max_db: 40.0,
            kappa_db: vec![-13.0, -3.0, 3.0, 7.0, 17.0],
            cdf_kappa_db: 7.0,
            sigma2: 0.4,
            horizons: vec![3, 4, 5, 10],
            n_eval_pairs: 1000,
            seeds: vec![0],
            eval_seed: 0x5eed,
            output_dir: None,
            checkpoint_dir: None,
            learner: LearnerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // The learner block inherits the experiment geometry; horizon and
        // seed are set per training run.
        config.learner.n_tx = config.n_tx;
        config.learner.n_rx = config.n_rx;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_eval_pairs == 0 {
            return Err(Error::Config("n_eval_pairs must be >= 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons must be nonempty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be >= 1".into()));
        }
        if self.kappa_db.is_empty() {
            return Err(Error::Config("kappa_db must be nonempty".into()));
        }
        if self.kappa_db.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("kappa_db entries must be finite".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config("sigma2 must be finite and >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.learner.n_tx != self.n_tx || self.learner.n_rx != self.n_rx {
            return Err(Error::Config(
                "learner antenna counts must match the experiment geometry".into(),
            ));
        }
        self.geometry()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let lambda = crate::channel::SPEED_OF_LIGHT / self.carrier_hz;
        ArrayGeometry::new(
            self.n_tx,
            self.n_rx,
            lambda,
            self.element_spacing_wavelengths * lambda,
            self.array_separation_wavelengths * lambda,
            self.separation_ref,
        )
    }

    pub fn scenario(&self, kappa_db: f64) -> Result<Scenario> {
        Scenario::new(
            self.geometry()?,
            kappa_db,
            self.snr_max_db,
            self.inr_max_db,
            self.inr_normalization,
        )
    }

    /// Learner config for one `(horizon, seed)` training run.
    pub fn learner_for(&self, horizon: usize, seed: u64) -> LearnerConfig {
        LearnerConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            horizon,
            seed,
            ..self.learner.clone()
        }
    }

    /// Output directory resolution: explicit flag, then config, then the
    /// `FDXBL_OUT` environment variable, then the current directory.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        if let Ok(p) = std::env::var(OUT_ENV_VAR) {
            if !p.is_empty() {
                return PathBuf::from(p);
            }
        }
        PathBuf::from(".")
    }

    /// Checkpoint directory: explicit config entry, else the output dir.
    pub fn resolve_checkpoint_dir(&self, out_flag: Option<&Path>) -> PathBuf {
        if let Some(p) = &self.checkpoint_dir {
            return p.clone();
        }
        self.resolve_output_dir(out_flag)
    }
}

/// Canonical checkpoint filename for a `(horizon, kappa, seed)` point.
pub fn checkpoint_filename(horizon: usize, kappa_db: f64, seed: u64) -> String {
    format!("learner_t{horizon}_k{kappa_db}_s{seed}.ckpt.json")
}
