use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uqnet_core::data::{load_epochset, synthesize_population, EpochSet, PopulationConfig};
use uqnet_core::eval::ExperimentConfig;
use uqnet_core::nn::ArchConfig;
use uqnet_core::rng::derive_tagged;
use uqnet_core::train::{Method, MethodConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// EPOC file, relative paths resolved against the config file.
    Epoc(PathBuf),
    /// Synthetic population; its seed is derived from the run seed.
    Synthetic(PopulationConfig),
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_mc_passes() -> usize {
    uqnet_core::inference::DEFAULT_PASSES
}

fn default_ensemble_size() -> usize {
    uqnet_core::inference::DEFAULT_ENSEMBLE_SIZE
}

fn default_frac() -> f64 {
    0.10
}

fn default_coverage_steps() -> usize {
    20
}

/// A complete run description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_mc_passes")]
    pub mc_passes: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_frac")]
    pub within_frac: f64,
    #[serde(default = "default_frac")]
    pub val_frac: f64,
    #[serde(default = "default_coverage_steps")]
    pub coverage_steps: usize,
    #[serde(default)]
    pub held_out_subjects: Option<Vec<u8>>,
    /// Directory of the config file, for resolving relative data paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).context("invalid run config")?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("methods must not be empty");
        }
        if let DataSource::Synthetic(p) = &self.data {
            p.validate()?;
        }
        self.experiment().validate()?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: MethodConfig {
                arch: self.arch.clone(),
                train: self.train.clone(),
                ensemble_size: self.ensemble_size,
                mc_passes: self.mc_passes,
            },
            within_frac: self.within_frac,
            val_frac: self.val_frac,
            coverage_steps: self.coverage_steps,
            held_out_subjects: self.held_out_subjects.clone(),
        }
    }

    /// Population config with the seed the run actually uses.
    pub fn population(&self) -> Option<PopulationConfig> {
        match &self.data {
            DataSource::Synthetic(p) => Some(PopulationConfig {
                seed: derive_tagged(self.seed, "population", 0),
                ..p.clone()
            }),
            DataSource::Epoc(_) => None,
        }
    }

    pub fn load_data(&self) -> Result<EpochSet> {
        match &self.data {
            DataSource::Epoc(path) => {
                let path = self.base_dir.join(path);
                load_epochset(&path).with_context(|| format!("loading {}", path.display()))
            }
            DataSource::Synthetic(_) => Ok(synthesize_population(&self.population().expect("synthetic"))?),
        }
    }
}
