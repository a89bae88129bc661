use std::fs;
use std::path::Path;

use cfisac_core::baselines::BaselineOptions;
use cfisac_core::training::{Seeds, TrainConfig};
use cfisac_core::SystemConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contents of a run configuration file (TOML).
///
/// ```toml
/// [system]            # optional; otherwise taken from the dataset
/// num_aps = 2
/// antennas_per_ap = 16
///
/// [training]
/// max_epochs = 1000
/// batch_size = 500
///
/// [seeds]
/// data = 1
/// init = 2
/// shuffle = 3
///
/// [baseline]
/// rho = 0.5
/// ```
///
/// Every table and key is optional; missing keys take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemConfig>,
    pub training: TrainConfig,
    pub seeds: Seeds,
    pub baseline: BaselineOptions,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Fills in the system from `found` if none was configured, otherwise
    /// checks that the two agree.
    pub fn resolve_system(&mut self, found: &SystemConfig, what: &str) -> Result<(), CliError> {
        match &self.system {
            Some(s) => s.ensure_matches(found, what)?,
            None => self.system = Some(found.clone()),
        }
        Ok(())
    }
}

/// Command-line overrides; they take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Overrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        let t = &mut config.training;
        let s = &mut config.seeds;
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.initial_lr = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.lambda0 {
            t.lambda0 = v;
        }
        if let Some(v) = self.epsilon {
            t.epsilon = v;
        }
        if let Some(v) = self.data_seed {
            s.data = v;
        }
        if let Some(v) = self.init_seed {
            s.init = v;
        }
        if let Some(v) = self.shuffle_seed {
            s.shuffle = v;
        }
    }
}
