//! Training configuration file.
//!
//! A TOML file with optional `[model]` and `[train]` tables; missing keys
//! take their defaults and unknown keys are rejected. See `docs/config.md`.

use std::fs;
use std::path::Path;

use evhdr_net::training::TrainConfig;
use evhdr_net::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Phase};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).invalid()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.is_file() {
            return Err(CliError::Invalid(format!("config file not found: {}", path.display())));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate().invalid()?;
        self.train.validate().invalid()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_fill_defaults() {
        let cfg = RunConfig::parse("[train]\nepochs = 3\n[model]\nimplicit_depth = 2\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, TrainConfig::default().learning_rate);
        assert_eq!(cfg.model.implicit_depth, 2);
        assert_eq!(cfg.model.num_scales, 4);
    }

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert!(RunConfig::parse("[train]\nepoch = 3\n").is_err());
        assert!(RunConfig::parse("[model]\nnum_scales = 1\n").is_err());
    }
}
