use std::path::Path;

use serde::{Deserialize, Serialize};

use edgecast_core::data::SplitSpec;
use edgecast_core::hw::HardwareBudget;
use edgecast_core::model::{Arch, TrainConfig, BATCH_SIZES, LR_MAX, LR_MIN, WIDTHS};
use edgecast_core::quant::SUPPORTED_BITWIDTHS;
use edgecast_core::search::{NsgaConfig, SearchSpace};

use crate::error::CliError;

/// Search choices; architecture and input length come from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub bits: Vec<u8>,
    pub batch_sizes: Vec<usize>,
    pub widths: Vec<usize>,
    pub lr_min: f64,
    pub lr_max: f64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            bits: SUPPORTED_BITWIDTHS.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            widths: WIDTHS.to_vec(),
            lr_min: LR_MIN,
            lr_max: LR_MAX,
        }
    }
}

impl SpaceConfig {
    pub fn space(&self, arch: Arch, n: usize) -> SearchSpace {
        SearchSpace {
            arch,
            n,
            bits: self.bits.clone(),
            batch_sizes: self.batch_sizes.clone(),
            widths: self.widths.clone(),
            lr_min: self.lr_min,
            lr_max: self.lr_max,
        }
    }
}

/// Every tunable of a run. Missing keys take their defaults; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Hidden size or model dimension for `train`.
    pub width: usize,
    /// Bitwidth for QAT and export.
    pub bits: u8,
    pub split: SplitSpec,
    pub space: SpaceConfig,
    pub search: NsgaConfig,
    pub budget: HardwareBudget,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            width: 16,
            bits: 8,
            split: SplitSpec::default(),
            space: SpaceConfig::default(),
            search: NsgaConfig::default(),
            budget: HardwareBudget::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::from_json(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_documents() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.patience, 10);
        assert_eq!(c.search.trials, 100);
        let c = RunConfig::from_json(r#"{"train": {"lr": 0.0005}, "search": {"trials": 10}}"#).unwrap();
        assert_eq!(c.train.lr, 5e-4);
        assert_eq!(c.train.batch_size, 64);
        assert_eq!(c.search.population, 20);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"epochs": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"learning_rate": 0.1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"budget": {"luts": 1}}"#).is_err());
    }
}
