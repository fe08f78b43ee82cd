//! Architecture and hyperparameter types shared by training, the integer
//! engine, the cost model and the search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const INPUT_LENGTHS: [usize; 3] = [6, 12, 24];
pub const WIDTHS: [usize; 8] = [8, 16, 24, 32, 40, 48, 56, 64];
pub const BATCH_SIZES: [usize; 16] = [16, 32, 48, 64, 80, 96, 112, 128, 144, 160, 176, 192, 208, 224, 240, 256];
pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 1e-3;
pub const MAX_EPOCHS: usize = 100;
pub const PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown architecture {0:?} (expected lstm or transformer)")]
    UnknownArch(String),
    #[error("input length {0} not in {{6, 12, 24}}")]
    InputLength(usize),
    #[error("width {0} must be a multiple of 8 in [8, 64]")]
    Width(usize),
    #[error("batch size {0} must be a multiple of 16 in [16, 256]")]
    BatchSize(usize),
    #[error("learning rate {0} outside [1e-5, 1e-3]")]
    LearningRate(f64),
    #[error("bitwidth {0} not in {{4, 6, 8}}")]
    Bits(u8),
    #[error("patience {patience} must be below max epochs {max_epochs}")]
    Patience { patience: usize, max_epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Lstm,
    Transformer,
}

impl Arch {
    pub fn tag(self) -> u8 {
        match self {
            Arch::Lstm => 0,
            Arch::Transformer => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Arch::Lstm),
            1 => Some(Arch::Transformer),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Lstm => "lstm",
            Arch::Transformer => "transformer",
        })
    }
}

impl FromStr for Arch {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Arch::Lstm),
            "transformer" => Ok(Arch::Transformer),
            _ => Err(ConfigError::UnknownArch(s.to_string())),
        }
    }
}

/// Network shape. `width` is `h_size` for the LSTM and `d_model` for the
/// Transformer (whose FFN hidden size is always `4 * d_model`, one head).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetConfig {
    pub arch: Arch,
    pub n: usize,
    pub width: usize,
}

impl NetConfig {
    pub fn lstm(n: usize, h_size: usize) -> Self {
        Self { arch: Arch::Lstm, n, width: h_size }
    }

    pub fn transformer(n: usize, d_model: usize) -> Self {
        Self { arch: Arch::Transformer, n, width: d_model }
    }

    pub fn ffn_hidden(&self) -> usize {
        4 * self.width
    }

    /// Check membership in the searchable grid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !INPUT_LENGTHS.contains(&self.n) {
            return Err(ConfigError::InputLength(self.n));
        }
        if !WIDTHS.contains(&self.width) {
            return Err(ConfigError::Width(self.width));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Fake-quantization bitwidth; `None` trains in floating point.
    pub bits: Option<u8>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 64, lr: 1e-3, max_epochs: MAX_EPOCHS, patience: PATIENCE, seed: 0, bits: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(ConfigError::BatchSize(self.batch_size));
        }
        if !(LR_MIN..=LR_MAX).contains(&self.lr) {
            return Err(ConfigError::LearningRate(self.lr));
        }
        if let Some(b) = self.bits {
            validate_bits(b)?;
        }
        if self.patience >= self.max_epochs {
            return Err(ConfigError::Patience { patience: self.patience, max_epochs: self.max_epochs });
        }
        Ok(())
    }
}

pub fn validate_bits(b: u8) -> Result<(), ConfigError> {
    if crate::quant::SUPPORTED_BITWIDTHS.contains(&b) {
        Ok(())
    } else {
        Err(ConfigError::Bits(b))
    }
}

/// One point of the search space: shape, bitwidth and optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub n: usize,
    pub width: usize,
    pub bits: u8,
    pub batch_size: usize,
    pub lr: f64,
}

impl ModelConfig {
    pub fn net(&self) -> NetConfig {
        NetConfig { arch: self.arch, n: self.n, width: self.width }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { batch_size: self.batch_size, lr: self.lr, seed, bits: Some(self.bits), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.net().validate()?;
        self.train_config(0).validate()
    }
}
