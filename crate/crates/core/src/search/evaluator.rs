use serde::{Deserialize, Serialize};

use crate::data::Splits;
use crate::hw::{CostModel, HwEstimate};
use crate::model::{Arch, ModelConfig, LR_MAX, LR_MIN};
use crate::nn::qat_train;

/// What one trial measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub val_mse: f64,
    pub hw: HwEstimate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct EvalError(pub String);

impl EvalError {
    pub fn new(e: impl std::fmt::Display) -> Self {
        Self(e.to_string())
    }
}

/// Maps a configuration to objectives and a hardware verdict. Must be
/// deterministic in `(cfg, seed)`.
pub trait Evaluator: Sync {
    fn evaluate(&self, cfg: &ModelConfig, seed: u64) -> Result<Evaluation, EvalError>;
}

impl<F> Evaluator for F
where
    F: Fn(&ModelConfig, u64) -> Result<Evaluation, EvalError> + Sync,
{
    fn evaluate(&self, cfg: &ModelConfig, seed: u64) -> Result<Evaluation, EvalError> {
        self(cfg, seed)
    }
}

/// Quantization-aware training from scratch; the objective is the best
/// validation MSE of the run.
pub struct TrainingEvaluator<'a> {
    pub data: &'a Splits,
    pub cost: CostModel,
    pub max_epochs: usize,
    pub patience: usize,
}

impl<'a> TrainingEvaluator<'a> {
    pub fn new(data: &'a Splits) -> Self {
        let defaults = crate::model::TrainConfig::default();
        Self {
            data,
            cost: CostModel::calibrated().clone(),
            max_epochs: defaults.max_epochs,
            patience: defaults.patience,
        }
    }
}

impl Evaluator for TrainingEvaluator<'_> {
    fn evaluate(&self, cfg: &ModelConfig, seed: u64) -> Result<Evaluation, EvalError> {
        let hw = self.cost.estimate(&cfg.net(), cfg.bits).map_err(EvalError::new)?;
        let mut tc = cfg.train_config(seed);
        tc.max_epochs = self.max_epochs;
        tc.patience = self.patience;
        let model = qat_train(cfg.net(), &tc, &self.data.train, &self.data.val, None).map_err(EvalError::new)?;
        Ok(Evaluation { val_mse: model.best_val_mse, hw })
    }
}

/// Closed-form stand-in for training: a smooth error surface over width,
/// bitwidth, batch size and learning rate, paired with the real cost model.
/// The learning rate is bucketed to a 0.1 decade grid so the whole space is
/// enumerable.
pub struct SurrogateEvaluator {
    pub cost: CostModel,
}

impl Default for SurrogateEvaluator {
    fn default() -> Self {
        Self { cost: CostModel::calibrated().clone() }
    }
}

impl SurrogateEvaluator {
    pub const LR_BUCKETS: usize = 21;

    pub fn bucket_log_lr(lr: f64) -> f64 {
        (lr.log10() * 10.0).round() / 10.0
    }

    /// Learning rates at every bucket centre of `[1e-5, 1e-3]`.
    pub fn lr_grid() -> Vec<f64> {
        (0..Self::LR_BUCKETS).map(|i| 10f64.powf(-5.0 + i as f64 / 10.0).clamp(LR_MIN, LR_MAX)).collect()
    }

    pub fn val_mse(cfg: &ModelConfig) -> f64 {
        let w = cfg.width as f64;
        let capacity = 0.02 + 0.06 * (8.0 / w).powf(0.7);
        let quant = 0.4 * 2f64.powf(-1.5 * cfg.bits as f64);
        let best_lr = -3.7 + 0.5 * (cfg.batch_size as f64 / 16.0).log10();
        let lr = 0.008 * (Self::bucket_log_lr(cfg.lr) - best_lr).powi(2);
        let batch = 0.0005 * cfg.batch_size as f64 / 256.0;
        let context = 1.0 + 0.1 * (6.0 / cfg.n as f64);
        let arch = if cfg.arch == Arch::Transformer { 0.95 } else { 1.0 };
        arch * context * (capacity + quant + lr + batch)
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, cfg: &ModelConfig, _seed: u64) -> Result<Evaluation, EvalError> {
        let hw = self.cost.estimate(&cfg.net(), cfg.bits).map_err(EvalError::new)?;
        Ok(Evaluation { val_mse: Self::val_mse(cfg), hw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(width: usize, bits: u8, batch_size: usize, lr: f64) -> ModelConfig {
        ModelConfig { arch: Arch::Lstm, n: 12, width, bits, batch_size, lr }
    }

    #[test]
    fn surrogate_shape() {
        let m = SurrogateEvaluator::val_mse;
        assert!(m(&cfg(64, 8, 64, 3e-4)) < m(&cfg(8, 8, 64, 3e-4)));
        assert!(m(&cfg(32, 8, 64, 3e-4)) < m(&cfg(32, 4, 64, 3e-4)));
        assert!(m(&cfg(32, 8, 64, 3e-4)) < m(&cfg(32, 8, 64, 1e-5)));
        assert_eq!(m(&cfg(32, 8, 64, 3.0e-4)), m(&cfg(32, 8, 64, 3.1e-4)));
    }

    #[test]
    fn lr_grid_spans_range() {
        let g = SurrogateEvaluator::lr_grid();
        assert_eq!(g.len(), 21);
        assert!((g[0] - 1e-5).abs() < 1e-18 && (g[20] - 1e-3).abs() < 1e-15);
    }
}
