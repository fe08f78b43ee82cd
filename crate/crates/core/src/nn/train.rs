use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{edge_names, ActFq, Observed, QuantPlan, RangeSet};
use super::{backward, forward, Adam, NnError, Params, Workspace};
use crate::data::{mse, WindowedDataset};
use crate::model::{validate_bits, NetConfig, TrainConfig};

/// Momentum of the running activation-range average during QAT. One update
/// per epoch, from the extremes of that whole pass.
pub const QAT_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Result of training: the best-validation checkpoint plus calibrated ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: Params,
    /// Bitwidth the model was fake-quantized at during training, if any.
    pub bits: Option<u8>,
    /// Activation ranges covering the final calibration pass.
    pub ranges: RangeSet,
    pub best_val_mse: f64,
    /// Epoch (1-based) of the returned checkpoint.
    pub best_epoch: usize,
    /// Epochs actually run.
    pub epochs: usize,
    pub history: Vec<EpochLog>,
}

/// A fake-quantized view of a model: activation quantizers and on-grid weights.
#[derive(Debug, Clone)]
pub struct FakeQuant {
    pub act: ActFq,
    pub weights: Vec<f64>,
}

impl TrainedModel {
    /// Wrap parameters as they are, with ranges from one floating-point pass over `calib`.
    pub fn calibrated(params: Params, calib: &WindowedDataset) -> Self {
        let mut ranges = RangeSet::empty(params.net.arch);
        ranges.union(&observe(&params, &params.data, None, calib));
        Self { params, bits: None, ranges, best_val_mse: f64::INFINITY, best_epoch: 0, epochs: 0, history: Vec::new() }
    }

    pub fn net(&self) -> NetConfig {
        self.params.net
    }

    pub fn plan(&self, bits: u8) -> Result<QuantPlan, NnError> {
        validate_bits(bits)?;
        let ranges = complete_ranges(&self.ranges)?;
        Ok(QuantPlan::derive(&self.params, bits, &ranges)?)
    }

    pub fn fake_quant(&self, bits: u8) -> Result<FakeQuant, NnError> {
        let plan = self.plan(bits)?;
        Ok(FakeQuant { weights: plan.quantize_params(&self.params), act: ActFq::new(&plan) })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        super::predict(&self.params, x)
    }

    /// Floating-point predictions (`bits = None`) or fake-quantized ones.
    pub fn predict_all(&self, ds: &WindowedDataset, bits: Option<u8>) -> Result<Vec<f64>, NnError> {
        Ok(match bits {
            None => predict_all(&self.params, &self.params.data, None, ds),
            Some(b) => {
                let fq = self.fake_quant(b)?;
                predict_all(&self.params, &fq.weights, Some(&fq.act), ds)
            }
        })
    }

    pub fn evaluate(&self, ds: &WindowedDataset, bits: Option<u8>) -> Result<f64, NnError> {
        Ok(mse(&self.predict_all(ds, bits)?, &ds.targets)?)
    }
}

fn complete_ranges(r: &RangeSet) -> Result<Vec<(f64, f64)>, NnError> {
    r.complete().ok_or_else(|| {
        let arch_names = if r.ranges.len() == edge_names(crate::model::Arch::Lstm).len() {
            edge_names(crate::model::Arch::Lstm)
        } else {
            edge_names(crate::model::Arch::Transformer)
        };
        let i = r.ranges.iter().position(Option::is_none).unwrap_or(0);
        NnError::CalibrationIncomplete(arch_names[i])
    })
}

pub fn predict_all(p: &Params, w: &[f64], act: Option<&ActFq>, ds: &WindowedDataset) -> Vec<f64> {
    let mut ws = Workspace::new();
    (0..ds.len()).map(|i| forward(p, w, act, ds.row(i), None, &mut ws)).collect()
}

pub fn evaluate(p: &Params, w: &[f64], act: Option<&ActFq>, ds: &WindowedDataset) -> Result<f64, NnError> {
    Ok(mse(&predict_all(p, w, act, ds), &ds.targets)?)
}

/// Raw edge ranges over `ds`, evaluated under `act` (or in floating point).
fn observe(p: &Params, w: &[f64], act: Option<&ActFq>, ds: &WindowedDataset) -> Observed {
    let mut ws = Workspace::new();
    let mut obs = Observed::new(p.net.arch);
    for i in 0..ds.len() {
        forward(p, w, act, ds.row(i), Some(&mut obs), &mut ws);
    }
    obs
}

fn check_inputs(
    net: &NetConfig,
    cfg: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<(), NnError> {
    cfg.validate()?;
    for ds in [train, val] {
        if ds.n != net.n {
            return Err(NnError::WindowLength { got: ds.n, want: net.n });
        }
        if ds.is_empty() {
            return Err(crate::data::DataError::EmptySegment(if std::ptr::eq(ds, train) {
                "train"
            } else {
                "validation"
            })
            .into());
        }
    }
    Ok(())
}

/// Floating-point training with Adam and early stopping. Activation ranges of
/// the returned model come from one pass over the training set.
pub fn train(
    net: NetConfig,
    cfg: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<TrainedModel, NnError> {
    check_inputs(&net, cfg, train, val)?;
    let mut model = fit(Params::init(net, cfg.seed), None, cfg, train, val)?;
    let obs = observe(&model.params, &model.params.data, None, train);
    model.ranges = RangeSet::empty(net.arch);
    model.ranges.union(&obs);
    Ok(model)
}

/// Quantization-aware training at `cfg.bits`. Starts from `init` when given
/// (weights and ranges), otherwise from a fresh initialization.
pub fn qat_train(
    net: NetConfig,
    cfg: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
    init: Option<&TrainedModel>,
) -> Result<TrainedModel, NnError> {
    check_inputs(&net, cfg, train, val)?;
    let bits = cfg.bits.ok_or(crate::model::ConfigError::Bits(0))?;
    let (params, ranges) = match init {
        Some(m) => (m.params.clone(), m.ranges.clone()),
        None => (Params::init(net, cfg.seed), RangeSet::empty(net.arch)),
    };
    let mut model = fit(params, Some((bits, ranges)), cfg, train, val)?;
    // Final calibration with ranges frozen: widen to everything the
    // checkpoint produces on the training set.
    let fq = model.fake_quant(bits)?;
    let obs = observe(&model.params, &fq.weights, Some(&fq.act), train);
    model.ranges.union(&obs);
    Ok(model)
}

fn fit(
    mut params: Params,
    qat: Option<(u8, RangeSet)>,
    cfg: &TrainConfig,
    train: &WindowedDataset,
    val: &WindowedDataset,
) -> Result<TrainedModel, NnError> {
    let arch = params.net.arch;
    let bits = qat.as_ref().map(|q| q.0);
    let mut ranges = qat.map_or_else(|| RangeSet::empty(arch), |q| q.1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a11);
    let mut adam = Adam::new(params.data.len(), cfg.lr);
    let mut grad = vec![0.0; params.data.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut ws = Workspace::new();
    let mut best: Option<(f64, Params, RangeSet, usize)> = None;
    let mut history = Vec::new();
    let mut stale = 0;

    let quantized = |params: &Params, ranges: &RangeSet| -> Result<Option<(ActFq, Vec<f64>)>, NnError> {
        match (bits, ranges.complete()) {
            (Some(b), Some(r)) => {
                let plan = QuantPlan::derive(params, b, &r)?;
                Ok(Some((ActFq::new(&plan), plan.quantize_params(params))))
            }
            _ => Ok(None),
        }
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sq = 0.0;
        let mut epoch_obs = Observed::new(arch);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let fq = quantized(&params, &ranges)?;
            let (act, w) = match &fq {
                Some((a, w)) => (Some(a), &w[..]),
                None => (None, &params.data[..]),
            };
            let mut obs = bits.map(|_| Observed::new(arch));
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let y = forward(&params, w, act, train.row(i), obs.as_mut(), &mut ws);
                let err = y - train.targets[i];
                sq += err * err;
                backward(&params, w, scale * err, &mut ws, &mut grad);
            }
            if !sq.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::Divergence { epoch });
            }
            adam.step(&mut params.data, &grad);
            if let Some(o) = &obs {
                // Until every edge has been seen once, batches seed the ranges.
                if ranges.is_complete() {
                    epoch_obs.merge(o);
                } else {
                    ranges.ema_update(o, QAT_MOMENTUM);
                }
            }
        }
        if bits.is_some() {
            ranges.ema_update(&epoch_obs, QAT_MOMENTUM);
        }
        let train_mse = sq / train.len() as f64;
        let val_mse = match quantized(&params, &ranges)? {
            Some((a, w)) => evaluate(&params, &w, Some(&a), val)?,
            None => evaluate(&params, &params.data, None, val)?,
        };
        if !val_mse.is_finite() || !params.is_finite() {
            return Err(NnError::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:.6}");
        history.push(EpochLog { epoch, train_mse, val_mse });
        if best.as_ref().is_none_or(|b| val_mse < b.0) {
            best = Some((val_mse, params.clone(), ranges.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let epochs = history.len();
    let (best_val_mse, params, ranges, best_epoch) = best.expect("at least one epoch");
    Ok(TrainedModel { params, bits, ranges, best_val_mse, best_epoch, epochs, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, sine};

    fn sine_split(n: usize, hours: usize) -> (WindowedDataset, WindowedDataset, WindowedDataset) {
        let s = sine(hours, 24.0, 2.0, 3.0);
        let z: Vec<f64> = s.levels.iter().map(|v| (v - 3.0) / 2.0f64.sqrt()).collect();
        let ds = make_windows(&z, n).unwrap();
        let a = ds.len() * 6 / 10;
        let b = ds.len() * 8 / 10;
        (ds.slice(0..a), ds.slice(a..b), ds.slice(b..ds.len()))
    }

    fn cfg(lr: f64, seed: u64) -> TrainConfig {
        TrainConfig { batch_size: 16, lr, seed, ..Default::default() }
    }

    #[test]
    fn learns_a_constant() {
        let mut ds = make_windows(&(0..400).map(|t| (t as f64 * 0.37).sin()).collect::<Vec<_>>(), 6).unwrap();
        ds.targets.fill(0.5);
        let (tr, va) = (ds.slice(0..300), ds.slice(300..ds.len()));
        let c = TrainConfig { max_epochs: 50, ..cfg(1e-3, 3) };
        let m = train(NetConfig::lstm(6, 8), &c, &tr, &va).unwrap();
        assert!(m.best_val_mse < 1e-4, "{}", m.best_val_mse);
    }

    #[test]
    fn sine_lstm_fits() {
        let (tr, va, te) = sine_split(12, 1200);
        let m = train(NetConfig::lstm(12, 16), &cfg(1e-3, 1), &tr, &va).unwrap();
        let test = m.evaluate(&te, None).unwrap();
        assert!(test <= 1e-3, "{test}");
    }

    #[test]
    fn early_stop_returns_best_checkpoint() {
        // Noise targets: validation plateaus almost at once.
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..600).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ds = make_windows(&xs, 6).unwrap();
        let (tr, va) = (ds.slice(0..400), ds.slice(400..ds.len()));
        let m = train(NetConfig::lstm(6, 8), &cfg(1e-3, 5), &tr, &va).unwrap();
        assert!(m.epochs < 100);
        let min = m.history.iter().map(|h| h.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(m.best_val_mse, min);
        assert_eq!(m.history[m.best_epoch - 1].val_mse, min);
        assert_eq!(m.evaluate(&va, None).unwrap(), min);
    }

    #[test]
    fn training_is_deterministic() {
        let (tr, va, _) = sine_split(6, 300);
        let net = NetConfig::transformer(6, 8);
        let c = TrainConfig { max_epochs: 3, patience: 2, ..cfg(1e-3, 9) };
        let a = train(net, &c, &tr, &va).unwrap();
        let b = train(net, &c, &tr, &va).unwrap();
        assert_eq!(a.params.data, b.params.data);
        let c8 = TrainConfig { bits: Some(6), ..c };
        let qa = qat_train(net, &c8, &tr, &va, Some(&a)).unwrap();
        let qb = qat_train(net, &c8, &tr, &va, Some(&b)).unwrap();
        assert_eq!(qa, qb);
    }

    #[test]
    fn nan_input_reports_divergence_epoch() {
        let (mut tr, va, _) = sine_split(6, 300);
        tr.inputs[3] = f64::NAN;
        let err = train(NetConfig::lstm(6, 8), &cfg(1e-3, 1), &tr, &va).unwrap_err();
        assert!(matches!(err, NnError::Divergence { epoch: 1 }), "{err}");
    }

    #[test]
    fn qat_from_scratch_fills_ranges() {
        let (tr, va, _) = sine_split(6, 300);
        let c = TrainConfig { max_epochs: 2, patience: 1, bits: Some(8), ..cfg(1e-3, 2) };
        let m = qat_train(NetConfig::lstm(6, 8), &c, &tr, &va, None).unwrap();
        assert!(m.ranges.is_complete());
        assert!(m.evaluate(&va, Some(8)).unwrap().is_finite());
    }
}
