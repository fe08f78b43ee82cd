use serde::{Deserialize, Serialize};

use super::{InferError, IntegerModel};
use crate::data::WindowedDataset;
use crate::nn::{forward, TrainedModel, Workspace};

/// Agreement between the integer engine and the fake-quantized forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub within_one_step: usize,
    pub fraction: f64,
    /// Largest deviation in output quantization steps.
    pub max_dev_steps: f64,
    pub max_abs_dev: f64,
    pub step: f64,
}

pub fn check_equivalence(
    trained: &TrainedModel,
    model: &IntegerModel,
    ds: &WindowedDataset,
) -> Result<EquivalenceReport, InferError> {
    let fq = trained.fake_quant(model.bits)?;
    let step = model.output_qp().scale;
    let mut ws = Workspace::new();
    let (mut within, mut max_abs) = (0, 0.0f64);
    for i in 0..ds.len() {
        let x = ds.row(i);
        let a = model.predict(x)?;
        let b = forward(&trained.params, &fq.weights, Some(&fq.act), x, None, &mut ws);
        let dev = (a - b).abs();
        // Relative margin for floating-point noise in the fake-quantized path.
        if dev <= step * (1.0 + 1e-9) {
            within += 1;
        }
        max_abs = max_abs.max(dev);
    }
    let samples = ds.len();
    Ok(EquivalenceReport {
        samples,
        within_one_step: within,
        fraction: if samples == 0 { 1.0 } else { within as f64 / samples as f64 },
        max_dev_steps: max_abs / step,
        max_abs_dev: max_abs,
        step,
    })
}
