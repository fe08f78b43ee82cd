//! Training stack for the two forecasters: forward and backward passes, Adam,
//! floating-point and quantization-aware training.
//!
//! All arithmetic is `f64`. Fake quantization reuses the grids of
//! [`plan::QuantPlan`], the same grids the integer compiler reads.

mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod plan;
mod train;
pub mod transformer;

pub use adam::Adam;
pub use params::{layout, param_count, positional_encoding, Params, Tensor, TensorSpec};
pub use plan::{ActFq, Fq, Observed, QuantPlan, RangeSet};
pub use train::{evaluate, predict_all, qat_train, train, EpochLog, FakeQuant, TrainedModel, QAT_MOMENTUM};

use crate::data::DataError;
use crate::model::{Arch, ConfigError};
use crate::quant::QuantError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("activation range for edge `{0}` was never observed")]
    CalibrationIncomplete(&'static str),
    #[error("window length {got} does not match the model's {want}")]
    WindowLength { got: usize, want: usize },
}

/// Per-architecture scratch state reused across samples.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    lstm: lstm::LstmCache,
    tf: transformer::TransformerCache,
    pe: Vec<f64>,
    pe_key: (usize, usize),
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_pe(&mut self, n: usize, d: usize) {
        if self.pe_key != (n, d) || self.pe.len() != n * d {
            self.pe = positional_encoding(n, d);
            self.pe_key = (n, d);
        }
    }

    /// Piecewise-linear regime of the last forward pass.
    pub(crate) fn signature(&self, arch: Arch) -> Vec<i8> {
        match arch {
            Arch::Lstm => self.lstm.signature(),
            Arch::Transformer => self.tf.signature(),
        }
    }
}

/// One forward pass over flat weights `w` (which may differ from `p.data`,
/// e.g. fake-quantized). `act` enables activation fake quantization and
/// `obs` records raw edge values.
pub fn forward(
    p: &Params,
    w: &[f64],
    act: Option<&ActFq>,
    x: &[f64],
    obs: Option<&mut Observed>,
    ws: &mut Workspace,
) -> f64 {
    match p.net.arch {
        Arch::Lstm => lstm::forward(w, p.net.width, act, x, obs, &mut ws.lstm),
        Arch::Transformer => {
            if p.positional_encoding {
                ws.ensure_pe(x.len(), p.net.width);
            }
            let pe = p.positional_encoding.then_some(&ws.pe[..]);
            transformer::forward(w, &p.net, pe, act, x, obs, &mut ws.tf)
        }
    }
}

/// Accumulate `dL/dw` for the sample of the preceding [`forward`] call.
pub fn backward(p: &Params, w: &[f64], dy: f64, ws: &mut Workspace, grad: &mut [f64]) {
    match p.net.arch {
        Arch::Lstm => lstm::backward(w, &mut ws.lstm, dy, grad),
        Arch::Transformer => transformer::backward(w, &p.net, &mut ws.tf, dy, grad),
    }
}

/// Floating-point prediction for one window.
pub fn predict(p: &Params, x: &[f64]) -> f64 {
    forward(p, &p.data, None, x, None, &mut Workspace::new())
}
