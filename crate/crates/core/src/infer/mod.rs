//! Integer-only execution of compiled models.

mod engine;
mod equivalence;
mod model;
mod softmax;

pub use engine::{run_lstm_int, run_transformer_int, InferenceTrace};
pub use equivalence::{check_equivalence, EquivalenceReport};
pub use model::{compile, compile_plan, expected_shapes, multiplier_names, Grids, IntTensor, IntegerModel};
pub use softmax::{integer_softmax, SoftmaxKernel};

use crate::nn::NnError;
use crate::quant::QuantError;

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("accumulator headroom exceeded in `{tensor}`: worst case {bound}")]
    Headroom { tensor: String, bound: i64 },
    #[error("{0} real-valued operations ran on the integer path")]
    RealOpOnIntegerPath(u64),
    #[error("window length {got} does not match the model's {want}")]
    WindowLength { got: usize, want: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
}
