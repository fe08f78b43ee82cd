//! Affine integer quantization shared by fake quantization during training and
//! the integer-only inference engine.
//!
//! All rounding is half-away-from-zero. Weights use [`QuantScheme::Symmetric`],
//! activations asymmetric codes, biases 32-bit codes at `input_scale * weight_scale`.

mod activation;
mod fixed_point;
mod params;

use std::cell::Cell;

pub use activation::{
    hard_sigmoid, hard_sigmoid_grad, hard_tanh, hard_tanh_grad, int_hard_sigmoid, int_hard_tanh, HardActivation,
    HardKind, HARD_SIGMOID_SLOPE,
};
pub use fixed_point::{
    requantize, requantize_sum, rounding_shift, AffineRescale, FixedPointMultiplier, MAX_RIGHT_SHIFT,
};
pub use params::{
    code_range, compute_qparams, dequantize, quantize, QuantParams, QuantScheme, QuantizedTensor, SUPPORTED_BITWIDTHS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("invalid quantization range [{min}, {max}]")]
    InvalidRange { min: f64, max: f64 },
    #[error("unsupported bitwidth {0}")]
    InvalidBitwidth(u8),
    #[error("scale must be finite and positive, got {0}")]
    InvalidScale(f64),
    #[error("zero point {zero_point} outside {bitwidth}-bit {} code range", if *.signed { "signed" } else { "unsigned" })]
    ZeroPointOutOfRange { zero_point: i32, bitwidth: u8, signed: bool },
    #[error("multiplier {0} not representable as a fixed-point ratio in (0, 1)")]
    MultiplierOutOfRange(f64),
    #[error("multiplier {0} is below the smallest representable ratio")]
    MultiplierUnderflow(f64),
}

thread_local! {
    static REAL_OPS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn note_real_op() {
    REAL_OPS.with(|c| c.set(c.get().wrapping_add(1)));
}

/// Number of real-valued quantization helpers executed on this thread.
///
/// The integer engine snapshots this counter around a forward pass; any change
/// means a floating-point operation leaked onto the integer path.
pub fn real_op_count() -> u64 {
    REAL_OPS.with(|c| c.get())
}
