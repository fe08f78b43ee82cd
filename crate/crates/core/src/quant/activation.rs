//! Integer HardSigmoid / HardTanh.
//!
//! `hard_sigmoid(x) = clamp(x/4 + 1/2, 0, 1)` and `hard_tanh(x) = clamp(x, -1, 1)`.
//! Each kernel folds input scale, slope, offset and output scale into one
//! [`AffineRescale`] so evaluation is a multiply, a rounding shift and a clamp.

use serde::{Deserialize, Serialize};

use super::{AffineRescale, QuantError, QuantParams};

pub const HARD_SIGMOID_SLOPE: f64 = 0.25;

#[inline]
pub fn hard_sigmoid(x: f64) -> f64 {
    (HARD_SIGMOID_SLOPE * x + 0.5).clamp(0.0, 1.0)
}

#[inline]
pub fn hard_sigmoid_grad(x: f64) -> f64 {
    if x > -2.0 && x < 2.0 {
        HARD_SIGMOID_SLOPE
    } else {
        0.0
    }
}

#[inline]
pub fn hard_tanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[inline]
pub fn hard_tanh_grad(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardKind {
    Sigmoid,
    Tanh,
}

/// Precomputed integer kernel for one (input qparams, output qparams) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardActivation {
    kind: HardKind,
    in_zero_point: i32,
    rescale: AffineRescale,
}

impl HardActivation {
    pub fn new(kind: HardKind, input: &QuantParams, output: &QuantParams) -> Result<Self, QuantError> {
        let (slope, offset, lo, hi) = match kind {
            HardKind::Sigmoid => (HARD_SIGMOID_SLOPE, 0.5, 0.0, 1.0),
            HardKind::Tanh => (1.0, 0.0, -1.0, 1.0),
        };
        let ratio = slope * input.scale / output.scale;
        let zp = output.zero_point as i64;
        let code_lo = output.clamp_code(zp + (lo / output.scale).round() as i64);
        let code_hi = output.clamp_code(zp + (hi / output.scale).round() as i64);
        // Zero point is added after rounding, so fold it into the clamp window
        // by shifting the offset by an integer amount (exact).
        let rescale = AffineRescale::new(ratio, offset / output.scale + zp as f64, code_lo, code_hi)?;
        Ok(Self { kind, in_zero_point: input.zero_point, rescale })
    }

    pub fn sigmoid(input: &QuantParams, output: &QuantParams) -> Result<Self, QuantError> {
        Self::new(HardKind::Sigmoid, input, output)
    }

    pub fn tanh(input: &QuantParams, output: &QuantParams) -> Result<Self, QuantError> {
        Self::new(HardKind::Tanh, input, output)
    }

    pub fn kind(&self) -> HardKind {
        self.kind
    }

    #[inline]
    pub fn apply(&self, q: i32) -> i32 {
        self.rescale.apply(q - self.in_zero_point)
    }
}

/// One-shot integer HardSigmoid. Builds the kernel on every call; hot loops
/// should hold a [`HardActivation`] instead.
pub fn int_hard_sigmoid(q: i32, in_qp: &QuantParams, out_qp: &QuantParams) -> Result<i32, QuantError> {
    Ok(HardActivation::sigmoid(in_qp, out_qp)?.apply(q))
}

pub fn int_hard_tanh(q: i32, in_qp: &QuantParams, out_qp: &QuantParams) -> Result<i32, QuantError> {
    Ok(HardActivation::tanh(in_qp, out_qp)?.apply(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{compute_qparams, QuantScheme};

    fn unit_out(bits: u8) -> QuantParams {
        compute_qparams(0.0, 1.0, bits, QuantScheme::AsymmetricUnsigned).unwrap()
    }

    fn tanh_out(bits: u8) -> QuantParams {
        compute_qparams(-1.0, 1.0, bits, QuantScheme::Symmetric).unwrap()
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let input = compute_qparams(-4.0, 4.0, 8, QuantScheme::AsymmetricSigned).unwrap();
        let out = unit_out(8);
        let q = int_hard_sigmoid(input.zero_point, &input, &out).unwrap();
        // 0.5 * 255 = 127.5 rounds away from zero.
        assert_eq!(q, 128);
        assert!((out.dequantize_value(q) - 0.5).abs() <= out.scale);
    }

    #[test]
    fn sigmoid_saturates_at_two() {
        let input = compute_qparams(-4.0, 4.0, 8, QuantScheme::AsymmetricSigned).unwrap();
        let out = unit_out(8);
        for x in [2.0, 2.5, 3.9] {
            let q = input.quantize_value(x);
            assert_eq!(int_hard_sigmoid(q, &input, &out).unwrap(), out.qmax());
        }
        let q = input.quantize_value(-3.0);
        assert_eq!(int_hard_sigmoid(q, &input, &out).unwrap(), 0);
    }

    #[test]
    fn tanh_zero_and_saturation() {
        let input = compute_qparams(-3.0, 3.0, 8, QuantScheme::AsymmetricSigned).unwrap();
        let out = tanh_out(8);
        assert_eq!(int_hard_tanh(input.quantize_value(0.0), &input, &out).unwrap(), 0);
        assert_eq!(int_hard_tanh(input.quantize_value(3.0), &input, &out).unwrap(), 127);
        assert_eq!(int_hard_tanh(input.quantize_value(-3.0), &input, &out).unwrap(), -127);
    }

    #[test]
    fn monotone_in_integer_domain() {
        for bits in [4u8, 6, 8] {
            let input = compute_qparams(-2.7, 3.1, bits, QuantScheme::AsymmetricSigned).unwrap();
            let s = HardActivation::sigmoid(&input, &unit_out(bits)).unwrap();
            let t = HardActivation::tanh(&input, &tanh_out(bits)).unwrap();
            for q in input.qmin()..input.qmax() {
                assert!(s.apply(q) <= s.apply(q + 1));
                assert!(t.apply(q) <= t.apply(q + 1));
            }
        }
    }
}
