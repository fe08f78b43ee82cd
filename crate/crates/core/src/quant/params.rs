use serde::{Deserialize, Serialize};

use super::{note_real_op, QuantError};

/// How a real range is mapped onto integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantScheme {
    /// Signed codes, zero point fixed at 0, range `[-qmax, qmax]` used.
    Symmetric,
    /// Signed codes `[-2^(b-1), 2^(b-1)-1]` with a free zero point.
    AsymmetricSigned,
    /// Unsigned codes `[0, 2^b-1]` with a free zero point.
    AsymmetricUnsigned,
}

/// Affine quantization metadata: `real = scale * (code - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub bitwidth: u8,
    pub signed: bool,
}

pub const SUPPORTED_BITWIDTHS: [u8; 3] = [4, 6, 8];

impl QuantParams {
    pub fn new(scale: f64, zero_point: i32, bitwidth: u8, signed: bool) -> Result<Self, QuantError> {
        if !(2..=16).contains(&bitwidth) {
            return Err(QuantError::InvalidBitwidth(bitwidth));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::InvalidScale(scale));
        }
        let qp = Self { scale, zero_point, bitwidth, signed };
        if zero_point < qp.qmin() || zero_point > qp.qmax() {
            return Err(QuantError::ZeroPointOutOfRange { zero_point, bitwidth, signed });
        }
        Ok(qp)
    }

    /// Smallest representable code.
    #[inline]
    pub fn qmin(&self) -> i32 {
        code_range(self.bitwidth, self.signed).0
    }

    /// Largest representable code.
    #[inline]
    pub fn qmax(&self) -> i32 {
        code_range(self.bitwidth, self.signed).1
    }

    #[inline]
    pub fn clamp_code(&self, q: i64) -> i32 {
        q.clamp(self.qmin() as i64, self.qmax() as i64) as i32
    }

    /// Real interval covered by the code range.
    pub fn real_range(&self) -> (f64, f64) {
        (self.scale * (self.qmin() - self.zero_point) as f64, self.scale * (self.qmax() - self.zero_point) as f64)
    }

    /// Quantize one value: `clamp(round_half_away(x / scale) + zp, qmin, qmax)`.
    #[inline]
    pub fn quantize_value(&self, x: f64) -> i32 {
        note_real_op();
        let q = (x / self.scale).round() + self.zero_point as f64;
        q.clamp(self.qmin() as f64, self.qmax() as f64) as i32
    }

    #[inline]
    pub fn dequantize_value(&self, q: i32) -> f64 {
        note_real_op();
        self.scale * (q - self.zero_point) as f64
    }

    /// `dequantize(quantize(x))` without touching the real-op counter; used on
    /// the training path where fake quantization is evaluated per element.
    #[inline]
    pub fn fake_quantize(&self, x: f64) -> f64 {
        let q = ((x / self.scale).round() + self.zero_point as f64).clamp(self.qmin() as f64, self.qmax() as f64);
        self.scale * (q - self.zero_point as f64)
    }

    /// Whether `x` lies inside the clamp window (straight-through estimator mask).
    #[inline]
    pub fn in_range(&self, x: f64) -> bool {
        let (lo, hi) = self.real_range();
        x >= lo - 0.5 * self.scale && x <= hi + 0.5 * self.scale
    }
}

/// Code range for a bitwidth and signedness.
#[inline]
pub fn code_range(bitwidth: u8, signed: bool) -> (i32, i32) {
    if signed {
        (-(1 << (bitwidth - 1)), (1 << (bitwidth - 1)) - 1)
    } else {
        (0, (1 << bitwidth) - 1)
    }
}

/// Derive quantization parameters for the real interval `[min_val, max_val]`.
///
/// The interval is widened to contain zero so real zero maps to an integer code
/// exactly. A fully degenerate range (`min = max = 0`) yields `scale = 1`.
pub fn compute_qparams(
    min_val: f64,
    max_val: f64,
    bitwidth: u8,
    scheme: QuantScheme,
) -> Result<QuantParams, QuantError> {
    note_real_op();
    if !min_val.is_finite() || !max_val.is_finite() || min_val > max_val {
        return Err(QuantError::InvalidRange { min: min_val, max: max_val });
    }
    if !(2..=16).contains(&bitwidth) {
        return Err(QuantError::InvalidBitwidth(bitwidth));
    }
    let lo = min_val.min(0.0);
    let hi = max_val.max(0.0);
    match scheme {
        QuantScheme::Symmetric => {
            let (_, qmax) = code_range(bitwidth, true);
            let bound = lo.abs().max(hi.abs());
            let scale = if bound > 0.0 { bound / qmax as f64 } else { 1.0 };
            QuantParams::new(scale, 0, bitwidth, true)
        }
        QuantScheme::AsymmetricSigned | QuantScheme::AsymmetricUnsigned => {
            let signed = scheme == QuantScheme::AsymmetricSigned;
            let (qmin, qmax) = code_range(bitwidth, signed);
            if hi - lo <= 0.0 {
                return QuantParams::new(1.0, 0, bitwidth, signed);
            }
            let scale = (hi - lo) / (qmax - qmin) as f64;
            let zp = (qmin as f64 - lo / scale).round().clamp(qmin as f64, qmax as f64) as i32;
            QuantParams::new(scale, zp, bitwidth, signed)
        }
    }
}

/// Integer payload plus its quantization metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub data: Vec<i32>,
    pub shape: Vec<usize>,
    pub qparams: QuantParams,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn quantize(x: &[f64], shape: &[usize], qp: &QuantParams) -> QuantizedTensor {
    debug_assert_eq!(shape.iter().product::<usize>(), x.len());
    QuantizedTensor { data: x.iter().map(|&v| qp.quantize_value(v)).collect(), shape: shape.to_vec(), qparams: *qp }
}

pub fn dequantize(q: &QuantizedTensor) -> Vec<f64> {
    q.data.iter().map(|&v| q.qparams.dequantize_value(v)).collect()
}
