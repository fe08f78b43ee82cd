//! Fixed-point rescaling used between integer layers.
//!
//! A multiplier `M = mantissa * 2^-(31 + right_shift)` with a 31-bit
//! normalized mantissa replaces every real-valued scale ratio on the
//! inference path. MAC accumulators are `i32`; the mantissa product is formed
//! in a wide register before the rounding shift, as a DSP post-adder would.

use serde::{Deserialize, Serialize};

use super::{note_real_op, QuantError, QuantParams};

const MANTISSA_MIN: i64 = 1 << 30;
const MANTISSA_LIMIT: i64 = 1 << 31;
/// Largest right shift; keeps `|acc| * mantissa + half` inside `i64`.
pub const MAX_RIGHT_SHIFT: u8 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointMultiplier {
    pub mantissa: i32,
    pub right_shift: u8,
}

impl FixedPointMultiplier {
    /// Encode a real ratio in `(0, 1)`.
    pub fn from_real(m: f64) -> Result<Self, QuantError> {
        note_real_op();
        if !(m.is_finite() && m > 0.0 && m < 1.0) {
            return Err(QuantError::MultiplierOutOfRange(m));
        }
        // Normalize into [0.5, 1); exact in binary floating point.
        let mut frac = m;
        let mut shift: i32 = 0;
        while frac < 0.5 {
            frac *= 2.0;
            shift += 1;
        }
        let mut mantissa = (frac * MANTISSA_LIMIT as f64).round() as i64;
        if mantissa == MANTISSA_LIMIT {
            mantissa /= 2;
            shift -= 1;
        }
        if shift < 0 {
            return Err(QuantError::MultiplierOutOfRange(m));
        }
        if shift > MAX_RIGHT_SHIFT as i32 {
            return Err(QuantError::MultiplierUnderflow(m));
        }
        debug_assert!((MANTISSA_MIN..MANTISSA_LIMIT).contains(&mantissa));
        Ok(Self { mantissa: mantissa as i32, right_shift: shift as u8 })
    }

    /// The represented real value.
    pub fn to_real(self) -> f64 {
        self.mantissa as f64 * 2f64.powi(-(31 + self.right_shift as i32))
    }

    #[inline]
    fn total_shift(self) -> u32 {
        31 + self.right_shift as u32
    }

    /// `round_half_away(acc * M)` without clamping or zero point.
    #[inline]
    pub fn apply(self, acc: i32) -> i64 {
        rounding_shift(acc as i64 * self.mantissa as i64, self.total_shift())
    }
}

/// Arithmetic right shift with round-half-away-from-zero.
#[inline]
pub fn rounding_shift(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let half = 1i64 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

#[inline]
fn rounding_shift_wide(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let half = 1i128 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

/// `clamp(round_half_away(acc * M) + out.zero_point, qmin, qmax)`.
#[inline]
pub fn requantize(acc: i32, m: FixedPointMultiplier, out: &QuantParams) -> i32 {
    out.clamp_code(m.apply(acc) + out.zero_point as i64)
}

/// Two accumulators at different scales rescaled into one output code with a
/// single rounding: `clamp(round(a*Ma + b*Mb) + zp)`.
#[inline]
pub fn requantize_sum(a: i32, ma: FixedPointMultiplier, b: i32, mb: FixedPointMultiplier, out: &QuantParams) -> i32 {
    let (sa, sb) = (ma.total_shift(), mb.total_shift());
    let shift = sa.max(sb);
    let ta = (a as i128 * ma.mantissa as i128) << (shift - sa);
    let tb = (b as i128 * mb.mantissa as i128) << (shift - sb);
    let r = rounding_shift_wide(ta + tb, shift);
    out.clamp_code(r.clamp(i64::MIN as i128, i64::MAX as i128) as i64 + out.zero_point as i64)
}

/// `clamp(round_half_away(v * R + O), lo, hi)` for a real slope `R` and offset
/// `O` fixed at construction; the evaluation is integer-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineRescale {
    mantissa: i64,
    shift: u32,
    offset: i128,
    lo: i32,
    hi: i32,
}

impl AffineRescale {
    const MAX_SHIFT: u32 = 80;

    pub fn new(slope: f64, offset: f64, lo: i32, hi: i32) -> Result<Self, QuantError> {
        note_real_op();
        if !(slope.is_finite() && slope > 0.0) {
            return Err(QuantError::MultiplierOutOfRange(slope));
        }
        if !offset.is_finite() {
            return Err(QuantError::MultiplierOutOfRange(offset));
        }
        // mantissa in [2^30, 2^31) with slope = mantissa * 2^-shift.
        let mut frac = slope;
        let mut exp: i32 = 0;
        while frac >= 1.0 {
            frac /= 2.0;
            exp += 1;
        }
        while frac < 0.5 {
            frac *= 2.0;
            exp -= 1;
        }
        let shift = 31 - exp;
        if shift < 0 || shift as u32 > Self::MAX_SHIFT {
            return Err(QuantError::MultiplierOutOfRange(slope));
        }
        let shift = shift as u32;
        let mantissa = (frac * MANTISSA_LIMIT as f64).round() as i64;
        let offset_fx = (offset * 2f64.powi(shift as i32)).round() as i128;
        Ok(Self { mantissa, shift, offset: offset_fx, lo, hi })
    }

    #[inline]
    pub fn apply(&self, v: i32) -> i32 {
        let t = v as i128 * self.mantissa as i128 + self.offset;
        let r = rounding_shift_wide(t, self.shift);
        r.clamp(self.lo as i128, self.hi as i128) as i32
    }
}
