//! Integer softmax.
//!
//! With `d = max - s` in input codes and `L = s_in * log2(e)` in Q24,
//! `exp(-s_in d) = 2^-(d L)`. The integer part of `d L` becomes a right shift;
//! the fractional part `f` uses `2^-f ~ 1 - a f + (a - 1/2) f^2`, exact at both
//! ends of `[0, 1)` and within 0.2 % in between. Outputs are normalized by a
//! fixed-point reciprocal of the sum and land on an unsigned `[0, 1]` grid.

use serde::{Deserialize, Serialize};

use crate::quant::{note_real_op, QuantParams};

const FRAC_BITS: u32 = 24;
/// `a = 0.6721` and `a - 1/2` in Q15.
const POLY_A: i64 = 22_023;
const POLY_B: i64 = 5_639;
const ONE_Q15: i64 = 1 << 15;
const RECIP_BITS: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftmaxKernel {
    /// `round(s_in * log2(e) * 2^24)`.
    pub log2e_q24: i64,
    /// Largest output code; the `[0, 1]` grid has `out_max + 1` levels.
    pub out_max: i64,
}

impl SoftmaxKernel {
    pub fn new(input: &QuantParams, output: &QuantParams) -> Self {
        note_real_op();
        let log2e_q24 = (input.scale * std::f64::consts::LOG2_E * (1u64 << FRAC_BITS) as f64).round() as i64;
        Self { log2e_q24: log2e_q24.max(1), out_max: output.qmax() as i64 }
    }

    #[inline]
    fn exp2_neg(&self, d: i64) -> i64 {
        let t = d * self.log2e_q24;
        let int = t >> FRAC_BITS;
        if int >= 31 {
            return 0;
        }
        let f = (t & ((1 << FRAC_BITS) - 1)) >> (FRAC_BITS - 15);
        let poly = ONE_Q15 - ((POLY_A * f) >> 15) + ((POLY_B * ((f * f) >> 15)) >> 15);
        (poly << 15) >> int
    }

    /// Softmax of score codes into `out` (same length).
    pub fn apply(&self, scores: &[i32], out: &mut [i32]) {
        debug_assert_eq!(scores.len(), out.len());
        let Some(&max) = scores.iter().max() else { return };
        let mut sum: i64 = 0;
        for (o, &s) in out.iter_mut().zip(scores) {
            let e = self.exp2_neg((max - s) as i64);
            *o = e as i32;
            sum += e;
        }
        // The maximum contributes exactly 2^30, so sum >= 2^30.
        let recip = (self.out_max << RECIP_BITS) / sum;
        for o in out.iter_mut() {
            *o = ((*o as i64 * recip + (1 << (RECIP_BITS - 1))) >> RECIP_BITS) as i32;
        }
    }
}

/// One-shot integer softmax from score codes to `qp_out` codes.
pub fn integer_softmax(scores_q: &[i32], qp_in: &QuantParams, qp_out: &QuantParams) -> Vec<i32> {
    let k = SoftmaxKernel::new(qp_in, qp_out);
    let mut out = vec![0; scores_q.len()];
    k.apply(scores_q, &mut out);
    out
}
