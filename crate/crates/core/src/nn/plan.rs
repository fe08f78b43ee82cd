//! Quantization plan: which tensors and activation edges are quantized, and
//! with which parameters. Training-time fake quantization and the integer
//! compiler both derive their grids here, so the two paths agree by
//! construction.
//!
//! LSTM edges: `Z` (shared by `x_t` and `h_t`, the concatenation input),
//! the four gate pre-activations, the cell state `C` and the output `Y`.
//! Gate outputs use the fixed sigmoid grid `[0, 1]` or tanh grid `[-1, 1]`.
//!
//! Transformer edges: input `X`, tokens `U`, `Q`, `K`, `V`, scores `S`,
//! context `C`, first residual `R1`, FFN pre-activation `F1`, second residual
//! `R2` and output `Y`. Attention weights and the FFN activation use the fixed
//! sigmoid/tanh grids.

use serde::{Deserialize, Serialize};

use super::params::{layout, Params};
use crate::infer::SoftmaxKernel;
use crate::model::Arch;
use crate::quant::{compute_qparams, QuantError, QuantParams, QuantScheme};

pub mod lstm_edge {
    pub const Z: usize = 0;
    pub const PRE: [usize; 4] = [1, 2, 3, 4];
    pub const C: usize = 5;
    pub const Y: usize = 6;
    pub const COUNT: usize = 7;
    pub const NAMES: [&str; COUNT] = ["z", "pre_i", "pre_f", "pre_g", "pre_o", "c", "y"];
}

pub mod tf_edge {
    pub const X: usize = 0;
    pub const U: usize = 1;
    pub const Q: usize = 2;
    pub const K: usize = 3;
    pub const V: usize = 4;
    pub const S: usize = 5;
    pub const C: usize = 6;
    pub const R1: usize = 7;
    pub const F1: usize = 8;
    pub const R2: usize = 9;
    pub const Y: usize = 10;
    pub const COUNT: usize = 11;
    pub const NAMES: [&str; COUNT] = ["x", "u", "q", "k", "v", "s", "c", "r1", "f1", "r2", "y"];
}

pub fn edge_names(arch: Arch) -> &'static [&'static str] {
    match arch {
        Arch::Lstm => &lstm_edge::NAMES,
        Arch::Transformer => &tf_edge::NAMES,
    }
}

pub fn edge_count(arch: Arch) -> usize {
    edge_names(arch).len()
}

/// Requantization ratios at or above this are avoided by widening the output grid.
pub const MAX_RATIO: f64 = 0.99;

/// Bias codes saturate at the 32-bit accumulator range.
#[inline]
pub fn bias_code(b: f64, scale: f64) -> i32 {
    (b / scale).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

/// Precomputed fake-quantizer for one grid.
#[derive(Debug, Clone, Copy)]
pub struct Fq {
    pub scale: f64,
    pub zp: f64,
    qmin: f64,
    qmax: f64,
    lo: f64,
    hi: f64,
}

impl Fq {
    pub fn new(qp: &QuantParams) -> Self {
        let (lo, hi) = qp.real_range();
        Self {
            scale: qp.scale,
            zp: qp.zero_point as f64,
            qmin: qp.qmin() as f64,
            qmax: qp.qmax() as f64,
            lo: lo - 0.5 * qp.scale,
            hi: hi + 0.5 * qp.scale,
        }
    }

    /// Integer code for `x`; same arithmetic as [`QuantParams::quantize_value`].
    #[inline]
    pub fn code(&self, x: f64) -> i32 {
        ((x / self.scale).round() + self.zp).clamp(self.qmin, self.qmax) as i32
    }

    #[inline]
    pub fn value(&self, code: i32) -> f64 {
        self.scale * (code as f64 - self.zp)
    }

    /// `(dequantize(quantize(x)), straight-through mask)`.
    #[inline]
    pub fn apply(&self, x: f64) -> (f64, bool) {
        (self.value(self.code(x)), x >= self.lo && x <= self.hi)
    }
}

/// Names of weight tensors in plan order.
pub fn weight_names(arch: Arch) -> &'static [&'static str] {
    match arch {
        Arch::Lstm => &["w_i", "w_f", "w_g", "w_o", "w_out"],
        Arch::Transformer => &["w_in", "w_q", "w_k", "w_v", "w_o", "w_1", "w_2", "w_head"],
    }
}

/// Input grid feeding each bias's accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Edge(usize),
    Tanh,
}

fn bias_source(arch: Arch, bias: &str) -> Option<(&'static str, Source)> {
    use Source::*;
    Some(match (arch, bias) {
        (Arch::Lstm, "b_i") => ("w_i", Edge(lstm_edge::Z)),
        (Arch::Lstm, "b_f") => ("w_f", Edge(lstm_edge::Z)),
        (Arch::Lstm, "b_g") => ("w_g", Edge(lstm_edge::Z)),
        (Arch::Lstm, "b_o") => ("w_o", Edge(lstm_edge::Z)),
        (Arch::Lstm, "b_out") => ("w_out", Edge(lstm_edge::Z)),
        (Arch::Transformer, "b_in") => ("w_in", Edge(tf_edge::X)),
        (Arch::Transformer, "b_q") => ("w_q", Edge(tf_edge::U)),
        (Arch::Transformer, "b_k") => ("w_k", Edge(tf_edge::U)),
        (Arch::Transformer, "b_v") => ("w_v", Edge(tf_edge::U)),
        (Arch::Transformer, "b_o") => ("w_o", Edge(tf_edge::C)),
        (Arch::Transformer, "b_1") => ("w_1", Edge(tf_edge::R1)),
        (Arch::Transformer, "b_2") => ("w_2", Tanh),
        (Arch::Transformer, "b_head") => ("w_head", Edge(tf_edge::R2)),
        _ => return None,
    })
}

/// Running activation ranges, indexed by edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSet {
    pub ranges: Vec<Option<(f64, f64)>>,
}

impl RangeSet {
    pub fn empty(arch: Arch) -> Self {
        Self { ranges: vec![None; edge_count(arch)] }
    }

    pub fn is_complete(&self) -> bool {
        self.ranges.iter().all(Option::is_some)
    }

    /// `ema = m * ema + (1 - m) * batch`; first observation initializes.
    pub fn ema_update(&mut self, obs: &Observed, momentum: f64) {
        for (r, &(lo, hi)) in self.ranges.iter_mut().zip(&obs.0) {
            if lo > hi {
                continue;
            }
            *r = Some(match *r {
                None => (lo, hi),
                Some((a, b)) => (momentum * a + (1.0 - momentum) * lo, momentum * b + (1.0 - momentum) * hi),
            });
        }
    }

    /// Widen every range to cover the observed extremes.
    pub fn union(&mut self, obs: &Observed) {
        for (r, &(lo, hi)) in self.ranges.iter_mut().zip(&obs.0) {
            if lo > hi {
                continue;
            }
            *r = Some(match *r {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            });
        }
    }

    pub fn complete(&self) -> Option<Vec<(f64, f64)>> {
        self.ranges.iter().copied().collect()
    }
}

/// Per-edge min/max over one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed(pub Vec<(f64, f64)>);

impl Observed {
    pub fn new(arch: Arch) -> Self {
        Self(vec![(f64::INFINITY, f64::NEG_INFINITY); edge_count(arch)])
    }

    #[inline]
    pub fn see(&mut self, edge: usize, v: f64) {
        let r = &mut self.0[edge];
        if v < r.0 {
            r.0 = v;
        }
        if v > r.1 {
            r.1 = v;
        }
    }

    pub fn merge(&mut self, other: &Observed) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.0 = a.0.min(b.0);
            a.1 = a.1.max(b.1);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantPlan {
    pub arch: Arch,
    pub bits: u8,
    pub edges: Vec<QuantParams>,
    /// Symmetric weight grids in [`weight_names`] order.
    pub weights: Vec<QuantParams>,
    /// Unsigned `[0, 1]` grid for gates and attention weights.
    pub sigmoid: QuantParams,
    /// Symmetric `[-1, 1]` grid for tanh outputs.
    pub tanh: QuantParams,
}

/// Fake quantizers for one forward pass under a plan.
#[derive(Debug, Clone)]
pub struct ActFq {
    pub plan: QuantPlan,
    pub edges: Vec<Fq>,
    pub sigmoid: Fq,
    pub tanh: Fq,
    /// Grid of the Transformer input bias plus positional code.
    pub bias_in_scale: f64,
    pub softmax: Option<SoftmaxKernel>,
}

impl ActFq {
    pub fn new(plan: &QuantPlan) -> Self {
        let (bias_in_scale, softmax) = match plan.arch {
            Arch::Transformer => (
                plan.bias_scale("b_in").expect("transformer input bias"),
                Some(SoftmaxKernel::new(&plan.edges[tf_edge::S], &plan.sigmoid)),
            ),
            Arch::Lstm => (0.0, None),
        };
        Self {
            plan: plan.clone(),
            edges: plan.edge_fq(),
            sigmoid: Fq::new(&plan.sigmoid),
            tanh: Fq::new(&plan.tanh),
            bias_in_scale,
            softmax,
        }
    }
}

fn widen(qp: QuantParams, numerators: &[f64]) -> Result<QuantParams, QuantError> {
    let num = numerators.iter().copied().fold(0.0, f64::max);
    if num / qp.scale >= MAX_RATIO {
        QuantParams::new(num / MAX_RATIO, qp.zero_point, qp.bitwidth, qp.signed)
    } else {
        Ok(qp)
    }
}

impl QuantPlan {
    /// Grids for `params` at `bits`, given one complete range per edge.
    pub fn derive(params: &Params, bits: u8, ranges: &[(f64, f64)]) -> Result<Self, QuantError> {
        let arch = params.net.arch;
        assert_eq!(ranges.len(), edge_count(arch), "one range per edge");
        let specs = layout(&params.net);
        let weights = weight_names(arch)
            .iter()
            .map(|name| {
                let s = specs.iter().find(|s| s.name == *name).expect("weight in layout");
                let w = &params.data[s.range()];
                let (lo, hi) = w.iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
                compute_qparams(lo, hi, bits, QuantScheme::Symmetric)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sigmoid = compute_qparams(0.0, 1.0, bits, QuantScheme::AsymmetricUnsigned)?;
        let tanh = compute_qparams(-1.0, 1.0, bits, QuantScheme::Symmetric)?;
        let mut edges = ranges
            .iter()
            .map(|&(lo, hi)| compute_qparams(lo, hi, bits, QuantScheme::AsymmetricSigned))
            .collect::<Result<Vec<_>, _>>()?;
        let w = |i: usize| weights[i].scale;
        let (ss, st) = (sigmoid.scale, tanh.scale);
        match arch {
            Arch::Lstm => {
                use lstm_edge::*;
                edges[Z] = widen(edges[Z], &[ss * st])?;
                let sz = edges[Z].scale;
                for k in 0..4 {
                    edges[PRE[k]] = widen(edges[PRE[k]], &[w(k) * sz])?;
                }
                edges[C] = widen(edges[C], &[ss * st])?;
                edges[Y] = widen(edges[Y], &[w(4) * sz])?;
            }
            Arch::Transformer => {
                use tf_edge::*;
                let d = params.net.width as f64;
                edges[U] = widen(edges[U], &[w(0) * edges[X].scale])?;
                let su = edges[U].scale;
                for (e, wi) in [(Q, 1), (K, 2), (V, 3)] {
                    edges[e] = widen(edges[e], &[w(wi) * su])?;
                }
                edges[S] = widen(edges[S], &[edges[Q].scale * edges[K].scale / d.sqrt()])?;
                edges[C] = widen(edges[C], &[ss * edges[V].scale])?;
                edges[R1] = widen(edges[R1], &[su, w(4) * edges[C].scale])?;
                edges[F1] = widen(edges[F1], &[w(5) * edges[R1].scale])?;
                edges[R2] = widen(edges[R2], &[edges[R1].scale, w(6) * st])?;
                edges[Y] = widen(edges[Y], &[w(7) * edges[R2].scale])?;
            }
        }
        Ok(Self { arch, bits, edges, weights, sigmoid, tanh })
    }

    pub fn weight_qp(&self, name: &str) -> Option<QuantParams> {
        weight_names(self.arch).iter().position(|n| *n == name).map(|i| self.weights[i])
    }

    /// Scale of a bias code: weight scale times the scale of the accumulator's input.
    pub fn bias_scale(&self, bias: &str) -> Option<f64> {
        let (w, src) = bias_source(self.arch, bias)?;
        let s_in = match src {
            Source::Edge(e) => self.edges[e].scale,
            Source::Tanh => self.tanh.scale,
        };
        Some(self.weight_qp(w)?.scale * s_in)
    }

    pub fn edge_fq(&self) -> Vec<Fq> {
        self.edges.iter().map(Fq::new).collect()
    }

    /// Parameters as the integer engine sees them: weights on their symmetric
    /// grids, biases on their accumulator grids. The Transformer input bias is
    /// left untouched because it is quantized together with the positional code.
    pub fn quantize_params(&self, params: &Params) -> Vec<f64> {
        let mut out = params.data.clone();
        for s in layout(&params.net) {
            let vals = &mut out[s.range()];
            if s.is_bias {
                if self.arch == Arch::Transformer && s.name == "b_in" {
                    continue;
                }
                let scale = self.bias_scale(s.name).expect("bias has a source");
                for v in vals {
                    *v = bias_code(*v, scale) as f64 * scale;
                }
            } else {
                let fq = Fq::new(&self.weight_qp(s.name).expect("weight has a grid"));
                for v in vals {
                    *v = fq.value(fq.code(*v));
                }
            }
        }
        out
    }
}
