use serde::{Deserialize, Serialize};

use super::{InferError, SoftmaxKernel};
use crate::model::{Arch, NetConfig};
use crate::nn::plan::{bias_code, lstm_edge, tf_edge, weight_names, Fq, QuantPlan};
use crate::nn::{layout, positional_encoding, TrainedModel};
use crate::quant::{FixedPointMultiplier, HardActivation, QuantParams};

/// Integer payload of one tensor, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl IntTensor {
    #[inline]
    pub fn row(&self, j: usize) -> &[i32] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }
}

/// Names of the requantization multipliers, in storage order.
pub fn multiplier_names(arch: Arch) -> &'static [&'static str] {
    match arch {
        Arch::Lstm => &["pre_i", "pre_f", "pre_g", "pre_o", "c_f", "c_ig", "h", "y"],
        Arch::Transformer => &["u", "q", "k", "v", "s", "c", "r1_u", "r1_o", "f1", "r2_r", "r2_f", "y"],
    }
}

/// Grids an integer model is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub edges: Vec<QuantParams>,
    pub weights: Vec<QuantParams>,
    pub sigmoid: QuantParams,
    pub tanh: QuantParams,
}

impl Grids {
    /// Real ratio each multiplier encodes.
    pub fn multiplier_ratios(&self, net: &NetConfig) -> Vec<f64> {
        let e = |i: usize| self.edges[i].scale;
        let w = |i: usize| self.weights[i].scale;
        let (ss, st) = (self.sigmoid.scale, self.tanh.scale);
        match net.arch {
            Arch::Lstm => {
                use lstm_edge::*;
                let mut r: Vec<f64> = (0..4).map(|k| w(k) * e(Z) / e(PRE[k])).collect();
                r.extend([ss, ss * st / e(C), ss * st / e(Z), w(4) * e(Z) / e(Y)]);
                r
            }
            Arch::Transformer => {
                use tf_edge::*;
                let d = net.width as f64;
                vec![
                    w(0) * e(X) / e(U),
                    w(1) * e(U) / e(Q),
                    w(2) * e(U) / e(K),
                    w(3) * e(U) / e(V),
                    e(Q) * e(K) / (d.sqrt() * e(S)),
                    ss * e(V) / e(C),
                    e(U) / e(R1),
                    w(4) * e(C) / e(R1),
                    w(5) * e(R1) / e(F1),
                    e(R1) / e(R2),
                    w(6) * st / e(R2),
                    w(7) * e(R2) / e(Y),
                ]
            }
        }
    }
}

/// Activation kernels derived from the grids at build time.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub(crate) enum Kernels {
    Lstm { gates: [HardActivation; 4], cell: HardActivation },
    Transformer { ffn: HardActivation, softmax: SoftmaxKernel },
}

/// A compiled, integer-only model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerModel {
    pub net: NetConfig,
    pub bits: u8,
    pub grids: Grids,
    /// Weights then biases in parameter-layout order. The Transformer input
    /// bias is stored per position (`b_in_pe`, `[n, d]`) with the positional code folded in.
    pub tensors: Vec<IntTensor>,
    pub multipliers: Vec<FixedPointMultiplier>,
    pub(crate) kernels: Kernels,
}

/// Worst `|code - zero_point|` on a grid.
fn max_offset(qp: &QuantParams) -> i64 {
    (qp.zero_point - qp.qmin()).max(qp.qmax() - qp.zero_point) as i64
}

impl IntegerModel {
    /// Assemble from stored parts, rebuilding kernels and checking shapes and headroom.
    pub fn from_parts(
        net: NetConfig,
        bits: u8,
        grids: Grids,
        tensors: Vec<IntTensor>,
        multipliers: Vec<FixedPointMultiplier>,
    ) -> Result<Self, InferError> {
        let specs = expected_shapes(&net);
        if tensors.len() != specs.len() {
            return Err(InferError::Malformed(format!("expected {} tensors, got {}", specs.len(), tensors.len())));
        }
        for (t, (name, rows, cols)) in tensors.iter().zip(&specs) {
            if t.name != *name || t.rows != *rows || t.cols != *cols || t.data.len() != rows * cols {
                return Err(InferError::Malformed(format!(
                    "tensor `{}` does not match `{name}` [{rows}, {cols}]",
                    t.name
                )));
            }
        }
        let want_edges = crate::nn::plan::edge_count(net.arch);
        if grids.edges.len() != want_edges || grids.weights.len() != weight_names(net.arch).len() {
            return Err(InferError::Malformed("grid count".into()));
        }
        if multipliers.len() != multiplier_names(net.arch).len() {
            return Err(InferError::Malformed("multiplier count".into()));
        }
        for (t, qp) in weight_names(net.arch).iter().zip(&grids.weights) {
            let t = tensors.iter().find(|x| x.name == *t).expect("checked above");
            if t.data.iter().any(|&q| q < qp.qmin() || q > qp.qmax()) {
                return Err(InferError::Malformed(format!("weight `{}` outside its {}-bit grid", t.name, qp.bitwidth)));
            }
        }
        let kernels = match net.arch {
            Arch::Lstm => {
                use lstm_edge::*;
                let g = |k: usize| {
                    if k == 2 {
                        HardActivation::tanh(&grids.edges[PRE[k]], &grids.tanh)
                    } else {
                        HardActivation::sigmoid(&grids.edges[PRE[k]], &grids.sigmoid)
                    }
                };
                Kernels::Lstm {
                    gates: [g(0)?, g(1)?, g(2)?, g(3)?],
                    cell: HardActivation::tanh(&grids.edges[C], &grids.tanh)?,
                }
            }
            Arch::Transformer => Kernels::Transformer {
                ffn: HardActivation::tanh(&grids.edges[tf_edge::F1], &grids.tanh)?,
                softmax: SoftmaxKernel::new(&grids.edges[tf_edge::S], &grids.sigmoid),
            },
        };
        let m = Self { net, bits, grids, tensors, multipliers, kernels };
        m.check_headroom()?;
        Ok(m)
    }

    pub fn tensor(&self, name: &str) -> Option<&IntTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    #[inline]
    pub(crate) fn t(&self, i: usize) -> &IntTensor {
        &self.tensors[i]
    }

    /// Every dot product must fit a 32-bit accumulator for any input codes.
    fn check_headroom(&self) -> Result<(), InferError> {
        let g = &self.grids;
        let input_grid: Vec<(&str, &str, QuantParams)> = match self.net.arch {
            Arch::Lstm => {
                let z = g.edges[lstm_edge::Z];
                vec![("w_i", "b_i", z), ("w_f", "b_f", z), ("w_g", "b_g", z), ("w_o", "b_o", z), ("w_out", "b_out", z)]
            }
            Arch::Transformer => {
                use tf_edge::*;
                vec![
                    ("w_in", "b_in_pe", g.edges[X]),
                    ("w_q", "b_q", g.edges[U]),
                    ("w_k", "b_k", g.edges[U]),
                    ("w_v", "b_v", g.edges[U]),
                    ("w_o", "b_o", g.edges[C]),
                    ("w_1", "b_1", g.edges[R1]),
                    ("w_2", "b_2", g.tanh),
                    ("w_head", "b_head", g.edges[R2]),
                ]
            }
        };
        for (w, b, qp) in input_grid {
            let wt = self.tensor(w).expect("weight");
            let bt = self.tensor(b).expect("bias");
            let bmax = bt.data.iter().map(|v| (*v as i64).abs()).max().unwrap_or(0);
            for j in 0..wt.rows {
                let s: i64 = wt.row(j).iter().map(|v| (*v as i64).abs()).sum::<i64>() * max_offset(&qp);
                if s + bmax > i32::MAX as i64 {
                    return Err(InferError::Headroom { tensor: w.to_string(), bound: s + bmax });
                }
            }
        }
        // Products without a weight tensor: gate Hadamards, scores and context.
        let prod = match self.net.arch {
            Arch::Lstm => {
                let sig = max_offset(&g.sigmoid);
                sig * max_offset(&g.edges[lstm_edge::C]).max(max_offset(&g.tanh))
            }
            Arch::Transformer => {
                use tf_edge::*;
                let n = self.net.n as i64;
                let d = self.net.width as i64;
                (d * max_offset(&g.edges[Q]) * max_offset(&g.edges[K]))
                    .max(n * max_offset(&g.sigmoid) * max_offset(&g.edges[V]))
            }
        };
        if prod > i32::MAX as i64 {
            return Err(InferError::Headroom { tensor: "activation product".into(), bound: prod });
        }
        Ok(())
    }

    /// Input grid.
    pub fn input_qp(&self) -> QuantParams {
        self.grids.edges[0]
    }

    /// Output grid.
    pub fn output_qp(&self) -> QuantParams {
        *self.grids.edges.last().expect("edges")
    }
}

/// Tensor names and shapes an integer model stores.
pub fn expected_shapes(net: &NetConfig) -> Vec<(String, usize, usize)> {
    layout(net)
        .into_iter()
        .map(|s| {
            if net.arch == Arch::Transformer && s.name == "b_in" {
                ("b_in_pe".to_string(), net.n, net.width)
            } else {
                (s.name.to_string(), s.rows, s.cols)
            }
        })
        .collect()
}

/// Quantize a trained model's parameters and derive every multiplier.
pub fn compile(trained: &TrainedModel, bits: u8) -> Result<IntegerModel, InferError> {
    let plan = trained.plan(bits)?;
    compile_plan(trained, &plan)
}

pub fn compile_plan(trained: &TrainedModel, plan: &QuantPlan) -> Result<IntegerModel, InferError> {
    let p = &trained.params;
    let net = p.net;
    let mut tensors = Vec::new();
    for s in layout(&net) {
        let vals = &p.data[s.range()];
        let data: Vec<i32> = if s.is_bias {
            if net.arch == Arch::Transformer && s.name == "b_in" {
                let scale = plan.bias_scale("b_in").expect("input bias scale");
                let pe = positional_encoding(net.n, net.width);
                let mut out = Vec::with_capacity(net.n * net.width);
                for t in 0..net.n {
                    for j in 0..net.width {
                        let v = vals[j] + if p.positional_encoding { pe[t * net.width + j] } else { 0.0 };
                        out.push(bias_code(v, scale));
                    }
                }
                tensors.push(IntTensor { name: "b_in_pe".into(), rows: net.n, cols: net.width, data: out });
                continue;
            }
            let scale = plan.bias_scale(s.name).expect("bias scale");
            vals.iter().map(|&v| bias_code(v, scale)).collect()
        } else {
            let fq = Fq::new(&plan.weight_qp(s.name).expect("weight grid"));
            vals.iter().map(|&v| fq.code(v)).collect()
        };
        tensors.push(IntTensor { name: s.name.to_string(), rows: s.rows, cols: s.cols, data });
    }
    let grids =
        Grids { edges: plan.edges.clone(), weights: plan.weights.clone(), sigmoid: plan.sigmoid, tanh: plan.tanh };
    let multipliers = grids
        .multiplier_ratios(&net)
        .into_iter()
        .map(FixedPointMultiplier::from_real)
        .collect::<Result<Vec<_>, _>>()?;
    IntegerModel::from_parts(net, plan.bits, grids, tensors, multipliers)
}
