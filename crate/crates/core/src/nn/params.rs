use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Arch, NetConfig};

/// Dense row-major array with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "tensor data/shape mismatch");
        Self { data, shape }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub is_bias: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Parameter tensors in storage order. Weights are `[out, in]`.
pub fn layout(net: &NetConfig) -> Vec<TensorSpec> {
    let w = net.width;
    let shapes: Vec<(&'static str, usize, usize, bool)> = match net.arch {
        // z = [h_prev; x], gate order i, f, g, o.
        Arch::Lstm => vec![
            ("w_i", w, w + 1, false),
            ("w_f", w, w + 1, false),
            ("w_g", w, w + 1, false),
            ("w_o", w, w + 1, false),
            ("b_i", w, 1, true),
            ("b_f", w, 1, true),
            ("b_g", w, 1, true),
            ("b_o", w, 1, true),
            ("w_out", 1, w, false),
            ("b_out", 1, 1, true),
        ],
        Arch::Transformer => vec![
            ("w_in", w, 1, false),
            ("b_in", w, 1, true),
            ("w_q", w, w, false),
            ("b_q", w, 1, true),
            ("w_k", w, w, false),
            ("b_k", w, 1, true),
            ("w_v", w, w, false),
            ("b_v", w, 1, true),
            ("w_o", w, w, false),
            ("b_o", w, 1, true),
            ("w_1", 4 * w, w, false),
            ("b_1", 4 * w, 1, true),
            ("w_2", w, 4 * w, false),
            ("b_2", w, 1, true),
            ("w_head", 1, w, false),
            ("b_head", 1, 1, true),
        ],
    };
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, rows, cols, is_bias)| {
            let s = TensorSpec { name, rows, cols, offset, is_bias };
            offset += rows * cols;
            s
        })
        .collect()
}

pub fn param_count(net: &NetConfig) -> usize {
    layout(net).last().map_or(0, |s| s.offset + s.len())
}

/// All trainable parameters of one network, flattened in [`layout`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub net: NetConfig,
    /// Sinusoidal positions added after the Transformer input projection.
    pub positional_encoding: bool,
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(net: NetConfig) -> Self {
        Self { net, positional_encoding: true, data: vec![0.0; param_count(&net)] }
    }

    /// Uniform `±1/sqrt(fan_in)` for every tensor, fan-in being the weight's input width.
    pub fn init(net: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(net);
        let specs = layout(&net);
        for s in &specs {
            let fan_in = if s.is_bias {
                // Bias shares the fan-in of the weight right before it.
                specs.iter().rev().find(|w| !w.is_bias && w.offset < s.offset).map_or(1, |w| w.cols)
            } else {
                s.cols
            };
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut p.data[s.range()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn spec(&self, name: &str) -> Option<TensorSpec> {
        layout(&self.net).into_iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        self.spec(name).map(|s| Tensor::new(self.data[s.range()].to_vec(), vec![s.rows, s.cols]))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.spec(name)?;
        Some(&mut self.data[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `pe[t][2i] = sin(t / 10000^(2i/d))`, `pe[t][2i+1] = cos(...)`.
pub fn positional_encoding(n: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; n * d];
    for t in 0..n {
        for j in 0..d {
            let i2 = (j / 2 * 2) as f64;
            let angle = t as f64 / 10000f64.powf(i2 / d as f64);
            pe[t * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}
