//! Integer forward passes. Everything between input quantization and output
//! dequantization is `i32` arithmetic with fixed-point requantization.

use serde::{Deserialize, Serialize};

use super::model::{IntegerModel, Kernels};
use super::InferError;
use crate::model::Arch;
use crate::nn::plan::{lstm_edge, tf_edge};
use crate::quant::{real_op_count, requantize, requantize_sum};

/// Integer outputs of one run, optionally with every intermediate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub stages: Vec<(String, Vec<i32>)>,
    pub output_code: i32,
    pub output: f64,
}

struct Recorder(Option<Vec<(String, Vec<i32>)>>);

impl Recorder {
    #[inline]
    fn put(&mut self, name: impl FnOnce() -> String, v: &[i32]) {
        if let Some(s) = &mut self.0 {
            s.push((name(), v.to_vec()));
        }
    }
}

/// `bias + sum_m w[m] * (x[m] - zp)`.
#[inline]
fn dot(w: &[i32], x: &[i32], zp: i32, bias: i32) -> i32 {
    let mut acc = bias;
    for (a, b) in w.iter().zip(x) {
        acc += a * (b - zp);
    }
    acc
}

// Tensor positions in storage order.
mod lt {
    pub const W: [usize; 4] = [0, 1, 2, 3];
    pub const B: [usize; 4] = [4, 5, 6, 7];
    pub const W_OUT: usize = 8;
    pub const B_OUT: usize = 9;
}

mod tt {
    pub const W_IN: usize = 0;
    pub const B_IN_PE: usize = 1;
    pub const W_Q: usize = 2;
    pub const B_Q: usize = 3;
    pub const W_K: usize = 4;
    pub const B_K: usize = 5;
    pub const W_V: usize = 6;
    pub const B_V: usize = 7;
    pub const W_O: usize = 8;
    pub const B_O: usize = 9;
    pub const W_1: usize = 10;
    pub const B_1: usize = 11;
    pub const W_2: usize = 12;
    pub const B_2: usize = 13;
    pub const W_HEAD: usize = 14;
    pub const B_HEAD: usize = 15;
}

fn run_lstm(m: &IntegerModel, x: &[i32], rec: &mut Recorder) -> i32 {
    use lstm_edge::*;
    let Kernels::Lstm { gates, cell } = &m.kernels else { unreachable!("lstm kernels") };
    let g = &m.grids;
    let mu = &m.multipliers;
    let h = m.net.width;
    let (zp_z, zp_c) = (g.edges[Z].zero_point, g.edges[C].zero_point);
    let (zp_s, zp_t) = (g.sigmoid.zero_point, g.tanh.zero_point);
    let mut z = vec![zp_z; h + 1];
    let mut c = vec![zp_c; h];
    let mut gate = vec![0i32; 4 * h];
    for (t, &xt) in x.iter().enumerate() {
        z[h] = xt;
        for k in 0..4 {
            let (w, b) = (m.t(lt::W[k]), m.t(lt::B[k]));
            for j in 0..h {
                let pre = requantize(dot(w.row(j), &z, zp_z, b.data[j]), mu[k], &g.edges[PRE[k]]);
                gate[k * h + j] = gates[k].apply(pre);
            }
        }
        for j in 0..h {
            let (i, f, gg, o) = (gate[j] - zp_s, gate[h + j] - zp_s, gate[2 * h + j] - zp_t, gate[3 * h + j] - zp_s);
            c[j] = requantize_sum(f * (c[j] - zp_c), mu[4], i * gg, mu[5], &g.edges[C]);
            let tc = cell.apply(c[j]) - zp_t;
            z[j] = requantize(o * tc, mu[6], &g.edges[Z]);
        }
        rec.put(|| format!("c{t}"), &c);
        rec.put(|| format!("h{t}"), &z[..h]);
    }
    requantize(dot(&m.t(lt::W_OUT).data, &z[..h], zp_z, m.t(lt::B_OUT).data[0]), mu[7], &g.edges[Y])
}

fn run_transformer(m: &IntegerModel, x: &[i32], rec: &mut Recorder) -> i32 {
    use tf_edge::*;
    let Kernels::Transformer { ffn, softmax } = &m.kernels else { unreachable!("transformer kernels") };
    let g = &m.grids;
    let e = &g.edges;
    let mu = &m.multipliers;
    let (n, d) = (x.len(), m.net.width);
    let f = 4 * d;
    let zp = |i: usize| e[i].zero_point;

    let mut u = vec![0i32; n * d];
    let mut k = vec![0i32; n * d];
    let mut v = vec![0i32; n * d];
    let (w_in, bpe) = (m.t(tt::W_IN), m.t(tt::B_IN_PE));
    for t in 0..n {
        for j in 0..d {
            let acc = bpe.data[t * d + j] + w_in.data[j] * (x[t] - zp(X));
            u[t * d + j] = requantize(acc, mu[0], &e[U]);
        }
        let ut = &u[t * d..(t + 1) * d];
        for j in 0..d {
            k[t * d + j] = requantize(dot(m.t(tt::W_K).row(j), ut, zp(U), m.t(tt::B_K).data[j]), mu[2], &e[K]);
            v[t * d + j] = requantize(dot(m.t(tt::W_V).row(j), ut, zp(U), m.t(tt::B_V).data[j]), mu[3], &e[V]);
        }
    }
    rec.put(|| "u".into(), &u);
    let u_last = &u[(n - 1) * d..];
    let q: Vec<i32> = (0..d)
        .map(|j| requantize(dot(m.t(tt::W_Q).row(j), u_last, zp(U), m.t(tt::B_Q).data[j]), mu[1], &e[Q]))
        .collect();
    let qc: Vec<i32> = q.iter().map(|&a| a - zp(Q)).collect();
    let s: Vec<i32> = (0..n).map(|t| requantize(dot(&qc, &k[t * d..(t + 1) * d], zp(K), 0), mu[4], &e[S])).collect();
    let mut p = vec![0i32; n];
    softmax.apply(&s, &mut p);
    rec.put(|| "s".into(), &s);
    rec.put(|| "p".into(), &p);
    let zp_sig = g.sigmoid.zero_point;
    let c: Vec<i32> = (0..d)
        .map(|j| {
            let acc = (0..n).map(|t| (p[t] - zp_sig) * (v[t * d + j] - zp(V))).sum::<i32>();
            requantize(acc, mu[5], &e[C])
        })
        .collect();
    let r1: Vec<i32> = (0..d)
        .map(|j| {
            let acc = dot(m.t(tt::W_O).row(j), &c, zp(C), m.t(tt::B_O).data[j]);
            requantize_sum(u_last[j] - zp(U), mu[6], acc, mu[7], &e[R1])
        })
        .collect();
    let th: Vec<i32> = (0..f)
        .map(|i| ffn.apply(requantize(dot(m.t(tt::W_1).row(i), &r1, zp(R1), m.t(tt::B_1).data[i]), mu[8], &e[F1])))
        .collect();
    let r2: Vec<i32> = (0..d)
        .map(|j| {
            let acc = dot(m.t(tt::W_2).row(j), &th, g.tanh.zero_point, m.t(tt::B_2).data[j]);
            requantize_sum(r1[j] - zp(R1), mu[9], acc, mu[10], &e[R2])
        })
        .collect();
    rec.put(|| "c".into(), &c);
    rec.put(|| "r1".into(), &r1);
    rec.put(|| "ffn".into(), &th);
    rec.put(|| "r2".into(), &r2);
    requantize(dot(&m.t(tt::W_HEAD).data, &r2, zp(R2), m.t(tt::B_HEAD).data[0]), mu[11], &e[Y])
}

impl IntegerModel {
    fn check_len(&self, len: usize) -> Result<(), InferError> {
        if len != self.net.n {
            return Err(InferError::WindowLength { got: len, want: self.net.n });
        }
        Ok(())
    }

    /// Integer forward on input codes; returns the output code.
    pub fn run(&self, x_q: &[i32]) -> Result<i32, InferError> {
        self.check_len(x_q.len())?;
        let mut rec = Recorder(None);
        Ok(match self.net.arch {
            Arch::Lstm => run_lstm(self, x_q, &mut rec),
            Arch::Transformer => run_transformer(self, x_q, &mut rec),
        })
    }

    /// Quantize, run integer-only and dequantize. Fails if any real-valued
    /// quantization helper runs between the two conversions.
    pub fn predict(&self, x: &[f64]) -> Result<f64, InferError> {
        Ok(self.trace(x, false)?.output)
    }

    pub fn trace(&self, x: &[f64], capture: bool) -> Result<InferenceTrace, InferError> {
        self.check_len(x.len())?;
        let qin = self.input_qp();
        let x_q: Vec<i32> = x.iter().map(|&v| qin.quantize_value(v)).collect();
        let mut rec = Recorder(capture.then(Vec::new));
        let before = real_op_count();
        let code = match self.net.arch {
            Arch::Lstm => run_lstm(self, &x_q, &mut rec),
            Arch::Transformer => run_transformer(self, &x_q, &mut rec),
        };
        let leaked = real_op_count() - before;
        if leaked != 0 {
            return Err(InferError::RealOpOnIntegerPath(leaked));
        }
        let mut stages = rec.0.unwrap_or_default();
        if capture {
            stages.insert(0, ("x".into(), x_q));
        }
        Ok(InferenceTrace { stages, output_code: code, output: self.output_qp().dequantize_value(code) })
    }
}

/// Integer LSTM on input codes.
pub fn run_lstm_int(m: &IntegerModel, x_q: &[i32]) -> Result<i32, InferError> {
    if m.net.arch != Arch::Lstm {
        return Err(InferError::Malformed("not an LSTM model".into()));
    }
    m.run(x_q)
}

/// Integer Transformer on input codes.
pub fn run_transformer_int(m: &IntegerModel, x_q: &[i32]) -> Result<i32, InferError> {
    if m.net.arch != Arch::Transformer {
        return Err(InferError::Malformed("not a Transformer model".into()));
    }
    m.run(x_q)
}
