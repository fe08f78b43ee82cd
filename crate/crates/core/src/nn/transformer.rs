//! One-head encoder layer without normalization: input projection plus
//! sinusoidal positions, attention, residual, HardTanh FFN, residual, and a
//! linear readout of the final token.
//!
//! Keys and values are needed for every token, but only the final token's
//! query, residuals and FFN reach the output, so only those are computed.

use super::plan::{tf_edge as e, ActFq, Observed};
use crate::model::NetConfig;
use crate::quant::{hard_tanh, hard_tanh_grad};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub w_in: usize,
    pub b_in: usize,
    pub w_q: usize,
    pub b_q: usize,
    pub w_k: usize,
    pub b_k: usize,
    pub w_v: usize,
    pub b_v: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub w_1: usize,
    pub b_1: usize,
    pub w_2: usize,
    pub b_2: usize,
    pub w_head: usize,
    pub b_head: usize,
}

impl Offsets {
    pub fn new(net: &NetConfig) -> Self {
        let d = net.width;
        let mut at = 0;
        let mut take = |len: usize| {
            let o = at;
            at += len;
            o
        };
        Self {
            w_in: take(d),
            b_in: take(d),
            w_q: take(d * d),
            b_q: take(d),
            w_k: take(d * d),
            b_k: take(d),
            w_v: take(d * d),
            b_v: take(d),
            w_o: take(d * d),
            b_o: take(d),
            w_1: take(4 * d * d),
            b_1: take(4 * d),
            w_2: take(4 * d * d),
            b_2: take(d),
            w_head: take(d),
            b_head: take(1),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TransformerCache {
    n: usize,
    d: usize,
    x: Vec<f64>,
    u: Vec<f64>,
    u_mask: Vec<bool>,
    k: Vec<f64>,
    k_mask: Vec<bool>,
    v: Vec<f64>,
    v_mask: Vec<bool>,
    q: Vec<f64>,
    q_mask: Vec<bool>,
    s: Vec<f64>,
    s_mask: Vec<bool>,
    s_code: Vec<i32>,
    p_code: Vec<i32>,
    p: Vec<f64>,
    c: Vec<f64>,
    c_mask: Vec<bool>,
    r1: Vec<f64>,
    r1_mask: Vec<bool>,
    f1: Vec<f64>,
    f1_mask: Vec<bool>,
    tt: Vec<f64>,
    r2: Vec<f64>,
    r2_mask: Vec<bool>,
    y_mask: bool,
    // backward scratch
    du: Vec<f64>,
    dk: Vec<f64>,
    dv: Vec<f64>,
    dp: Vec<f64>,
    ds: Vec<f64>,
    dq: Vec<f64>,
    dc: Vec<f64>,
    dr1: Vec<f64>,
    dr2: Vec<f64>,
    dtt: Vec<f64>,
}

impl TransformerCache {
    fn resize(&mut self, n: usize, d: usize) {
        self.n = n;
        self.d = d;
        let f = 4 * d;
        for (v, len) in [
            (&mut self.x, n),
            (&mut self.u, n * d),
            (&mut self.k, n * d),
            (&mut self.v, n * d),
            (&mut self.q, d),
            (&mut self.s, n),
            (&mut self.p, n),
            (&mut self.c, d),
            (&mut self.r1, d),
            (&mut self.f1, f),
            (&mut self.tt, f),
            (&mut self.r2, d),
            (&mut self.du, n * d),
            (&mut self.dk, n * d),
            (&mut self.dv, n * d),
            (&mut self.dp, n),
            (&mut self.ds, n),
            (&mut self.dq, d),
            (&mut self.dc, d),
            (&mut self.dr1, d),
            (&mut self.dr2, d),
            (&mut self.dtt, f),
        ] {
            v.resize(len, 0.0);
        }
        for (m, len) in [
            (&mut self.u_mask, n * d),
            (&mut self.k_mask, n * d),
            (&mut self.v_mask, n * d),
            (&mut self.q_mask, d),
            (&mut self.s_mask, n),
            (&mut self.c_mask, d),
            (&mut self.r1_mask, d),
            (&mut self.f1_mask, f),
            (&mut self.r2_mask, d),
        ] {
            m.resize(len, true);
        }
        self.s_code.resize(n, 0);
        self.p_code.resize(n, 0);
    }

    /// Regime of every HardTanh unit, for finite-difference checks.
    pub(crate) fn signature(&self) -> Vec<i8> {
        self.f1
            .iter()
            .map(|&v| {
                if v <= -1.0 {
                    -1
                } else if v >= 1.0 {
                    1
                } else {
                    0
                }
            })
            .collect()
    }
}

#[inline]
fn quant(act: Option<&ActFq>, edge: usize, v: f64) -> (f64, bool) {
    match act {
        Some(a) => a.edges[edge].apply(v),
        None => (v, true),
    }
}

#[inline]
fn observe(obs: &mut Option<&mut Observed>, edge: usize, v: f64) {
    if let Some(o) = obs.as_deref_mut() {
        o.see(edge, v);
    }
}

/// `out[j] = b[j] + sum_m w[j, m] * x[m]` for a row-major `[rows, x.len()]` weight.
#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * cols..(j + 1) * cols];
        *o = b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Forward one window. `pe` is the `[n, d]` positional table, if enabled.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    w: &[f64],
    net: &NetConfig,
    pe: Option<&[f64]>,
    act: Option<&ActFq>,
    x: &[f64],
    mut obs: Option<&mut Observed>,
    cache: &mut TransformerCache,
) -> f64 {
    let n = x.len();
    let d = net.width;
    let f = 4 * d;
    cache.resize(n, d);
    let o = Offsets::new(net);
    let scratch = &mut vec![0.0; f.max(d)];

    for t in 0..n {
        observe(&mut obs, e::X, x[t]);
        let xq = quant(act, e::X, x[t]).0;
        cache.x[t] = xq;
        for j in 0..d {
            let mut bias = w[o.b_in + j] + pe.map_or(0.0, |p| p[t * d + j]);
            if let Some(a) = act {
                bias = (bias / a.bias_in_scale).round() * a.bias_in_scale;
            }
            let raw = w[o.w_in + j] * xq + bias;
            observe(&mut obs, e::U, raw);
            let (u, m) = quant(act, e::U, raw);
            cache.u[t * d + j] = u;
            cache.u_mask[t * d + j] = m;
        }
        let ut = &cache.u[t * d..(t + 1) * d];
        for (wo, bo, edge, val, mask) in [
            (o.w_k, o.b_k, e::K, &mut cache.k, &mut cache.k_mask),
            (o.w_v, o.b_v, e::V, &mut cache.v, &mut cache.v_mask),
        ] {
            let out = &mut scratch[..d];
            affine(&w[wo..wo + d * d], &w[bo..bo + d], ut, out);
            for j in 0..d {
                observe(&mut obs, edge, out[j]);
                let (v, m) = quant(act, edge, out[j]);
                val[t * d + j] = v;
                mask[t * d + j] = m;
            }
        }
    }

    let last = n - 1;
    let u_last = cache.u[last * d..n * d].to_vec();
    {
        let out = &mut scratch[..d];
        affine(&w[o.w_q..o.w_q + d * d], &w[o.b_q..o.b_q + d], &u_last, out);
        for j in 0..d {
            observe(&mut obs, e::Q, out[j]);
            let (v, m) = quant(act, e::Q, out[j]);
            cache.q[j] = v;
            cache.q_mask[j] = m;
        }
    }

    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    for t in 0..n {
        let kt = &cache.k[t * d..(t + 1) * d];
        let raw = cache.q.iter().zip(kt).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt_d;
        observe(&mut obs, e::S, raw);
        let (s, m) = quant(act, e::S, raw);
        cache.s[t] = s;
        cache.s_mask[t] = m;
        if let Some(a) = act {
            cache.s_code[t] = a.edges[e::S].code(raw);
        }
    }
    match act.and_then(|a| a.softmax.as_ref().map(|k| (a, k))) {
        Some((a, kernel)) => {
            kernel.apply(&cache.s_code, &mut cache.p_code);
            for t in 0..n {
                cache.p[t] = a.sigmoid.value(cache.p_code[t]);
            }
        }
        None => {
            let max = cache.s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for t in 0..n {
                cache.p[t] = (cache.s[t] - max).exp();
                sum += cache.p[t];
            }
            for p in &mut cache.p {
                *p /= sum;
            }
        }
    }

    for j in 0..d {
        let raw = (0..n).map(|t| cache.p[t] * cache.v[t * d + j]).sum::<f64>();
        observe(&mut obs, e::C, raw);
        let (c, m) = quant(act, e::C, raw);
        cache.c[j] = c;
        cache.c_mask[j] = m;
    }
    {
        let out = &mut scratch[..d];
        affine(&w[o.w_o..o.w_o + d * d], &w[o.b_o..o.b_o + d], &cache.c, out);
        for j in 0..d {
            let raw = u_last[j] + out[j];
            observe(&mut obs, e::R1, raw);
            let (r, m) = quant(act, e::R1, raw);
            cache.r1[j] = r;
            cache.r1_mask[j] = m;
        }
    }
    {
        let out = &mut scratch[..f];
        affine(&w[o.w_1..o.w_1 + f * d], &w[o.b_1..o.b_1 + f], &cache.r1, out);
        for i in 0..f {
            observe(&mut obs, e::F1, out[i]);
            let (v, m) = quant(act, e::F1, out[i]);
            cache.f1[i] = v;
            cache.f1_mask[i] = m;
            cache.tt[i] = match act {
                Some(a) => a.tanh.apply(hard_tanh(v)).0,
                None => hard_tanh(v),
            };
        }
    }
    {
        let out = &mut scratch[..d];
        affine(&w[o.w_2..o.w_2 + d * f], &w[o.b_2..o.b_2 + d], &cache.tt, out);
        for j in 0..d {
            let raw = cache.r1[j] + out[j];
            observe(&mut obs, e::R2, raw);
            let (r, m) = quant(act, e::R2, raw);
            cache.r2[j] = r;
            cache.r2_mask[j] = m;
        }
    }
    let raw = w[o.b_head] + w[o.w_head..o.w_head + d].iter().zip(&cache.r2).map(|(a, b)| a * b).sum::<f64>();
    observe(&mut obs, e::Y, raw);
    let (y, m) = quant(act, e::Y, raw);
    cache.y_mask = m;
    y
}

#[inline]
fn gate(v: f64, m: bool) -> f64 {
    if m {
        v
    } else {
        0.0
    }
}

/// `grad_w += dout ⊗ x`, `grad_b += dout`, `dx += W^T dout`.
#[inline]
fn affine_back(w: &[f64], x: &[f64], dout: &[f64], gw: &mut [f64], gb: &mut [f64], dx: &mut [f64]) {
    let cols = x.len();
    for (j, &dj) in dout.iter().enumerate() {
        if dj == 0.0 {
            continue;
        }
        gb[j] += dj;
        let row = &w[j * cols..(j + 1) * cols];
        let grow = &mut gw[j * cols..(j + 1) * cols];
        for m in 0..cols {
            grow[m] += dj * x[m];
            dx[m] += dj * row[m];
        }
    }
}

/// Split two disjoint ranges of `grad` mutably.
fn two_mut(g: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

pub fn backward(w: &[f64], net: &NetConfig, cache: &mut TransformerCache, dy: f64, grad: &mut [f64]) {
    let (n, d) = (cache.n, cache.d);
    let f = 4 * d;
    let o = Offsets::new(net);
    let c = cache;
    let dy = gate(dy, c.y_mask);

    grad[o.b_head] += dy;
    for j in 0..d {
        grad[o.w_head + j] += dy * c.r2[j];
        c.dr2[j] = gate(dy * w[o.w_head + j], c.r2_mask[j]);
    }

    // Second residual and FFN.
    c.dr1.copy_from_slice(&c.dr2);
    c.dtt.fill(0.0);
    {
        let (gw, gb) = two_mut(grad, o.w_2..o.w_2 + d * f, o.b_2..o.b_2 + d);
        affine_back(&w[o.w_2..o.w_2 + d * f], &c.tt, &c.dr2, gw, gb, &mut c.dtt);
    }
    for i in 0..f {
        c.dtt[i] = gate(c.dtt[i] * hard_tanh_grad(c.f1[i]), c.f1_mask[i]);
    }
    {
        let (gw, gb) = two_mut(grad, o.w_1..o.w_1 + f * d, o.b_1..o.b_1 + f);
        affine_back(&w[o.w_1..o.w_1 + f * d], &c.r1, &c.dtt, gw, gb, &mut c.dr1);
    }
    for j in 0..d {
        c.dr1[j] = gate(c.dr1[j], c.r1_mask[j]);
    }

    // First residual and output projection.
    c.du.fill(0.0);
    let last = n - 1;
    c.du[last * d..n * d].copy_from_slice(&c.dr1);
    c.dc.fill(0.0);
    {
        let (gw, gb) = two_mut(grad, o.w_o..o.w_o + d * d, o.b_o..o.b_o + d);
        affine_back(&w[o.w_o..o.w_o + d * d], &c.c, &c.dr1, gw, gb, &mut c.dc);
    }
    for j in 0..d {
        c.dc[j] = gate(c.dc[j], c.c_mask[j]);
    }

    // Attention.
    c.dv.fill(0.0);
    let mut pdp = 0.0;
    for t in 0..n {
        let vt = &c.v[t * d..(t + 1) * d];
        c.dp[t] = vt.iter().zip(&c.dc).map(|(a, b)| a * b).sum();
        pdp += c.p[t] * c.dp[t];
        for j in 0..d {
            c.dv[t * d + j] = c.p[t] * c.dc[j];
        }
    }
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    c.dq.fill(0.0);
    c.dk.fill(0.0);
    for t in 0..n {
        c.ds[t] = gate(c.p[t] * (c.dp[t] - pdp), c.s_mask[t]) * inv_sqrt_d;
        for j in 0..d {
            c.dq[j] += c.ds[t] * c.k[t * d + j];
            c.dk[t * d + j] = c.ds[t] * c.q[j];
        }
    }
    for j in 0..d {
        c.dq[j] = gate(c.dq[j], c.q_mask[j]);
    }
    {
        let (gw, gb) = two_mut(grad, o.w_q..o.w_q + d * d, o.b_q..o.b_q + d);
        let u_last = &c.u[last * d..n * d];
        affine_back(&w[o.w_q..o.w_q + d * d], u_last, &c.dq, gw, gb, &mut c.du[last * d..n * d]);
    }
    for t in 0..n {
        let span = t * d..(t + 1) * d;
        for j in span.clone() {
            c.dk[j] = gate(c.dk[j], c.k_mask[j]);
            c.dv[j] = gate(c.dv[j], c.v_mask[j]);
        }
        let ut = &c.u[span.clone()];
        {
            let (gw, gb) = two_mut(grad, o.w_k..o.w_k + d * d, o.b_k..o.b_k + d);
            affine_back(&w[o.w_k..o.w_k + d * d], ut, &c.dk[span.clone()], gw, gb, &mut c.du[span.clone()]);
        }
        {
            let (gw, gb) = two_mut(grad, o.w_v..o.w_v + d * d, o.b_v..o.b_v + d);
            affine_back(&w[o.w_v..o.w_v + d * d], ut, &c.dv[span.clone()], gw, gb, &mut c.du[span.clone()]);
        }
        for j in 0..d {
            let du = gate(c.du[t * d + j], c.u_mask[t * d + j]);
            grad[o.w_in + j] += du * c.x[t];
            grad[o.b_in + j] += du;
        }
    }
}

/// Full-sequence re-statement (every token through every block), used as a test oracle.
#[cfg(test)]
pub(crate) fn reference_forward(p: &super::params::Params, x: &[f64]) -> f64 {
    let (n, d) = (x.len(), p.net.width);
    let t = |name: &str| p.tensor(name).unwrap().data;
    let pe = super::params::positional_encoding(n, d);
    let lin = |w: &[f64], b: &[f64], v: &[f64]| -> Vec<f64> {
        (0..b.len()).map(|j| b[j] + (0..v.len()).map(|m| w[j * v.len() + m] * v[m]).sum::<f64>()).collect()
    };
    let (w_in, b_in) = (t("w_in"), t("b_in"));
    let tokens: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..d).map(|j| w_in[j] * x[s] + b_in[j] + if p.positional_encoding { pe[s * d + j] } else { 0.0 }).collect()
        })
        .collect();
    let qs: Vec<_> = tokens.iter().map(|u| lin(&t("w_q"), &t("b_q"), u)).collect();
    let ks: Vec<_> = tokens.iter().map(|u| lin(&t("w_k"), &t("b_k"), u)).collect();
    let vs: Vec<_> = tokens.iter().map(|u| lin(&t("w_v"), &t("b_v"), u)).collect();
    let mut outs = Vec::new();
    for i in 0..n {
        let sc: Vec<f64> =
            ks.iter().map(|k| qs[i].iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()).collect();
        let z: f64 = sc.iter().map(|s| s.exp()).sum();
        let ctx: Vec<f64> = (0..d).map(|j| (0..n).map(|s| sc[s].exp() / z * vs[s][j]).sum()).collect();
        let a = lin(&t("w_o"), &t("b_o"), &ctx);
        let r1: Vec<f64> = tokens[i].iter().zip(&a).map(|(u, a)| u + a).collect();
        let h: Vec<f64> = lin(&t("w_1"), &t("b_1"), &r1).into_iter().map(hard_tanh).collect();
        let f2 = lin(&t("w_2"), &t("b_2"), &h);
        outs.push(r1.iter().zip(&f2).map(|(a, b)| a + b).collect::<Vec<f64>>());
    }
    lin(&t("w_head"), &t("b_head"), &outs[n - 1])[0]
}
