//! Single-layer LSTM with HardSigmoid/HardTanh gates and a linear head on the
//! final hidden state.

use super::plan::{lstm_edge as e, ActFq, Observed};
use crate::quant::{hard_sigmoid, hard_sigmoid_grad, hard_tanh, hard_tanh_grad};

/// Offsets into the flat parameter vector (see [`super::params::layout`]).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub w: [usize; 4],
    pub b: [usize; 4],
    pub w_out: usize,
    pub b_out: usize,
}

impl Offsets {
    pub fn new(h: usize) -> Self {
        let wsz = h * (h + 1);
        let w = [0, wsz, 2 * wsz, 3 * wsz];
        let b0 = 4 * wsz;
        let b = [b0, b0 + h, b0 + 2 * h, b0 + 3 * h];
        Self { w, b, w_out: b0 + 4 * h, b_out: b0 + 5 * h }
    }
}

/// Activations saved for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    h: usize,
    n: usize,
    z: Vec<f64>,
    pre: Vec<f64>,
    pre_mask: Vec<bool>,
    gate: Vec<f64>,
    c: Vec<f64>,
    c_mask: Vec<bool>,
    tc: Vec<f64>,
    hs: Vec<f64>,
    h_mask: Vec<bool>,
    y_mask: bool,
    dh: Vec<f64>,
    dc: Vec<f64>,
    dpre: Vec<f64>,
}

impl LstmCache {
    fn resize(&mut self, n: usize, h: usize) {
        self.n = n;
        self.h = h;
        self.z.resize(n * (h + 1), 0.0);
        self.pre.resize(n * 4 * h, 0.0);
        self.pre_mask.resize(n * 4 * h, true);
        self.gate.resize(n * 4 * h, 0.0);
        self.c.resize((n + 1) * h, 0.0);
        self.c_mask.resize(n * h, true);
        self.tc.resize(n * h, 0.0);
        self.hs.resize((n + 1) * h, 0.0);
        self.h_mask.resize(n * h, true);
        self.dh.resize(h + 1, 0.0);
        self.dc.resize(h, 0.0);
        self.dpre.resize(4 * h, 0.0);
    }

    /// Regime of every piecewise-linear unit, for finite-difference checks.
    pub(crate) fn signature(&self) -> Vec<i8> {
        let mut sig = Vec::with_capacity(self.pre.len() + self.c.len());
        for (k, &p) in self.pre.iter().enumerate() {
            let gate = (k / self.h) % 4;
            let lim = if gate == 2 { 1.0 } else { 2.0 };
            sig.push(regime(p, lim));
        }
        for &c in &self.c[self.h..] {
            sig.push(regime(c, 1.0));
        }
        sig
    }
}

fn regime(x: f64, lim: f64) -> i8 {
    if x <= -lim {
        -1
    } else if x >= lim {
        1
    } else {
        0
    }
}

#[inline]
fn quant(act: Option<&ActFq>, edge: usize, v: f64) -> (f64, bool) {
    match act {
        Some(a) => a.edges[edge].apply(v),
        None => (v, true),
    }
}

/// Forward one window. `w` holds the (possibly fake-quantized) parameters.
pub fn forward(
    w: &[f64],
    h: usize,
    act: Option<&ActFq>,
    x: &[f64],
    mut obs: Option<&mut Observed>,
    cache: &mut LstmCache,
) -> f64 {
    let n = x.len();
    cache.resize(n, h);
    let off = Offsets::new(h);
    let hz = h + 1;
    cache.hs[..h].fill(0.0);
    cache.c[..h].fill(0.0);
    for t in 0..n {
        {
            let (prev, _) = cache.hs.split_at(t * h + h);
            let zt = &mut cache.z[t * hz..(t + 1) * hz];
            zt[..h].copy_from_slice(&prev[t * h..]);
            if let Some(o) = obs.as_deref_mut() {
                o.see(e::Z, x[t]);
            }
            zt[h] = quant(act, e::Z, x[t]).0;
        }
        let zt = &cache.z[t * hz..(t + 1) * hz];
        for k in 0..4 {
            for j in 0..h {
                let row = &w[off.w[k] + j * hz..off.w[k] + (j + 1) * hz];
                let mut s = w[off.b[k] + j];
                for (a, b) in row.iter().zip(zt) {
                    s += a * b;
                }
                if let Some(o) = obs.as_deref_mut() {
                    o.see(e::PRE[k], s);
                }
                let (p, m) = quant(act, e::PRE[k], s);
                let idx = t * 4 * h + k * h + j;
                cache.pre[idx] = p;
                cache.pre_mask[idx] = m;
                cache.gate[idx] = match (k, act) {
                    (2, None) => hard_tanh(p),
                    (2, Some(a)) => a.tanh.apply(hard_tanh(p)).0,
                    (_, None) => hard_sigmoid(p),
                    (_, Some(a)) => a.sigmoid.apply(hard_sigmoid(p)).0,
                };
            }
        }
        for j in 0..h {
            let g = &cache.gate[t * 4 * h..(t + 1) * 4 * h];
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let c_raw = f * cache.c[t * h + j] + i * gg;
            if let Some(ob) = obs.as_deref_mut() {
                ob.see(e::C, c_raw);
            }
            let (c, cm) = quant(act, e::C, c_raw);
            cache.c[(t + 1) * h + j] = c;
            cache.c_mask[t * h + j] = cm;
            let tc = match act {
                Some(a) => a.tanh.apply(hard_tanh(c)).0,
                None => hard_tanh(c),
            };
            cache.tc[t * h + j] = tc;
            let h_raw = o * tc;
            if let Some(ob) = obs.as_deref_mut() {
                ob.see(e::Z, h_raw);
            }
            let (hv, hm) = quant(act, e::Z, h_raw);
            cache.hs[(t + 1) * h + j] = hv;
            cache.h_mask[t * h + j] = hm;
        }
    }
    let hn = &cache.hs[n * h..(n + 1) * h];
    let mut y = w[off.b_out];
    for (a, b) in w[off.w_out..off.w_out + h].iter().zip(hn) {
        y += a * b;
    }
    if let Some(ob) = obs {
        ob.see(e::Y, y);
    }
    let (y, ym) = quant(act, e::Y, y);
    cache.y_mask = ym;
    y
}

/// Accumulate `dL/dw` given `dL/dy` for the window last passed to [`forward`].
pub fn backward(w: &[f64], cache: &mut LstmCache, dy: f64, grad: &mut [f64]) {
    let (n, h) = (cache.n, cache.h);
    let off = Offsets::new(h);
    let hz = h + 1;
    let dy = if cache.y_mask { dy } else { 0.0 };
    grad[off.b_out] += dy;
    for j in 0..h {
        grad[off.w_out + j] += dy * cache.hs[n * h + j];
        cache.dh[j] = dy * w[off.w_out + j];
    }
    cache.dc.fill(0.0);
    for t in (0..n).rev() {
        let g = &cache.gate[t * 4 * h..(t + 1) * 4 * h];
        let pre = &cache.pre[t * 4 * h..(t + 1) * 4 * h];
        let pmask = &cache.pre_mask[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let dh = if cache.h_mask[t * h + j] { cache.dh[j] } else { 0.0 };
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tc[t * h + j];
            let c = cache.c[(t + 1) * h + j];
            let d_o = dh * tc;
            let dtc = dh * o;
            let dcq = cache.dc[j] + dtc * hard_tanh_grad(c);
            let dcr = if cache.c_mask[t * h + j] { dcq } else { 0.0 };
            let c_prev = cache.c[t * h + j];
            let di = dcr * gg;
            let df = dcr * c_prev;
            let dg = dcr * i;
            cache.dc[j] = dcr * f;
            let m = |k: usize| if pmask[k * h + j] { 1.0 } else { 0.0 };
            cache.dpre[j] = di * hard_sigmoid_grad(pre[j]) * m(0);
            cache.dpre[h + j] = df * hard_sigmoid_grad(pre[h + j]) * m(1);
            cache.dpre[2 * h + j] = dg * hard_tanh_grad(pre[2 * h + j]) * m(2);
            cache.dpre[3 * h + j] = d_o * hard_sigmoid_grad(pre[3 * h + j]) * m(3);
        }
        let zt = &cache.z[t * hz..(t + 1) * hz];
        cache.dh.fill(0.0);
        for k in 0..4 {
            for j in 0..h {
                let dp = cache.dpre[k * h + j];
                if dp == 0.0 {
                    continue;
                }
                grad[off.b[k] + j] += dp;
                let base = off.w[k] + j * hz;
                let row = &w[base..base + hz];
                let grow = &mut grad[base..base + hz];
                for m in 0..hz {
                    grow[m] += dp * zt[m];
                    cache.dh[m] += dp * row[m];
                }
            }
        }
    }
}

/// Straightforward re-statement of the floating-point cell, used as a test oracle.
#[cfg(test)]
pub(crate) fn reference_forward(p: &super::params::Params, x: &[f64]) -> f64 {
    let h = p.net.width;
    let get = |name: &str| p.tensor(name).unwrap().data;
    let (wi, wf, wg, wo) = (get("w_i"), get("w_f"), get("w_g"), get("w_o"));
    let (bi, bf, bg, bo) = (get("b_i"), get("b_f"), get("b_g"), get("b_o"));
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    for &xt in x {
        let mut z = hs.clone();
        z.push(xt);
        let lin = |w: &[f64], b: &[f64], j: usize| b[j] + (0..=h).map(|m| w[j * (h + 1) + m] * z[m]).sum::<f64>();
        let mut nh = vec![0.0; h];
        for j in 0..h {
            let i = hard_sigmoid(lin(&wi, &bi, j));
            let f = hard_sigmoid(lin(&wf, &bf, j));
            let g = hard_tanh(lin(&wg, &bg, j));
            let o = hard_sigmoid(lin(&wo, &bo, j));
            cs[j] = f * cs[j] + i * g;
            nh[j] = o * hard_tanh(cs[j]);
        }
        hs = nh;
    }
    get("b_out")[0] + get("w_out").iter().zip(&hs).map(|(a, b)| a * b).sum::<f64>()
}
