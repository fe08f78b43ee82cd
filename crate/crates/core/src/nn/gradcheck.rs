//! Analytic gradients against central finite differences.

use serde::{Deserialize, Serialize};

use super::{backward, forward, Params, Workspace};
use crate::model::NetConfig;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor: gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;
const MIN_STEP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst entry.
    pub worst_tensor: String,
    pub checked: usize,
}

#[inline]
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Central difference of `f` at `x` along coordinate `i`, shrinking the step
/// while `regime` reports that the two probes straddle a kink.
pub fn central_difference<F, R>(mut f: F, mut regime: R, x: &mut [f64], i: usize) -> f64
where
    F: FnMut(&[f64]) -> f64,
    R: FnMut(&[f64]) -> Vec<i8>,
{
    let x0 = x[i];
    let mut h = FD_STEP;
    loop {
        x[i] = x0 + h;
        let fp = f(x);
        let rp = regime(x);
        x[i] = x0 - h;
        let fm = f(x);
        let rm = regime(x);
        x[i] = x0;
        if rp == rm || h <= MIN_STEP {
            return (fp - fm) / (2.0 * h);
        }
        h /= 10.0;
    }
}

/// Squared-error loss on one sample: analytic gradient vs finite differences
/// over every parameter, in floating point at the given seed's initialization.
pub fn gradient_check(net: NetConfig, seed: u64, x: &[f64], target: f64) -> GradReport {
    let p = Params::init(net, seed);
    let mut ws = Workspace::new();
    let y = forward(&p, &p.data, None, x, None, &mut ws);
    let mut grad = vec![0.0; p.data.len()];
    backward(&p, &p.data, 2.0 * (y - target), &mut ws, &mut grad);

    let mut w = p.data.clone();
    let mut worst = (0.0, String::new());
    let arch = net.arch;
    let specs = super::layout(&net);
    for s in &specs {
        for i in s.range() {
            let mut loss_ws = Workspace::new();
            let mut sig_ws = Workspace::new();
            let fd = central_difference(
                |w| {
                    let y = forward(&p, w, None, x, None, &mut loss_ws);
                    (y - target) * (y - target)
                },
                |w| {
                    forward(&p, w, None, x, None, &mut sig_ws);
                    sig_ws.signature(arch)
                },
                &mut w,
                i,
            );
            let e = rel_error(grad[i], fd);
            if e > worst.0 {
                worst = (e, s.name.to_string());
            }
        }
    }
    GradReport { max_rel_error: worst.0, worst_tensor: worst.1, checked: p.data.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let a = [0.3, -1.2, 2.5, 0.01];
        let mut x = vec![0.7, 0.1, -0.4, 3.0];
        for i in 0..4 {
            let fd = central_difference(
                |x| x.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>() + 0.9,
                |_| Vec::new(),
                &mut x,
                i,
            );
            assert!(rel_error(a[i], fd) <= 1e-6);
        }
    }

    #[test]
    fn kink_shrinks_step() {
        let mut x = vec![1.0 + 5e-5];
        let fd = central_difference(|x| x[0].clamp(-1.0, 1.0), |x| vec![(x[0] >= 1.0) as i8], &mut x, 0);
        assert_eq!(fd, 0.0);
    }

    #[test]
    fn small_models_pass() {
        let x = [0.4, -0.9, 1.3, 0.2, -0.1, 0.8];
        for net in [NetConfig::lstm(6, 8), NetConfig::transformer(6, 8)] {
            let r = gradient_check(net, 7, &x, 0.3);
            assert!(r.max_rel_error <= 1e-4, "{net:?} {r:?}");
        }
    }
}
