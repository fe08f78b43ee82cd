//! Deployment manifest: everything the integer engine needs, plus golden
//! vectors for bit-exact replay on the target.
//!
//! ```text
//! "EOFM" | version u16 | arch u8 | n u16 | width u16 | bits u8
//! grid counts: edges u8 | weights u8
//! grids: edges..., weights..., sigmoid, tanh   each (scale f64, zero_point i32, bitwidth u8, signed u8)
//! tensor_count u8  | (name_len u8, name, rows u32, cols u32, data i32 ...) ...
//! multiplier_count u8 | (mantissa i32, right_shift u8) ...
//! golden_count u8  | (input i32 x n, output i32) ...
//! crc32 u32 over every preceding byte
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use edgecast_core::infer::{Grids, IntTensor, IntegerModel};
use edgecast_core::model::{Arch, NetConfig};
use edgecast_core::quant::{FixedPointMultiplier, QuantParams};

use crate::codec::{Dec, Enc};
use crate::error::FormatError;

pub const MANIFEST_MAGIC: &[u8; 4] = b"EOFM";
pub const MANIFEST_VERSION: u16 = 1;
pub const GOLDEN_COUNT: usize = 16;
/// Largest relative gap between a stored multiplier and the ratio its scales imply.
pub const MULTIPLIER_TOLERANCE: f64 = 1.0 / (1u64 << 30) as f64;
const GOLDEN_SEED: u64 = 0x90_1d_e5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Golden {
    pub input: Vec<i32>,
    pub output: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub model: IntegerModel,
    pub golden: Vec<Golden>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub crc_ok: bool,
    pub max_multiplier_rel_error: f64,
    pub golden_total: usize,
    pub golden_mismatches: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.crc_ok && self.max_multiplier_rel_error <= MULTIPLIER_TOLERANCE && self.golden_mismatches == 0
    }
}

/// Golden inputs: the all-zero-point, all-minimum and all-maximum windows,
/// then uniform random codes.
fn golden_inputs(model: &IntegerModel) -> Vec<Vec<i32>> {
    let qp = model.input_qp();
    let n = model.net.n;
    let mut rng = ChaCha8Rng::seed_from_u64(GOLDEN_SEED);
    let mut out = vec![vec![qp.zero_point; n], vec![qp.qmin(); n], vec![qp.qmax(); n]];
    while out.len() < GOLDEN_COUNT {
        out.push((0..n).map(|_| rng.gen_range(qp.qmin()..=qp.qmax())).collect());
    }
    out
}

impl Manifest {
    pub fn build(model: IntegerModel) -> Result<Self, edgecast_core::infer::InferError> {
        let golden = golden_inputs(&model)
            .into_iter()
            .map(|input| Ok(Golden { output: model.run(&input)?, input }))
            .collect::<Result<Vec<_>, edgecast_core::infer::InferError>>()?;
        Ok(Self { model, golden })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut e = Enc::default();
        e.bytes(MANIFEST_MAGIC);
        e.u16(MANIFEST_VERSION);
        e.u8(m.net.arch.tag());
        e.u16(m.net.n as u16);
        e.u16(m.net.width as u16);
        e.u8(m.bits);
        e.u8(m.grids.edges.len() as u8);
        e.u8(m.grids.weights.len() as u8);
        let put_qp = |e: &mut Enc, q: &QuantParams| {
            e.f64(q.scale);
            e.i32(q.zero_point);
            e.u8(q.bitwidth);
            e.u8(q.signed as u8);
        };
        for q in m.grids.edges.iter().chain(&m.grids.weights).chain([&m.grids.sigmoid, &m.grids.tanh]) {
            put_qp(&mut e, q);
        }
        e.u8(m.tensors.len() as u8);
        for t in &m.tensors {
            e.str(&t.name);
            e.u32(t.rows as u32);
            e.u32(t.cols as u32);
            for &v in &t.data {
                e.i32(v);
            }
        }
        e.u8(m.multipliers.len() as u8);
        for mu in &m.multipliers {
            e.i32(mu.mantissa);
            e.u8(mu.right_shift);
        }
        e.u8(self.golden.len() as u8);
        for g in &self.golden {
            for &v in &g.input {
                e.i32(v);
            }
            e.i32(g.output);
        }
        e.finish()
    }

    /// Decode and validate. A CRC mismatch is reported before anything else is parsed.
    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut d = Dec::open(buf, MANIFEST_MAGIC)?;
        let version = d.u16()?;
        if version != MANIFEST_VERSION {
            return Err(FormatError::Version(version));
        }
        let tag = d.u8()?;
        let arch = Arch::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("architecture tag {tag}")))?;
        let net = NetConfig { arch, n: d.u16()? as usize, width: d.u16()? as usize };
        let bits = d.u8()?;
        let (ne, nw) = (d.u8()? as usize, d.u8()? as usize);
        let get_qp = |d: &mut Dec| -> Result<QuantParams, FormatError> {
            let (scale, zp, bw, signed) = (d.f64()?, d.i32()?, d.u8()?, d.u8()? != 0);
            QuantParams::new(scale, zp, bw, signed).map_err(|e| FormatError::Invalid(e.to_string()))
        };
        let edges = (0..ne).map(|_| get_qp(&mut d)).collect::<Result<Vec<_>, _>>()?;
        let weights = (0..nw).map(|_| get_qp(&mut d)).collect::<Result<Vec<_>, _>>()?;
        let sigmoid = get_qp(&mut d)?;
        let tanh = get_qp(&mut d)?;
        let nt = d.u8()? as usize;
        let mut tensors = Vec::with_capacity(nt);
        for _ in 0..nt {
            let name = d.str()?;
            let (rows, cols) = (d.u32()? as usize, d.u32()? as usize);
            let len = rows.checked_mul(cols).ok_or_else(|| FormatError::Invalid("tensor size".into()))?;
            if len > buf.len() {
                return Err(FormatError::Truncated(buf.len()));
            }
            let data = (0..len).map(|_| d.i32()).collect::<Result<Vec<_>, _>>()?;
            tensors.push(IntTensor { name, rows, cols, data });
        }
        let nm = d.u8()? as usize;
        let mut multipliers = Vec::with_capacity(nm);
        for _ in 0..nm {
            multipliers.push(FixedPointMultiplier { mantissa: d.i32()?, right_shift: d.u8()? });
        }
        let ng = d.u8()? as usize;
        let mut golden = Vec::with_capacity(ng);
        for _ in 0..ng {
            let input = (0..net.n).map(|_| d.i32()).collect::<Result<Vec<_>, _>>()?;
            golden.push(Golden { input, output: d.i32()? });
        }
        d.end()?;
        let grids = Grids { edges, weights, sigmoid, tanh };
        let model = IntegerModel::from_parts(net, bits, grids, tensors, multipliers)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(Self { model, golden })
    }

    /// Re-derive every multiplier from the stored scales and replay the golden vectors.
    pub fn verify(&self) -> VerifyReport {
        let m = &self.model;
        let max_multiplier_rel_error = m
            .grids
            .multiplier_ratios(&m.net)
            .iter()
            .zip(&m.multipliers)
            .map(|(r, mu)| ((mu.to_real() - r) / r).abs())
            .fold(0.0, f64::max);
        let golden_mismatches = self.golden.iter().filter(|g| m.run(&g.input).ok() != Some(g.output)).count();
        VerifyReport { crc_ok: true, max_multiplier_rel_error, golden_total: self.golden.len(), golden_mismatches }
    }
}
