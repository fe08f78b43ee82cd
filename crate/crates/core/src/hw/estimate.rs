use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{
    calibrate, check_feasibility, reference_rows, CostEstimate, CostModelParams, Feasibility, HardwareBudget, HwError,
    ResourceEstimate,
};
use crate::model::{Arch, NetConfig};

/// One BRAM18 primitive.
pub const BRAM_BLOCK_BITS: u64 = 18 * 1024;
/// Memories at or below this size live in distributed (LUT) RAM.
pub const LUTRAM_MAX_BITS: u64 = 1024;
/// Bits of distributed RAM per LUT.
const LUTRAM_BITS_PER_LUT: u64 = 64;
/// DSPs the LSTM datapath instantiates regardless of width.
const LSTM_DSPS: u32 = 11;
/// Base DSP count of the attention datapath before width-dependent lanes.
const TRANSFORMER_BASE_DSPS: u32 = 18;

/// Multiply-accumulates per inference.
pub fn count_macs(net: &NetConfig) -> u64 {
    let (n, w) = (net.n as u64, net.width as u64);
    match net.arch {
        // Four gates over [h; x] with bias, plus the Hadamard updates, then the head.
        Arch::Lstm => n * (4 * w * (w + 1) + 4 * w) + w,
        // Input projection, Q/K/V, scores and context, FFN (d -> 4d -> d), head.
        Arch::Transformer => n * w + 3 * n * w * w + 2 * n * n * w + 8 * n * w * w + w,
    }
}

/// Sequential control steps: one per cell step, one per attention pair.
pub fn op_count(net: &NetConfig) -> u64 {
    let n = net.n as u64;
    match net.arch {
        Arch::Lstm => n,
        Arch::Transformer => n * n,
    }
}

/// DSP slices the datapath asks for.
pub fn dsp_demand(net: &NetConfig) -> u32 {
    if net.width == 0 {
        return 0;
    }
    match net.arch {
        Arch::Lstm => LSTM_DSPS,
        Arch::Transformer => TRANSFORMER_BASE_DSPS + (net.width as u32).div_ceil(8),
    }
}

/// Element counts of every on-chip memory: parameters then activation buffers.
pub fn memory_sizes(net: &NetConfig) -> Vec<u64> {
    let (n, w) = (net.n as u64, net.width as u64);
    match net.arch {
        Arch::Lstm => vec![4 * w * (w + 1), 4 * w, w, 1, n, w, w, 4 * w],
        Arch::Transformer => {
            let mut m = vec![w, w];
            for _ in 0..4 {
                m.extend([w * w, w]);
            }
            m.extend([4 * w * w, 4 * w, 4 * w * w, w, w, 1]);
            m.extend([n, n * w, n * w, n * w, n * w, n * n, n * w, 4 * n * w, n * w]);
            m
        }
    }
}

/// Block RAM primitives and distributed-RAM LUTs for a set of memories.
pub(crate) fn memory_cost(net: &NetConfig, bits: u8) -> (u64, f64) {
    let mut blocks = 0;
    let mut lutram_bits = 0;
    for m in memory_sizes(net) {
        let b = m * bits as u64;
        if b > LUTRAM_MAX_BITS {
            blocks += b.div_ceil(BRAM_BLOCK_BITS);
        }
        // Large memories still need a LUT-RAM staging buffer.
        lutram_bits += b.min(LUTRAM_MAX_BITS);
    }
    (blocks, lutram_bits as f64 / LUTRAM_BITS_PER_LUT as f64)
}

/// Full hardware verdict for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwEstimate {
    pub resources: ResourceEstimate,
    pub cost: CostEstimate,
    pub feasibility: Feasibility,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub params: CostModelParams,
    pub budget: HardwareBudget,
}

impl CostModel {
    pub fn new(params: CostModelParams, budget: HardwareBudget) -> Self {
        Self { params, budget }
    }

    /// Model fitted on the shipped reference table, default device.
    pub fn calibrated() -> &'static CostModel {
        static MODEL: OnceLock<CostModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let rows = reference_rows().expect("shipped table parses");
            let (params, _) = calibrate(&rows, &HardwareBudget::default()).expect("shipped table calibrates");
            CostModel::new(params, HardwareBudget::default())
        })
    }

    pub fn with_budget(&self, budget: HardwareBudget) -> Self {
        Self { params: self.params.clone(), budget }
    }

    pub fn active_dsps(&self, net: &NetConfig) -> u32 {
        dsp_demand(net).min(self.budget.dsp_total)
    }

    pub fn lut_count(&self, net: &NetConfig, bits: u8) -> f64 {
        let p = self.params.arch(net.arch);
        let (_, lutram) = memory_cost(net, bits);
        p.lut_base + p.lut_per_width_bit * (net.width as f64 * bits as f64) + lutram
    }

    pub fn resources(&self, net: &NetConfig, bits: u8) -> ResourceEstimate {
        let (blocks, _) = memory_cost(net, bits);
        ResourceEstimate {
            luts_pct: 100.0 * self.lut_count(net, bits) / self.budget.luts_total as f64,
            bram_pct: 100.0 * blocks as f64 / self.budget.bram_blocks() as f64,
            dsp_pct: 100.0 * self.active_dsps(net) as f64 / self.budget.dsp_total as f64,
        }
    }

    pub fn cycles(&self, net: &NetConfig) -> f64 {
        let p = self.params.arch(net.arch);
        let lanes = self.active_dsps(net).max(1) as f64;
        p.eta * count_macs(net) as f64 / lanes + p.overhead_cycles * op_count(net) as f64
    }

    pub fn latency_ms(&self, net: &NetConfig) -> f64 {
        self.cycles(net) / self.budget.clock_hz * 1000.0
    }

    pub fn power_mw(&self, r: &ResourceEstimate) -> f64 {
        let p = &self.params.power;
        p.p0_mw + p.per_lut_pct * r.luts_pct + p.per_bram_pct * r.bram_pct + p.per_dsp_pct * r.dsp_pct
    }

    pub fn estimate(&self, net: &NetConfig, bits: u8) -> Result<HwEstimate, HwError> {
        let resources = self.resources(net, bits);
        let cost = CostEstimate::new(self.power_mw(&resources), self.latency_ms(net))?;
        Ok(HwEstimate { resources, cost, feasibility: check_feasibility(&resources), macs: count_macs(net) })
    }
}
