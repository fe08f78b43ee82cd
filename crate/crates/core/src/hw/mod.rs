//! Analytical resource, latency and power model for a small FPGA target.
//!
//! The model is a calibrated surrogate of a sequential-MAC datapath with
//! DSP-limited parallelism; it is not cycle-accurate.

mod calibrate;
mod estimate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate, reference_rows, CalibrationReport, RowResidual, TableRow, REFERENCE_TABLE};
pub use estimate::{
    count_macs, dsp_demand, memory_sizes, op_count, CostModel, HwEstimate, BRAM_BLOCK_BITS, LUTRAM_MAX_BITS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HwError {
    #[error("{what} must be finite and non-negative, got {value}")]
    InvalidInput { what: &'static str, value: f64 },
    #[error("calibration needs at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("calibration system for {0} is singular")]
    Singular(String),
    #[error("calibration table: {0}")]
    Table(String),
}

/// Device limits. Defaults describe a Spartan-7 XC7S15 at 100 MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareBudget {
    pub luts_total: u32,
    pub bram_kbits_total: u32,
    pub dsp_total: u32,
    pub clock_hz: f64,
}

impl Default for HardwareBudget {
    fn default() -> Self {
        Self { luts_total: 8_000, bram_kbits_total: 360, dsp_total: 20, clock_hz: 1.0e8 }
    }
}

impl HardwareBudget {
    pub fn bram_blocks(&self) -> u32 {
        self.bram_kbits_total * 1024 / BRAM_BLOCK_BITS as u32
    }
}

/// Utilization as a percentage of the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub luts_pct: f64,
    pub bram_pct: f64,
    pub dsp_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Luts,
    Bram,
    Dsp,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Luts => "LUT",
            Resource::Bram => "BRAM",
            Resource::Dsp => "DSP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub resource: Resource,
    pub pct: f64,
    /// Percentage points above the budget.
    pub excess_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn total_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.excess_pct).sum()
    }
}

/// Feasible iff every resource is at most 100 % (boundary inclusive). NaN
/// utilization counts as a violation.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn check_feasibility(est: &ResourceEstimate) -> Feasibility {
    let violations: Vec<Violation> =
        [(Resource::Luts, est.luts_pct), (Resource::Bram, est.bram_pct), (Resource::Dsp, est.dsp_pct)]
            .into_iter()
            .filter(|&(_, pct)| !(pct <= 100.0))
            .map(|(resource, pct)| Violation { resource, pct, excess_pct: pct - 100.0 })
            .collect();
    Feasibility { feasible: violations.is_empty(), violations }
}

/// `E[mJ] = P[mW] * T[ms] / 1000`.
pub fn energy(power_mw: f64, latency_ms: f64) -> Result<f64, HwError> {
    check_non_negative("power", power_mw)?;
    check_non_negative("latency", latency_ms)?;
    Ok(power_mw * latency_ms / 1000.0)
}

fn check_non_negative(what: &'static str, value: f64) -> Result<(), HwError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(HwError::InvalidInput { what, value })
    }
}

/// Latency, power and the energy they imply. Energy is always derived, never stored independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCost")]
pub struct CostEstimate {
    latency_ms: f64,
    power_mw: f64,
    energy_mj: f64,
}

#[derive(Deserialize)]
struct RawCost {
    latency_ms: f64,
    power_mw: f64,
    energy_mj: f64,
}

impl TryFrom<RawCost> for CostEstimate {
    type Error = HwError;
    fn try_from(r: RawCost) -> Result<Self, Self::Error> {
        let c = CostEstimate::new(r.power_mw, r.latency_ms)?;
        if c.energy_mj != r.energy_mj {
            return Err(HwError::InvalidInput { what: "stored energy", value: r.energy_mj });
        }
        Ok(c)
    }
}

impl CostEstimate {
    pub fn new(power_mw: f64, latency_ms: f64) -> Result<Self, HwError> {
        let energy_mj = energy(power_mw, latency_ms)?;
        Ok(Self { latency_ms, power_mw, energy_mj })
    }

    pub fn latency_ms(&self) -> f64 {
        self.latency_ms
    }

    pub fn power_mw(&self) -> f64 {
        self.power_mw
    }

    pub fn energy_mj(&self) -> f64 {
        self.energy_mj
    }
}

/// Per-architecture fitted constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchParams {
    /// Cycles per MAC per active DSP.
    pub eta: f64,
    /// Control cycles per sequential step (cell step or attention pair).
    pub overhead_cycles: f64,
    /// LUTs used by a zero-size datapath.
    pub lut_base: f64,
    /// LUTs per unit of `width * bits`.
    pub lut_per_width_bit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub p0_mw: f64,
    pub per_lut_pct: f64,
    pub per_bram_pct: f64,
    pub per_dsp_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelParams {
    pub lstm: ArchParams,
    pub transformer: ArchParams,
    pub power: PowerParams,
    /// Where the constants came from.
    pub provenance: String,
}

impl CostModelParams {
    pub fn arch(&self, arch: crate::model::Arch) -> &ArchParams {
        match arch {
            crate::model::Arch::Lstm => &self.lstm,
            crate::model::Arch::Transformer => &self.transformer,
        }
    }
}
