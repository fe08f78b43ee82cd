//! Least-squares fit of the cost model to measured rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::estimate::memory_cost;
use super::{ArchParams, CostModel, CostModelParams, HardwareBudget, HwError, PowerParams};
use crate::hw::{count_macs, dsp_demand, op_count};
use crate::model::{Arch, NetConfig};

/// Six measured deployments: configuration, accuracy and post-synthesis figures.
pub const REFERENCE_TABLE: &str = include_str!("../../data/table1.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: Arch,
    pub n: usize,
    pub b: u8,
    pub bs: usize,
    pub lr_e4: f64,
    pub width: usize,
    pub mse_fp32: f64,
    pub mse_quantized: f64,
    pub variance_pct: f64,
    pub luts_pct: f64,
    pub brams_pct: f64,
    pub dsps_pct: f64,
    pub energy_mj: f64,
    pub power_mw: f64,
    pub latency_ms: f64,
}

impl TableRow {
    pub fn net(&self) -> NetConfig {
        NetConfig { arch: self.model, n: self.n, width: self.width }
    }
}

pub fn parse_rows(csv_text: &str) -> Result<Vec<TableRow>, HwError> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<TableRow>, _>>()
        .map_err(|e| HwError::Table(e.to_string()))
}

pub fn reference_rows() -> Result<Vec<TableRow>, HwError> {
    parse_rows(REFERENCE_TABLE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResidual {
    pub model: Arch,
    pub n: usize,
    pub width: usize,
    pub power_mw: f64,
    pub power_fit_mw: f64,
    pub latency_ms: f64,
    pub latency_fit_ms: f64,
    pub luts_pct: f64,
    pub luts_fit_pct: f64,
}

impl RowResidual {
    pub fn power_rel(&self) -> f64 {
        (self.power_fit_mw - self.power_mw) / self.power_mw
    }

    pub fn latency_rel(&self) -> f64 {
        (self.latency_fit_ms - self.latency_ms) / self.latency_ms
    }

    pub fn luts_rel(&self) -> f64 {
        (self.luts_fit_pct - self.luts_pct) / self.luts_pct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub rows: Vec<RowResidual>,
    /// Coefficients that came out negative and were pinned to zero.
    pub clamped: Vec<String>,
}

/// Non-negative least squares by active-set elimination: solve, drop the
/// most negative coefficient, repeat.
fn nnls(x: &[Vec<f64>], y: &[f64], names: &[&str], what: &str) -> Result<(Vec<f64>, Vec<String>), HwError> {
    let cols = names.len();
    let mut active: Vec<usize> = (0..cols).collect();
    let mut clamped = Vec::new();
    loop {
        if active.is_empty() {
            return Ok((vec![0.0; cols], clamped));
        }
        if x.len() < active.len() {
            return Err(HwError::Singular(what.to_string()));
        }
        // Column scaling keeps the rank test meaningful when features differ by orders of magnitude.
        let scale: Vec<f64> =
            active.iter().map(|&c| x.iter().map(|r| r[c].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)).collect();
        let a = DMatrix::from_fn(x.len(), active.len(), |i, j| x[i][active[j]] / scale[j]);
        let b = DVector::from_column_slice(y);
        let svd = a.svd(true, true);
        let tol = svd.singular_values.max() * 1e-10;
        if svd.rank(tol) < active.len() {
            return Err(HwError::Singular(what.to_string()));
        }
        let sol = svd.solve(&b, tol).map_err(|e| HwError::Singular(format!("{what}: {e}")))?;
        let coef: Vec<f64> = sol.iter().zip(&scale).map(|(v, s)| v / s).collect();
        match coef.iter().enumerate().filter(|(_, &c)| c < 0.0).min_by(|a, b| a.1.total_cmp(b.1)) {
            Some((j, _)) => {
                clamped.push(format!("{what}.{}", names[active[j]]));
                active.remove(j);
            }
            None => {
                let mut full = vec![0.0; cols];
                for (j, &c) in active.iter().enumerate() {
                    full[c] = coef[j];
                }
                return Ok((full, clamped));
            }
        }
    }
}

fn fit_arch(rows: &[&TableRow], arch: Arch, budget: &HardwareBudget) -> Result<(ArchParams, Vec<String>), HwError> {
    let label = arch.to_string();
    let mut lat_x = Vec::new();
    let mut lat_y = Vec::new();
    let mut lut_x = Vec::new();
    let mut lut_y = Vec::new();
    for r in rows {
        let net = r.net();
        let lanes = dsp_demand(&net).min(budget.dsp_total).max(1) as f64;
        lat_x.push(vec![count_macs(&net) as f64 / lanes, op_count(&net) as f64]);
        lat_y.push(r.latency_ms / 1000.0 * budget.clock_hz);
        let (_, lutram) = memory_cost(&net, r.b);
        lut_x.push(vec![1.0, (r.width * r.b as usize) as f64]);
        lut_y.push(r.luts_pct / 100.0 * budget.luts_total as f64 - lutram);
    }
    let (lat, mut clamped) = nnls(&lat_x, &lat_y, &["eta", "overhead_cycles"], &format!("{label}.latency"))?;
    let (lut, c2) = nnls(&lut_x, &lut_y, &["lut_base", "lut_per_width_bit"], &format!("{label}.luts"))?;
    clamped.extend(c2);
    Ok((ArchParams { eta: lat[0], overhead_cycles: lat[1], lut_base: lut[0], lut_per_width_bit: lut[1] }, clamped))
}

/// Fit latency and LUT constants per architecture and one shared power model.
pub fn calibrate(rows: &[TableRow], budget: &HardwareBudget) -> Result<(CostModelParams, CalibrationReport), HwError> {
    if rows.len() < 4 {
        return Err(HwError::TooFewRows { need: 4, got: rows.len() });
    }
    let mut clamped = Vec::new();
    let mut per_arch = Vec::new();
    for arch in [Arch::Lstm, Arch::Transformer] {
        let sub: Vec<&TableRow> = rows.iter().filter(|r| r.model == arch).collect();
        let (p, c) = fit_arch(&sub, arch, budget)?;
        clamped.extend(c);
        per_arch.push(p);
    }
    let px: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r.luts_pct, r.brams_pct, r.dsps_pct]).collect();
    let py: Vec<f64> = rows.iter().map(|r| r.power_mw).collect();
    let (pw, c) = nnls(&px, &py, &["p0_mw", "per_lut_pct", "per_bram_pct", "per_dsp_pct"], "power")?;
    clamped.extend(c);
    for c in &clamped {
        log::info!("calibration: {c} fitted negative, clamped to 0");
    }
    let params = CostModelParams {
        lstm: per_arch[0],
        transformer: per_arch[1],
        power: PowerParams { p0_mw: pw[0], per_lut_pct: pw[1], per_bram_pct: pw[2], per_dsp_pct: pw[3] },
        provenance: format!("least-squares fit on {} reference rows", rows.len()),
    };
    let model = CostModel::new(params.clone(), *budget);
    let residuals = rows
        .iter()
        .map(|r| {
            let net = r.net();
            let res = super::ResourceEstimate { luts_pct: r.luts_pct, bram_pct: r.brams_pct, dsp_pct: r.dsps_pct };
            RowResidual {
                model: r.model,
                n: r.n,
                width: r.width,
                power_mw: r.power_mw,
                power_fit_mw: model.power_mw(&res),
                latency_ms: r.latency_ms,
                latency_fit_ms: model.latency_ms(&net),
                luts_pct: r.luts_pct,
                luts_fit_pct: model.resources(&net, r.b).luts_pct,
            }
        })
        .collect();
    Ok((params, CalibrationReport { rows: residuals, clamped }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_rows() {
        let rows = reference_rows().unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.model == Arch::Lstm).count(), 3);
        for r in &rows {
            assert!((r.power_mw * r.latency_ms / 1000.0 - r.energy_mj).abs() <= 0.0005, "{r:?}");
        }
    }

    #[test]
    fn fit_residuals_on_reference() {
        let (params, rep) = calibrate(&reference_rows().unwrap(), &HardwareBudget::default()).unwrap();
        for r in &rep.rows {
            assert!(r.power_rel().abs() <= 0.10, "{r:?}");
            assert!(r.latency_rel().abs() <= 0.35, "{r:?}");
        }
        assert!(rep.clamped.iter().any(|c| c == "power.per_dsp_pct"), "{:?}", rep.clamped);
        assert_eq!(params.power.per_dsp_pct, 0.0);
        for v in [params.lstm.eta, params.transformer.eta, params.power.p0_mw, params.power.per_lut_pct] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn too_few_rows_and_singular() {
        let rows = reference_rows().unwrap();
        assert!(matches!(calibrate(&rows[..3], &HardwareBudget::default()), Err(HwError::TooFewRows { .. })));
        let mut same = rows.clone();
        for r in same.iter_mut().filter(|r| r.model == Arch::Lstm) {
            *r = rows[3].clone();
        }
        assert!(matches!(calibrate(&same, &HardwareBudget::default()), Err(HwError::Singular(_))));
    }

    #[test]
    fn recovers_model_generated_table() {
        let budget = HardwareBudget::default();
        let truth = CostModelParams {
            lstm: ArchParams { eta: 4.0, overhead_cycles: 120.0, lut_base: 2000.0, lut_per_width_bit: 3.0 },
            transformer: ArchParams { eta: 17.0, overhead_cycles: 90.0, lut_base: 2600.0, lut_per_width_bit: 11.0 },
            power: PowerParams { p0_mw: 40.0, per_lut_pct: 0.2, per_bram_pct: 0.1, per_dsp_pct: 0.05 },
            provenance: String::new(),
        };
        let model = CostModel::new(truth.clone(), budget);
        let configs = [
            (NetConfig::lstm(6, 16), 8),
            (NetConfig::lstm(12, 8), 6),
            (NetConfig::lstm(24, 32), 4),
            (NetConfig::transformer(6, 8), 6),
            (NetConfig::transformer(12, 16), 8),
            (NetConfig::transformer(24, 40), 8),
        ];
        let rows: Vec<TableRow> = configs
            .iter()
            .map(|(net, b)| {
                let e = model.estimate(net, *b).unwrap();
                TableRow {
                    model: net.arch,
                    n: net.n,
                    b: *b,
                    bs: 64,
                    lr_e4: 1.0,
                    width: net.width,
                    mse_fp32: 0.0,
                    mse_quantized: 0.0,
                    variance_pct: 0.0,
                    luts_pct: e.resources.luts_pct,
                    brams_pct: e.resources.bram_pct,
                    dsps_pct: e.resources.dsp_pct,
                    energy_mj: e.cost.energy_mj(),
                    power_mw: e.cost.power_mw(),
                    latency_ms: e.cost.latency_ms(),
                }
            })
            .collect();
        let (fit, rep) = calibrate(&rows, &budget).unwrap();
        assert!(rep.clamped.is_empty());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1e-3);
        for (a, b) in [(fit.lstm, truth.lstm), (fit.transformer, truth.transformer)] {
            assert!(close(a.eta, b.eta) && close(a.overhead_cycles, b.overhead_cycles), "{a:?}");
            assert!(close(a.lut_base, b.lut_base) && close(a.lut_per_width_bit, b.lut_per_width_bit), "{a:?}");
        }
        let (a, b) = (fit.power, truth.power);
        assert!(close(a.p0_mw, b.p0_mw) && close(a.per_lut_pct, b.per_lut_pct), "{a:?}");
        assert!(close(a.per_bram_pct, b.per_bram_pct) && close(a.per_dsp_pct, b.per_dsp_pct), "{a:?}");
    }
}
