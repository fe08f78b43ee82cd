//! Synthetic overflow-basin levels.
//!
//! `level_t = base + diurnal_t + r_t + noise_t`, clipped to `[0, 6]`, where rain
//! events arrive as a Poisson process and drive a two-stage filter
//!
//! ```text
//! u_t = rho_rise  * u_{t-1} + A_t
//! r_t = rho_decay * r_{t-1} + (1 - rho_rise) * u_t
//! ```
//!
//! so that away from events `r_t = (rho_rise + rho_decay) r_{t-1} - rho_rise rho_decay r_{t-2}`.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{TimeSeries, LEVEL_MAX, LEVEL_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub base_level: f64,
    pub diurnal_amplitude: f64,
    /// Expected rain events per hour.
    pub event_rate: f64,
    /// Mean of the exponential event amplitude (meters of inflow).
    pub event_amplitude: f64,
    pub rho_rise: f64,
    pub rho_decay: f64,
    pub noise_std: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            base_level: 1.2,
            diurnal_amplitude: 0.15,
            event_rate: 1.0 / 36.0,
            event_amplitude: 1.6,
            rho_rise: 0.6,
            rho_decay: 0.92,
            noise_std: 0.02,
        }
    }
}

/// Generator output with the ground truth needed for statistical checks.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub series: TimeSeries,
    /// Number of events that arrived in each hour.
    pub arrivals: Vec<u32>,
    pub amplitudes: Vec<f64>,
    pub clipped: usize,
}

impl Synthetic {
    pub fn event_count(&self) -> u64 {
        self.arrivals.iter().map(|&a| a as u64).sum()
    }
}

pub fn synthesize(seed: u64, hours: usize) -> TimeSeries {
    synthesize_with(&SynthParams::default(), seed, hours).series
}

pub fn synthesize_with(p: &SynthParams, seed: u64, hours: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = (p.event_rate > 0.0).then(|| Poisson::new(p.event_rate).expect("positive rate"));
    let amp = (p.event_amplitude > 0.0).then(|| Exp::new(1.0 / p.event_amplitude).expect("positive mean"));
    let noise = (p.noise_std > 0.0).then(|| Normal::new(0.0, p.noise_std).expect("positive std"));

    let mut levels = Vec::with_capacity(hours);
    let mut arrivals = Vec::with_capacity(hours);
    let mut amplitudes = Vec::new();
    let (mut u, mut r) = (0.0f64, 0.0f64);
    let mut clipped = 0;
    // Random phase so different seeds do not share a diurnal peak hour.
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    for t in 0..hours {
        let k = poisson.as_ref().map_or(0, |d| d.sample(&mut rng) as u32);
        let mut a_t = 0.0;
        for _ in 0..k {
            let a = amp.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            amplitudes.push(a);
            a_t += a;
        }
        arrivals.push(k);
        u = p.rho_rise * u + a_t;
        r = p.rho_decay * r + (1.0 - p.rho_rise) * u;
        let diurnal = p.diurnal_amplitude * (std::f64::consts::TAU * t as f64 / 24.0 + phase).sin();
        let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        let x = p.base_level + diurnal + r + eps;
        let y = x.clamp(LEVEL_MIN, LEVEL_MAX);
        if y != x {
            clipped += 1;
        }
        levels.push(y);
    }
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid date");
    Synthetic { series: TimeSeries::hourly(start, levels), arrivals, amplitudes, clipped }
}

/// Noiseless sinusoid `offset + amplitude * sin(2 pi t / period)`, clipped to the level range.
pub fn sine(hours: usize, period: f64, amplitude: f64, offset: f64) -> TimeSeries {
    let levels = (0..hours)
        .map(|t| (offset + amplitude * (std::f64::consts::TAU * t as f64 / period).sin()).clamp(LEVEL_MIN, LEVEL_MAX))
        .collect();
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid date");
    TimeSeries::hourly(start, levels)
}
