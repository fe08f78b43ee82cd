//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgecast_core::data::WindowedDataset;
use edgecast_core::infer::{compile, IntegerModel};
use edgecast_core::model::NetConfig;
use edgecast_core::nn::{Params, TrainedModel};
use edgecast_core::search::Objectives;

pub fn random_windows(n: usize, count: usize, seed: u64) -> WindowedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n * count).map(|_| rng.gen_range(-2.0..2.0)).collect();
    WindowedDataset { n, inputs, targets: vec![0.0; count], target_index: (n..n + count).collect() }
}

/// Calibrated random-init model and its integer compilation.
pub fn model(net: NetConfig, bits: u8) -> (TrainedModel, IntegerModel) {
    let trained = TrainedModel::calibrated(Params::init(net, 1), &random_windows(net.n, 200, 2));
    let m = compile(&trained, bits).expect("compiles");
    (trained, m)
}

pub fn random_points(count: usize, seed: u64) -> Vec<Objectives> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Objectives::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect()
}
