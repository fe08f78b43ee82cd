use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgecast_core::data::WindowedDataset;
use edgecast_core::infer::{check_equivalence, compile};
use edgecast_core::model::NetConfig;
use edgecast_core::nn::{Params, TrainedModel};

fn windows(n: usize, count: usize, seed: u64) -> WindowedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n * count).map(|_| rng.gen_range(-2.5..2.5)).collect();
    WindowedDataset { n, inputs, targets: vec![0.0; count], target_index: (n..n + count).collect() }
}

fn net() -> impl Strategy<Value = NetConfig> {
    (any::<bool>(), prop_oneof![Just(6usize), Just(12)], prop_oneof![Just(8usize), Just(16)])
        .prop_map(|(lstm, n, w)| if lstm { NetConfig::lstm(n, w) } else { NetConfig::transformer(n, w) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integer_engine_tracks_fake_quant(
        net in net(),
        bits in prop_oneof![Just(4u8), Just(6), Just(8)],
        seed in any::<u64>(),
    ) {
        let trained = TrainedModel::calibrated(Params::init(net, seed), &windows(net.n, 200, seed ^ 1));
        let m = compile(&trained, bits).unwrap();
        let test = windows(net.n, 300, seed ^ 2);
        let r = check_equivalence(&trained, &m, &test).unwrap();
        prop_assert!(r.fraction >= 0.99, "{:?}", r);
        prop_assert!(r.max_dev_steps <= 2.0, "{:?}", r);
        let out = m.output_qp();
        for i in 0..20 {
            // predict fails if any real-valued helper runs on the integer path.
            let a = m.trace(test.row(i), true).unwrap();
            let b = m.trace(test.row(i), true).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(m.run(&a.stages[0].1).unwrap(), a.output_code);
            prop_assert!((out.qmin()..=out.qmax()).contains(&a.output_code));
        }
    }
}
