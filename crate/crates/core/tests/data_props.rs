use proptest::prelude::*;

use edgecast_core::data::{chronological_split, make_windows, mse, Normalizer, SplitSpec, TestBoundary};

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..6.0, 40..400)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn windows_align_with_targets(s in series(), n in 1usize..30) {
        prop_assume!(s.len() > n);
        let ds = make_windows(&s, n).unwrap();
        prop_assert_eq!(ds.len(), s.len() - n);
        for i in 0..ds.len() {
            let t = ds.target_index[i];
            prop_assert_eq!(ds.targets[i], s[t]);
            prop_assert_eq!(ds.row(i), &s[t - n..t]);
        }
    }

    #[test]
    fn split_is_chronological_and_exhaustive(
        s in series(),
        n in 1usize..24,
        train in 0.3f64..0.9,
        test in 0.1f64..0.5,
    ) {
        prop_assume!(s.len() > n + 20);
        let ds = make_windows(&s, n).unwrap();
        let spec = SplitSpec { train_fraction: train, test: TestBoundary::Fraction(test) };
        let Ok(sp) = chronological_split(&ds, &spec) else { return Ok(()) };
        prop_assert_eq!(sp.train.len() + sp.val.len() + sp.test.len(), ds.len());
        let idx: Vec<usize> =
            [&sp.train, &sp.val, &sp.test].iter().flat_map(|p| p.target_index.iter().copied()).collect();
        prop_assert_eq!(idx, ds.target_index.clone());
        prop_assert!(sp.train.target_index.last() < sp.val.target_index.first());
        prop_assert!(sp.val.target_index.last() < sp.test.target_index.first());
    }

    #[test]
    fn denormalized_mse_scales_by_variance(
        s in series(),
        noise in prop::collection::vec(-1.0f64..1.0, 40..400),
    ) {
        let norm = Normalizer::fit(&s).unwrap();
        let len = s.len().min(noise.len());
        let t: Vec<f64> = s[..len].iter().map(|&v| norm.apply(v)).collect();
        let p: Vec<f64> = t.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let inv = |v: &[f64]| v.iter().map(|&z| norm.invert(z)).collect::<Vec<_>>();
        let raw = mse(&inv(&p), &inv(&t)).unwrap();
        let scaled = norm.denormalize_mse(mse(&p, &t).unwrap());
        prop_assert!((raw - scaled).abs() <= 1e-9 * scaled.max(1.0), "{} vs {}", raw, scaled);
        prop_assert!(norm.std > 0.0);
    }
}
