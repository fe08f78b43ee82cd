use proptest::prelude::*;

use edgecast_core::hw::{check_feasibility, CostEstimate, CostModel, HardwareBudget, ResourceEstimate};
use edgecast_core::model::{Arch, NetConfig, INPUT_LENGTHS, WIDTHS};

fn arch() -> impl Strategy<Value = Arch> {
    prop_oneof![Just(Arch::Lstm), Just(Arch::Transformer)]
}

fn point() -> impl Strategy<Value = (usize, usize, u8)> {
    (0usize..3, 0usize..8, prop_oneof![Just(4u8), Just(6), Just(8)])
        .prop_map(|(i, j, b)| (INPUT_LENGTHS[i], WIDTHS[j], b))
}

fn le(a: &ResourceEstimate, b: &ResourceEstimate) -> bool {
    a.luts_pct <= b.luts_pct && a.bram_pct <= b.bram_pct && a.dsp_pct <= b.dsp_pct
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn energy_identity_is_exact(p in 0.0f64..1e4, t in 0.0f64..1e4) {
        let c = CostEstimate::new(p, t).unwrap();
        prop_assert_eq!(c.energy_mj(), p * t / 1000.0);
        prop_assert!(c.energy_mj() >= 0.0);
    }

    #[test]
    fn estimates_are_monotone(a in arch(), x in point(), y in point()) {
        let cm = CostModel::calibrated();
        let (small, big) = ((x.0.min(y.0), x.1.min(y.1), x.2.min(y.2)), (x.0.max(y.0), x.1.max(y.1), x.2.max(y.2)));
        let s = cm.estimate(&NetConfig { arch: a, n: small.0, width: small.1 }, small.2).unwrap();
        let b = cm.estimate(&NetConfig { arch: a, n: big.0, width: big.1 }, big.2).unwrap();
        prop_assert!(s.cost.latency_ms() <= b.cost.latency_ms());
        prop_assert!(le(&s.resources, &b.resources), "{:?} {:?}", s.resources, b.resources);
        prop_assert!(s.cost.power_mw() <= b.cost.power_mw());
        prop_assert!(s.cost.energy_mj() <= b.cost.energy_mj());
        prop_assert!(s.macs <= b.macs);
        // Shrinking never turns feasible into infeasible.
        if b.feasibility.feasible {
            prop_assert!(s.feasibility.feasible);
        }
        prop_assert_eq!(s.feasibility.feasible, s.feasibility.violations.is_empty());
    }

    #[test]
    fn feasibility_boundary(l in 0.0f64..200.0, r in 0.0f64..200.0, d in 0.0f64..200.0) {
        let f = check_feasibility(&ResourceEstimate { luts_pct: l, bram_pct: r, dsp_pct: d });
        prop_assert_eq!(f.feasible, l <= 100.0 && r <= 100.0 && d <= 100.0);
        prop_assert!(f.violations.iter().all(|v| v.excess_pct > 0.0));
        prop_assert!(f.total_violation() >= 0.0);
    }

    #[test]
    fn larger_budget_never_hurts(a in arch(), x in point(), extra in 0u32..10_000) {
        let cm = CostModel::calibrated();
        let base = HardwareBudget::default();
        let roomy = cm.with_budget(HardwareBudget { luts_total: base.luts_total + extra, ..base });
        let net = NetConfig { arch: a, n: x.0, width: x.1 };
        let (s, r) = (cm.estimate(&net, x.2).unwrap(), roomy.estimate(&net, x.2).unwrap());
        prop_assert!(r.resources.luts_pct <= s.resources.luts_pct);
        if s.feasibility.feasible {
            prop_assert!(r.feasibility.feasible);
        }
    }
}
