//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 7`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgecast_core::data::{make_windows, prepare, sine, synthesize, SplitSpec, WindowedDataset};
use edgecast_core::hw::{calibrate, reference_rows, CostModel, HardwareBudget};
use edgecast_core::infer::{check_equivalence, compile};
use edgecast_core::model::{Arch, ModelConfig, NetConfig, TrainConfig, WIDTHS};
use edgecast_core::nn::gradcheck::gradient_check;
use edgecast_core::nn::{qat_train, train};
use edgecast_core::quant::{
    compute_qparams, hard_sigmoid, hard_tanh, int_hard_sigmoid, int_hard_tanh, requantize, FixedPointMultiplier,
    QuantParams, QuantScheme,
};
use edgecast_core::search::{
    deployability_census, dominates, hypervolume, nsga2_run, pareto_extract, pareto_indices, Evaluator, Genome,
    NsgaConfig, Objectives, SearchSpace, SurrogateEvaluator, TrainingEvaluator, Trial, TrialStatus,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn energy_identity() -> Outcome {
    let rows = reference_rows().map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| (r.power_mw * r.latency_ms / 1000.0 - r.energy_mj).abs()).fold(0.0, f64::max);
    check(rows.len() == 6 && worst <= 0.0005, format!("{} rows, max |P*T/1000 - E| = {worst:.6} mJ", rows.len()))
}

fn requantize_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut cases, mut mismatches) = (0u64, 0u64);
    for _ in 0..100 {
        let m = 2f64.powf(-24.0 * rng.gen_range(f64::EPSILON..1.0));
        let fp = FixedPointMultiplier::from_real(m).map_err(|e| e.to_string())?;
        let real = fp.to_real();
        let outs = [
            QuantParams::new(1.0, rng.gen_range(-128..=127), 8, true).unwrap(),
            QuantParams::new(1.0, rng.gen_range(0..=255), 8, false).unwrap(),
            QuantParams::new(1.0, 0, 16, true).unwrap(),
        ];
        for out in &outs {
            for acc in i16::MIN..=i16::MAX {
                // f64::round is half away from zero; acc * real is exact here.
                let want = ((acc as f64 * real).round() as i64 + out.zero_point as i64)
                    .clamp(out.qmin() as i64, out.qmax() as i64) as i32;
                cases += 1;
                if requantize(acc as i32, fp, out) != want {
                    mismatches += 1;
                }
            }
        }
    }
    check(mismatches == 0, format!("{cases} accumulator/multiplier/output cases, {mismatches} mismatches"))
}

fn hard_activations() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut swept = 0;
    for bits in [4u8, 6, 8] {
        let sig_out = compute_qparams(0.0, 1.0, bits, QuantScheme::AsymmetricUnsigned).unwrap();
        let tanh_out = compute_qparams(-1.0, 1.0, bits, QuantScheme::Symmetric).unwrap();
        for (lo, hi) in [(-4.0, 4.0), (-2.7, 3.1), (-8.0, 1.5), (-0.5, 6.0), (-1.0, 1.0)] {
            let input = compute_qparams(lo, hi, bits, QuantScheme::AsymmetricSigned).unwrap();
            for q in input.qmin()..=input.qmax() {
                let x = input.dequantize_value(q);
                let s = sig_out.dequantize_value(int_hard_sigmoid(q, &input, &sig_out).unwrap());
                let t = tanh_out.dequantize_value(int_hard_tanh(q, &input, &tanh_out).unwrap());
                worst = worst.max((s - hard_sigmoid(x)).abs() / sig_out.scale);
                worst = worst.max((t - hard_tanh(x)).abs() / tanh_out.scale);
                swept += 1;
            }
        }
    }
    check(worst <= 1.0 + 1e-9, format!("{swept} input codes, max deviation {worst:.3} output steps"))
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for net in [NetConfig::lstm(6, 8), NetConfig::transformer(6, 8)] {
        for _ in 0..3 {
            let seed = rng.gen::<u64>();
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = gradient_check(net, seed, &x, rng.gen_range(-1.0..1.0));
            worst = worst.max(r.max_rel_error);
            parts.push(format!("{}:{:.1e}", net.arch, r.max_rel_error));
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.2e} ({})", parts.join(" ")))
}

fn sine_splits(n: usize) -> (WindowedDataset, WindowedDataset, WindowedDataset) {
    let s = sine(n + 5000, 24.0, 2.0, 3.0);
    let z: Vec<f64> = s.levels.iter().map(|v| (v - 3.0) / 2.0f64.sqrt()).collect();
    let ds = make_windows(&z, n).unwrap();
    (ds.slice(0..3000), ds.slice(3000..4000), ds.slice(4000..5000))
}

fn integer_equivalence() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for net in [NetConfig::lstm(12, 16), NetConfig::transformer(12, 16)] {
        let (tr, va, te) = sine_splits(net.n);
        let fp_cfg = TrainConfig { batch_size: 16, lr: 1e-3, seed: 1, ..Default::default() };
        let fp = train(net, &fp_cfg, &tr, &va).map_err(|e| e.to_string())?;
        let qat =
            qat_train(net, &TrainConfig { bits: Some(8), ..fp_cfg }, &tr, &va, Some(&fp)).map_err(|e| e.to_string())?;
        let m = compile(&qat, 8).map_err(|e| e.to_string())?;
        let r = check_equivalence(&qat, &m, &te).map_err(|e| e.to_string())?;
        ok &= r.samples == 1000 && r.fraction >= 0.99 && r.max_dev_steps <= 2.0;
        parts.push(format!(
            "{} {}/{} within 1 step, max {:.2} steps",
            net.arch, r.within_one_step, r.samples, r.max_dev_steps
        ));
    }
    check(ok, parts.join("; "))
}

fn degradation_envelope() -> Outcome {
    let series = synthesize(42, 26_280);
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for arch in [Arch::Lstm, Arch::Transformer] {
        for n in [6, 12, 24] {
            let s = prepare(&series, n, &SplitSpec::default()).map_err(|e| e.to_string())?.splits;
            let net = NetConfig { arch, n, width: 16 };
            let fp_cfg = TrainConfig { batch_size: 64, lr: 1e-3, seed: 1, ..Default::default() };
            let fp = train(net, &fp_cfg, &s.train, &s.val).map_err(|e| e.to_string())?;
            let qat_cfg = TrainConfig { bits: Some(8), ..fp_cfg };
            let qat = qat_train(net, &qat_cfg, &s.train, &s.val, Some(&fp)).map_err(|e| e.to_string())?;
            let fp_mse = fp.evaluate(&s.test, None).map_err(|e| e.to_string())?;
            let q_mse = qat.evaluate(&s.test, Some(8)).map_err(|e| e.to_string())?;
            let ratio = q_mse / fp_mse;
            worst = worst.max((ratio - 1.0).abs());
            parts.push(format!("{arch} n={n} {ratio:.3}"));
        }
    }
    check(worst <= 0.15, format!("QAT/FP test MSE {} (max |r-1| {worst:.3})", parts.join(", ")))
}

fn dom(a: &Objectives, b: &Objectives) -> bool {
    a.val_mse <= b.val_mse && a.energy_mj <= b.energy_mj && (a.val_mse < b.val_mse || a.energy_mj < b.energy_mj)
}

fn random_objectives(rng: &mut ChaCha8Rng) -> Objectives {
    if rng.gen_bool(0.3) {
        Objectives::new(rng.gen_range(0..20) as f64 / 100.0, rng.gen_range(0..20) as f64 / 10.0)
    } else {
        Objectives::new(rng.gen_range(0.0..0.2), rng.gen_range(0.0..2.0))
    }
}

fn pareto_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = ModelConfig { arch: Arch::Lstm, n: 6, width: 8, bits: 8, batch_size: 16, lr: 1e-4 };
    let mut set_mismatch = 0;
    for _ in 0..50 {
        let trials: Vec<Trial> = (0..1000)
            .map(|id| {
                let failed = rng.gen_bool(0.03);
                Trial {
                    id,
                    generation: 0,
                    seed: 0,
                    config,
                    genome: Genome { bits: 0, batch: 0, width: 0, log_lr: -4.0 },
                    status: if failed { TrialStatus::Failed } else { TrialStatus::Complete },
                    objectives: (!failed).then(|| random_objectives(&mut rng)),
                    feasible: !failed && rng.gen_bool(0.8),
                    resources: None,
                    power_mw: None,
                    latency_ms: None,
                    violations: Vec::new(),
                    error: None,
                    wall_time_ms: 0.0,
                }
            })
            .collect();
        let pool: Vec<&Trial> = trials.iter().filter(|t| t.is_deployable()).collect();
        let mut oracle: Vec<usize> = pool
            .iter()
            .filter(|t| !pool.iter().any(|u| dom(&u.objectives.unwrap(), &t.objectives.unwrap())))
            .map(|t| t.id)
            .collect();
        let mut got: Vec<usize> = pareto_extract(&trials).members.iter().map(|t| t.id).collect();
        oracle.sort_unstable();
        got.sort_unstable();
        if got != oracle {
            set_mismatch += 1;
        }
    }
    let mut violations = 0;
    for _ in 0..100_000 {
        let (a, b, c) = (random_objectives(&mut rng), random_objectives(&mut rng), random_objectives(&mut rng));
        let d = |x: &Objectives, y: &Objectives| dominates(x, y).unwrap();
        let irreflexive = !d(&a, &a);
        let antisymmetric = !(d(&a, &b) && d(&b, &a));
        let transitive = !(d(&a, &b) && d(&b, &c)) || d(&a, &c);
        if !(irreflexive && antisymmetric && transitive && d(&a, &b) == dom(&a, &b)) {
            violations += 1;
        }
    }
    check(
        set_mismatch == 0 && violations == 0,
        format!("50x1000 populations: {set_mismatch} set mismatches; 1e5 triples: {violations} order violations"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

fn nsga2_efficacy() -> Outcome {
    let ev = SurrogateEvaluator::default();
    let mut parts = Vec::new();
    let mut worst = f64::INFINITY;
    for arch in [Arch::Lstm, Arch::Transformer] {
        for n in [6, 12, 24] {
            let space = SearchSpace::new(arch, n);
            let mut all = Vec::new();
            for &bits in &space.bits {
                for &batch_size in &space.batch_sizes {
                    for &width in &space.widths {
                        for lr in SurrogateEvaluator::lr_grid() {
                            let cfg = ModelConfig { arch, n, width, bits, batch_size, lr };
                            let e = ev.evaluate(&cfg, 0).map_err(|e| e.to_string())?;
                            if e.hw.feasibility.feasible {
                                all.push(Objectives::new(e.val_mse, e.hw.cost.energy_mj()));
                            }
                        }
                    }
                }
            }
            let reference = Objectives::new(
                all.iter().map(|o| o.val_mse).fold(f64::MIN, f64::max),
                all.iter().map(|o| o.energy_mj).fold(f64::MIN, f64::max),
            );
            let truth: Vec<Objectives> = pareto_indices(&all).into_iter().map(|i| all[i]).collect();
            let true_hv = hypervolume(&truth, reference);
            let ratios: Vec<f64> = (0..10)
                .map(|seed| {
                    let r = nsga2_run(&space, &ev, &NsgaConfig::default(), seed).expect("search runs");
                    hypervolume(&r.front.distinct_points(), reference) / true_hv
                })
                .collect();
            let m = median(ratios);
            worst = worst.min(m);
            parts.push(format!("{arch} n={n} {m:.3}"));
        }
    }
    check(worst >= 0.95, format!("median HV ratio over 10 seeds: {}", parts.join(", ")))
}

fn calibration() -> Outcome {
    let budget = HardwareBudget::default();
    let (params, report) =
        calibrate(&reference_rows().map_err(|e| e.to_string())?, &budget).map_err(|e| e.to_string())?;
    let p = report.rows.iter().map(|r| r.power_rel().abs()).fold(0.0, f64::max);
    let l = report.rows.iter().map(|r| r.latency_rel().abs()).fold(0.0, f64::max);
    let cm = CostModel::new(params, budget);
    let mut points = 0;
    let mut breaks = 0;
    for arch in [Arch::Lstm, Arch::Transformer] {
        for n in 6..=30 {
            for &width in &WIDTHS {
                points += 1;
                let here = NetConfig { arch, n, width };
                let mut next = vec![NetConfig { n: n + 1, ..here }];
                if width < 64 {
                    next.push(NetConfig { width: width + 8, ..here });
                }
                for b in [4u8, 6, 8] {
                    let a = cm.estimate(&here, b).map_err(|e| e.to_string())?;
                    let mut bigger: Vec<_> = next
                        .iter()
                        .map(|net| cm.estimate(net, b))
                        .collect::<Result<_, _>>()
                        .map_err(|e| e.to_string())?;
                    if b < 8 {
                        bigger.push(cm.estimate(&here, b + 2).map_err(|e| e.to_string())?);
                    }
                    for z in bigger {
                        let (x, y) = (&a.resources, &z.resources);
                        if z.cost.latency_ms() < a.cost.latency_ms()
                            || y.luts_pct < x.luts_pct
                            || y.bram_pct < x.bram_pct
                            || y.dsp_pct < x.dsp_pct
                        {
                            breaks += 1;
                        }
                    }
                }
            }
        }
    }
    check(
        p <= 0.10 && l <= 0.35 && breaks == 0,
        format!("max |power residual| {:.1}%, max |latency residual| {:.1}%, {points}-point grid: {breaks} monotonicity breaks", p * 100.0, l * 100.0),
    )
}

fn deployability_trend() -> Outcome {
    let ev = SurrogateEvaluator::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for arch in [Arch::Lstm, Arch::Transformer] {
        let mut sums = Vec::new();
        for n in [6, 12, 24] {
            let space = SearchSpace::new(arch, n);
            let mut feasible = 0;
            for seed in 0..10 {
                let r = nsga2_run(&space, &ev, &NsgaConfig::default(), seed).map_err(|e| e.to_string())?;
                let c = deployability_census(&r.trials);
                if arch == Arch::Lstm {
                    ok &= c.feasible == r.trials.len();
                }
                feasible += c.feasible;
            }
            sums.push(feasible);
        }
        if arch == Arch::Transformer {
            ok &= sums[0] > sums[1] && sums[1] > sums[2];
        }
        parts.push(format!("{arch} feasible/1000 at n=6,12,24: {sums:?}"));
    }

    // Reduced run with real training: a small series, short schedules.
    let series = synthesize(42, 3_000);
    let cfg = NsgaConfig { population: 4, trials: 12, ..Default::default() };
    let mut real = Vec::new();
    for arch in [Arch::Lstm, Arch::Transformer] {
        let mut counts = Vec::new();
        for n in [6, 12, 24] {
            let s = prepare(&series, n, &SplitSpec::default()).map_err(|e| e.to_string())?.splits;
            let tev = TrainingEvaluator { max_epochs: 2, patience: 1, ..TrainingEvaluator::new(&s) };
            let r = nsga2_run(&SearchSpace::new(arch, n), &tev, &cfg, 42).map_err(|e| e.to_string())?;
            let c = deployability_census(&r.trials);
            if arch == Arch::Lstm {
                ok &= c.feasible == r.trials.len();
            }
            counts.push(c.feasible);
        }
        real.push(format!("{arch} {counts:?}/12"));
    }
    parts.push(format!("trained: {}", real.join(" ")));
    check(ok, parts.join("; "))
}

fn run(bin: &str, args: &[&str]) -> Result<(), String> {
    let o = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_edgecast");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_owned();
    run(bin, &["generate", "--seed", "42", "--hours", "2000", "--out", &s(&p("levels.csv"))])?;
    fs::write(p("run.json"), r#"{"train": {"max_epochs": 3, "patience": 1}}"#).map_err(|e| e.to_string())?;
    for (out, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        run(
            bin,
            &[
                "search",
                "--data",
                &s(&p("levels.csv")),
                "--arch",
                "lstm",
                "--n",
                "6",
                "--trials",
                "10",
                "--seed",
                "42",
                "--jobs",
                jobs,
                "--config",
                &s(&p("run.json")),
                "--out",
                &s(&p(out)),
            ],
        )?;
    }
    let mut differing = Vec::new();
    for file in ["archive.jsonl", "best.eofm", "front.csv", "summary.csv"] {
        let a = fs::read(p("a").join(file)).map_err(|e| e.to_string())?;
        for other in ["b", "c"] {
            if fs::read(p(other).join(file)).map_err(|e| e.to_string())? != a {
                differing.push(format!("{other}/{file}"));
            }
        }
    }
    let lines = fs::read_to_string(p("a").join("archive.jsonl")).map_err(|e| e.to_string())?.lines().count();
    let verified = run(bin, &["verify", "--manifest", &s(&p("a").join("best.eofm"))]).is_ok();
    check(
        differing.is_empty() && verified && lines == 10,
        format!(
            "3 runs ({lines} trials each), differing files {differing:?}, manifest verify {}",
            if verified { "ok" } else { "FAILED" }
        ),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { id: 1, name: "energy identity", budget: Duration::from_secs(1), run: energy_identity },
        Criterion { id: 2, name: "requantize oracle", budget: Duration::from_secs(30), run: requantize_oracle },
        Criterion { id: 3, name: "hard activations", budget: Duration::from_secs(5), run: hard_activations },
        Criterion { id: 4, name: "gradient checks", budget: mins(2), run: gradient_checks },
        Criterion { id: 5, name: "integer/QAT equivalence", budget: mins(10), run: integer_equivalence },
        Criterion { id: 6, name: "degradation envelope", budget: mins(45), run: degradation_envelope },
        Criterion { id: 7, name: "pareto correctness", budget: mins(1), run: pareto_correctness },
        Criterion { id: 8, name: "nsga-ii efficacy", budget: mins(2), run: nsga2_efficacy },
        Criterion { id: 9, name: "cost-model calibration", budget: Duration::from_secs(10), run: calibration },
        Criterion { id: 10, name: "deployability trend", budget: mins(30), run: deployability_trend },
        Criterion { id: 11, name: "determinism", budget: mins(10), run: determinism },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // Keep the default hook quiet; panics are reported on the criterion line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<24} {}  {} [{:.1}s of {}s]",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
