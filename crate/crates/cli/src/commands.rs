use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use edgecast_core::data::{load_csv, mse, prepare, synthesize, Splits, WindowedDataset};
use edgecast_core::hw::CostModel;
use edgecast_core::infer::{compile, IntegerModel};
use edgecast_core::model::{validate_bits, Arch, ModelConfig, NetConfig, TrainConfig};
use edgecast_core::nn::{qat_train, train, TrainedModel};
use edgecast_core::search::{
    append_trial, deployability_census, nsga2_run_with, pareto_extract, read_archive, write_front_csv, Census,
    Evaluator, SurrogateEvaluator, TrainingEvaluator, Trial, TrialStatus,
};

use crate::checkpoint::{decode_checkpoint, encode_checkpoint};
use crate::cli::{
    Command, EvaluatorKind, ExportArgs, GenerateArgs, Mode, ReportArgs, SearchArgs, TrainArgs, VerifyArgs,
};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, VerifyReport};

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Search(a) => cmd_search(&a).map(|_| ()),
        Command::Export(a) => cmd_export(&a).map(|_| ()),
        Command::Verify(a) => cmd_verify(&a).map(|_| ()),
        Command::Report(a) => cmd_report(&a).map(|_| ()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(bytes).and_then(|_| f.flush()).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn load_splits(path: &Path, n: usize, cfg: &RunConfig) -> Result<Splits, CliError> {
    let series = load_csv(path)?;
    Ok(prepare(&series, n, &cfg.split)?.splits)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    if a.hours == 0 {
        return Err(CliError::Usage("--hours must be positive".into()));
    }
    let series = synthesize(a.seed, a.hours);
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    write_bytes(&a.out, &buf)?;
    log::info!("wrote {} hours to {}", a.hours, a.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainMetrics {
    pub arch: Arch,
    pub n: usize,
    pub width: usize,
    pub mode: &'static str,
    pub bits: Option<u8>,
    pub val_mse: f64,
    pub test_mse_fp32: f64,
    /// Integer-engine test MSE.
    pub test_mse_quantized: Option<f64>,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// Test MSE of the integer engine.
pub fn integer_mse(model: &IntegerModel, ds: &WindowedDataset) -> Result<f64, CliError> {
    let pred = (0..ds.len()).map(|i| model.predict(ds.row(i))).collect::<Result<Vec<_>, _>>()?;
    Ok(mse(&pred, &ds.targets)?)
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainMetrics, CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(b) = a.bits {
        cfg.bits = b;
    }
    let net = NetConfig { arch: a.arch.into(), n: a.n, width: cfg.width };
    net.validate()?;
    validate_bits(cfg.bits)?;
    let fp_cfg = TrainConfig { bits: None, ..cfg.train };
    fp_cfg.validate()?;
    log::info!("resolved config: {}", serde_json::to_string(&cfg).expect("serializable"));

    let splits = load_splits(&a.data, a.n, &cfg)?;
    let fp = train(net, &fp_cfg, &splits.train, &splits.val)?;
    let test_mse_fp32 = fp.evaluate(&splits.test, None)?;
    let (model, metrics) = match a.mode {
        Mode::Fp32 => {
            let m = TrainMetrics {
                arch: net.arch,
                n: net.n,
                width: net.width,
                mode: "fp32",
                bits: None,
                val_mse: fp.best_val_mse,
                test_mse_fp32,
                test_mse_quantized: None,
                epochs: fp.epochs,
                best_epoch: fp.best_epoch,
            };
            (fp, m)
        }
        Mode::Qat => {
            let q_cfg = TrainConfig { bits: Some(cfg.bits), ..cfg.train };
            let q = qat_train(net, &q_cfg, &splits.train, &splits.val, Some(&fp))?;
            let int = compile(&q, cfg.bits)?;
            let m = TrainMetrics {
                arch: net.arch,
                n: net.n,
                width: net.width,
                mode: "qat",
                bits: Some(cfg.bits),
                val_mse: q.best_val_mse,
                test_mse_fp32,
                test_mse_quantized: Some(integer_mse(&int, &splits.test)?),
                epochs: q.epochs,
                best_epoch: q.best_epoch,
            };
            (q, m)
        }
    };
    write_bytes(&a.out.join("model.eofc"), &encode_checkpoint(&model))?;
    write_json(&a.out.join("metrics.json"), &metrics)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    println!("{}", serde_json::to_string(&metrics).expect("serializable"));
    Ok(metrics)
}

/// One row shaped like the reference hardware table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: Arch,
    pub n: usize,
    pub b: u8,
    pub bs: usize,
    pub lr_e4: f64,
    pub width: usize,
    pub val_mse: f64,
    pub luts_pct: f64,
    pub brams_pct: f64,
    pub dsps_pct: f64,
    pub energy_mj: f64,
    pub power_mw: f64,
    pub latency_ms: f64,
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "model",
    "n",
    "b",
    "bs",
    "lr_e4",
    "width",
    "val_mse",
    "luts_pct",
    "brams_pct",
    "dsps_pct",
    "energy_mj",
    "power_mw",
    "latency_ms",
];

impl SummaryRow {
    pub fn from_trial(t: &Trial) -> Option<Self> {
        let o = t.objectives?;
        let r = t.resources?;
        Some(Self {
            model: t.config.arch,
            n: t.config.n,
            b: t.config.bits,
            bs: t.config.batch_size,
            lr_e4: (t.config.lr * 1e4 * 1e3).round() / 1e3,
            width: t.config.width,
            val_mse: o.val_mse,
            luts_pct: (r.luts_pct * 100.0).round() / 100.0,
            brams_pct: (r.bram_pct * 100.0).round() / 100.0,
            dsps_pct: (r.dsp_pct * 100.0).round() / 100.0,
            energy_mj: (o.energy_mj * 1e3).round() / 1e3,
            power_mw: (t.power_mw? * 10.0).round() / 10.0,
            latency_ms: (t.latency_ms? * 1e3).round() / 1e3,
        })
    }

    fn record(&self) -> [String; 13] {
        [
            self.model.to_string(),
            self.n.to_string(),
            self.b.to_string(),
            self.bs.to_string(),
            format!("{:.3}", self.lr_e4),
            self.width.to_string(),
            format!("{:.4}", self.val_mse),
            format!("{:.2}", self.luts_pct),
            format!("{:.2}", self.brams_pct),
            format!("{:.2}", self.dsps_pct),
            format!("{:.3}", self.energy_mj),
            format!("{:.1}", self.power_mw),
            format!("{:.3}", self.latency_ms),
        ]
    }
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(SUMMARY_COLUMNS).map_err(|e| CliError::Config(e.to_string()))?;
        for r in rows {
            w.write_record(r.record()).map_err(|e| CliError::Config(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_bytes(path, &buf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub arch: Arch,
    pub n: usize,
    pub seed: u64,
    pub evaluator: &'static str,
    pub trials: usize,
    pub census: Census,
    pub front_size: usize,
    pub front: Vec<SummaryRow>,
}

pub fn cmd_search(a: &SearchArgs) -> Result<SearchSummary, CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(t) = a.trials {
        cfg.search.trials = t;
    }
    if let Some(j) = a.jobs {
        cfg.search.jobs = j;
    }
    let arch: Arch = a.arch.into();
    let space = cfg.space.space(arch, a.n);
    space.validate()?;
    cfg.search.validate()?;
    log::info!("resolved config: {}", serde_json::to_string(&cfg).expect("serializable"));
    let cost = CostModel::calibrated().with_budget(cfg.budget);

    let splits = match (a.evaluator, &a.data) {
        (EvaluatorKind::Train, Some(p)) => Some(load_splits(p, a.n, &cfg)?),
        (EvaluatorKind::Train, None) => {
            return Err(CliError::Usage("--data is required with --evaluator train".into()))
        }
        (EvaluatorKind::Surrogate, _) => None,
    };
    let evaluator: Box<dyn Evaluator + '_> = match &splits {
        Some(s) => Box::new(TrainingEvaluator {
            data: s,
            cost: cost.clone(),
            max_epochs: cfg.train.max_epochs,
            patience: cfg.train.patience,
        }),
        None => Box::new(SurrogateEvaluator { cost }),
    };

    let archive_path = a.out.join("archive.jsonl");
    let mut archive = create(&archive_path)?;
    let result = nsga2_run_with(&space, evaluator.as_ref(), &cfg.search, a.seed, |t| {
        log::info!("trial {} {:?} {:?} feasible={}", t.id, t.config, t.objectives, t.feasible);
        append_trial(&mut archive, t)?;
        archive.flush()?;
        Ok(())
    })?;
    drop(archive);

    let mut csv = Vec::new();
    write_front_csv(&mut csv, &result.front)?;
    write_bytes(&a.out.join("front.csv"), &csv)?;
    let rows: Vec<SummaryRow> = result.front.members.iter().filter_map(SummaryRow::from_trial).collect();
    write_summary_csv(&a.out.join("summary.csv"), &rows)?;
    let summary = SearchSummary {
        arch,
        n: a.n,
        seed: a.seed,
        evaluator: match a.evaluator {
            EvaluatorKind::Train => "train",
            EvaluatorKind::Surrogate => "surrogate",
        },
        trials: result.trials.len(),
        census: deployability_census(&result.trials),
        front_size: result.front.len(),
        front: rows,
    };
    write_json(&a.out.join("summary.json"), &summary)?;

    // Rebuild the lowest-error front member (training is deterministic in the
    // trial seed) and ship it.
    if let (Some(s), Some(best)) = (&splits, result.front.members.first()) {
        let model = retrain(&best.config, best.seed, &cfg.train, s)?;
        write_bytes(&a.out.join("best.eofc"), &encode_checkpoint(&model))?;
        let manifest = Manifest::build(compile(&model, best.config.bits)?)?;
        write_bytes(&a.out.join("best.eofm"), &manifest.to_bytes())?;
    }
    println!(
        "{} trials: {} feasible, {} infeasible, {} failed; front of {}",
        summary.trials, summary.census.feasible, summary.census.infeasible, summary.census.failed, summary.front_size
    );
    Ok(summary)
}

fn retrain(c: &ModelConfig, seed: u64, base: &TrainConfig, s: &Splits) -> Result<TrainedModel, CliError> {
    let mut tc = c.train_config(seed);
    tc.max_epochs = base.max_epochs;
    tc.patience = base.patience;
    Ok(qat_train(c.net(), &tc, &s.train, &s.val, None)?)
}

pub fn cmd_export(a: &ExportArgs) -> Result<Manifest, CliError> {
    let model = decode_checkpoint(&read_bytes(&a.checkpoint)?)?;
    let bits = a.bits.or(model.bits).unwrap_or(8);
    validate_bits(bits)?;
    let manifest = Manifest::build(compile(&model, bits)?)?;
    write_bytes(&a.out, &manifest.to_bytes())?;
    println!(
        "exported {} n={} width={} at {bits} bits to {}",
        model.net().arch,
        model.net().n,
        model.net().width,
        a.out.display()
    );
    Ok(manifest)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<VerifyReport, CliError> {
    let manifest = Manifest::from_bytes(&read_bytes(&a.manifest)?)?;
    let report = manifest.verify();
    println!("{}", serde_json::to_string(&report).expect("serializable"));
    if !report.passed() {
        return Err(CliError::Verify(format!(
            "{} of {} golden vectors differ, multiplier error {:.3e}",
            report.golden_mismatches, report.golden_total, report.max_multiplier_rel_error
        )));
    }
    Ok(report)
}

pub fn cmd_report(a: &ReportArgs) -> Result<usize, CliError> {
    let f = File::open(&a.archive).map_err(|e| CliError::io(&a.archive, e))?;
    let trials = read_archive(BufReader::new(f))?;
    if trials.is_empty() {
        log::warn!("archive {} holds no trials", a.archive.display());
    }
    let front = pareto_extract(&trials);
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Config(e.to_string());
        w.write_record(["trial_id", "val_mse", "energy_mj", "status", "feasible", "front"]).map_err(io)?;
        for t in &trials {
            let (m, e) = t
                .objectives
                .map_or((String::new(), String::new()), |o| (o.val_mse.to_string(), o.energy_mj.to_string()));
            let status = if t.status == TrialStatus::Complete { "complete" } else { "failed" };
            w.write_record([
                t.id.to_string(),
                m,
                e,
                status.to_string(),
                t.feasible.to_string(),
                front.contains(t.id).to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&a.out, e))?;
    }
    write_bytes(&a.out.join("scatter.csv"), &buf)?;
    let best: Vec<SummaryRow> = front.members.first().and_then(SummaryRow::from_trial).into_iter().collect();
    write_summary_csv(&a.out.join("summary.csv"), &best)?;
    println!("{} trials, front of {}", trials.len(), front.len());
    Ok(front.len())
}
