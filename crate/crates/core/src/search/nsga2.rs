use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluator::Evaluator;
use super::pareto::{crowding_distance, non_dominated_sort, pareto_indices, Objectives};
use super::space::{Genome, SearchSpace, GENE_COUNT};
use super::SearchError;
use crate::hw::{ResourceEstimate, Violation};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Complete,
    Failed,
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub generation: usize,
    pub seed: u64,
    pub config: ModelConfig,
    pub genome: Genome,
    pub status: TrialStatus,
    pub objectives: Option<Objectives>,
    pub feasible: bool,
    pub resources: Option<ResourceEstimate>,
    pub power_mw: Option<f64>,
    pub latency_ms: Option<f64>,
    pub violations: Vec<Violation>,
    pub error: Option<String>,
    /// Not archived, so archives stay reproducible.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl Trial {
    pub fn is_deployable(&self) -> bool {
        self.status == TrialStatus::Complete && self.feasible
    }

    pub fn total_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.excess_pct).sum()
    }
}

/// Feasible, non-dominated trials in ascending validation MSE.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<Trial>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.members.iter().filter_map(|t| t.objectives).collect()
    }

    /// Objective vectors with duplicates collapsed.
    pub fn distinct_points(&self) -> Vec<Objectives> {
        let mut out: Vec<Objectives> = Vec::new();
        for o in self.objectives() {
            if !out.contains(&o) {
                out.push(o);
            }
        }
        out
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.iter().any(|t| t.id == id)
    }
}

/// Non-dominated subset of the deployable trials. Trials with identical
/// objectives are all kept.
pub fn pareto_extract(trials: &[Trial]) -> ParetoFront {
    let pool: Vec<&Trial> = trials.iter().filter(|t| t.is_deployable() && t.objectives.is_some()).collect();
    let pts: Vec<Objectives> = pool.iter().map(|t| t.objectives.expect("filtered")).collect();
    ParetoFront { members: pareto_indices(&pts).into_iter().map(|i| pool[i].clone()).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census {
    pub feasible: usize,
    pub infeasible: usize,
    pub failed: usize,
}

pub fn deployability_census(trials: &[Trial]) -> Census {
    let mut c = Census::default();
    for t in trials {
        match (t.status, t.feasible) {
            (TrialStatus::Failed, _) => c.failed += 1,
            (_, true) => c.feasible += 1,
            (_, false) => c.infeasible += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsgaConfig {
    pub population: usize,
    pub trials: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    /// Concurrent evaluations; results are committed in trial order regardless.
    pub jobs: usize,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self { population: 20, trials: 100, crossover_prob: 0.9, eta_crossover: 15.0, eta_mutation: 20.0, jobs: 1 }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population < 2 || self.trials == 0 || self.jobs == 0 {
            return Err(SearchError::Budget(format!(
                "population {} trials {} jobs {}",
                self.population, self.trials, self.jobs
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || self.eta_crossover <= 0.0 || self.eta_mutation <= 0.0 {
            return Err(SearchError::Budget("operator parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub front: ParetoFront,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Training seed of trial `id` within a run.
pub fn trial_seed(run_seed: u64, id: usize) -> u64 {
    splitmix64(run_seed ^ splitmix64(id as u64))
}

/// Selection rank and crowding. Feasible trials are ranked by
/// non-dominated sorting, infeasible ones after them by total violation,
/// failed trials last.
fn rank(pool: &[&Trial]) -> (Vec<usize>, Vec<f64>) {
    let n = pool.len();
    let mut rank = vec![usize::MAX; n];
    let mut crowd = vec![0.0; n];
    let feas: Vec<usize> = (0..n).filter(|&i| pool[i].is_deployable()).collect();
    let pts: Vec<Objectives> = feas.iter().map(|&i| pool[i].objectives.expect("complete")).collect();
    let fronts = non_dominated_sort(&pts);
    for (r, f) in fronts.iter().enumerate() {
        let fp: Vec<Objectives> = f.iter().map(|&k| pts[k]).collect();
        for (&k, d) in f.iter().zip(crowding_distance(&fp)) {
            rank[feas[k]] = r;
            crowd[feas[k]] = d;
        }
    }
    let mut next = fronts.len();
    let mut infeas: Vec<usize> =
        (0..n).filter(|&i| pool[i].status == TrialStatus::Complete && !pool[i].feasible).collect();
    infeas.sort_by(|&a, &b| pool[a].total_violation().total_cmp(&pool[b].total_violation()).then(a.cmp(&b)));
    let mut last = None;
    for i in infeas {
        let v = pool[i].total_violation();
        if last.is_some_and(|l| l != v) {
            next += 1;
        }
        last = Some(v);
        rank[i] = next;
    }
    let failed = next + 1;
    for r in rank.iter_mut().filter(|r| **r == usize::MAX) {
        *r = failed;
    }
    (rank, crowd)
}

fn better(rank: &[usize], crowd: &[f64], a: usize, b: usize) -> Option<bool> {
    if rank[a] != rank[b] {
        return Some(rank[a] < rank[b]);
    }
    if crowd[a] != crowd[b] {
        return Some(crowd[a] > crowd[b]);
    }
    None
}

fn tournament(rank: &[usize], crowd: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let n = rank.len();
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    match better(rank, crowd, a, b) {
        Some(true) => a,
        Some(false) => b,
        None => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Bounded simulated binary crossover of one real gene.
fn sbx(x1: f64, x2: f64, lo: f64, hi: f64, eta: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    if (x1 - x2).abs() < 1e-14 || hi <= lo {
        return (x1, x2);
    }
    let (y1, y2) = (x1.min(x2), x1.max(x2));
    let u: f64 = rng.gen();
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
        }
    };
    let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
    let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
    let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
    let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
    if rng.gen_bool(0.5) {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// Bounded polynomial mutation of one real gene.
fn polynomial_mutation(x: f64, lo: f64, hi: f64, eta: f64, rng: &mut ChaCha8Rng) -> f64 {
    if hi <= lo {
        return x;
    }
    let span = hi - lo;
    let (d1, d2) = ((x - lo) / span, (hi - x) / span);
    let u: f64 = rng.gen();
    let p = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(p) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(p)
    };
    (x + dq * span).clamp(lo, hi)
}

fn offspring(space: &SearchSpace, cfg: &NsgaConfig, p1: &Genome, p2: &Genome, rng: &mut ChaCha8Rng) -> [Genome; 2] {
    let (lo, hi) = space.log_lr_bounds();
    let (mut a, mut b) = (*p1, *p2);
    if rng.gen_bool(cfg.crossover_prob) {
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut a.bits, &mut b.bits);
        }
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut a.batch, &mut b.batch);
        }
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut a.width, &mut b.width);
        }
        (a.log_lr, b.log_lr) = sbx(a.log_lr, b.log_lr, lo, hi, cfg.eta_crossover, rng);
    }
    let pm = 1.0 / GENE_COUNT as f64;
    for g in [&mut a, &mut b] {
        if rng.gen_bool(pm) {
            g.bits = rng.gen_range(0..space.bits.len());
        }
        if rng.gen_bool(pm) {
            g.batch = rng.gen_range(0..space.batch_sizes.len());
        }
        if rng.gen_bool(pm) {
            g.width = rng.gen_range(0..space.widths.len());
        }
        if rng.gen_bool(pm) {
            g.log_lr = polynomial_mutation(g.log_lr, lo, hi, cfg.eta_mutation, rng);
        }
    }
    [a, b]
}

fn evaluate_one<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &E,
    run_seed: u64,
    id: usize,
    generation: usize,
    genome: Genome,
) -> Trial {
    let config = space.decode(&genome);
    let seed = trial_seed(run_seed, id);
    let start = Instant::now();
    let result = evaluator.evaluate(&config, seed);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut t = Trial {
        id,
        generation,
        seed,
        config,
        genome,
        status: TrialStatus::Failed,
        objectives: None,
        feasible: false,
        resources: None,
        power_mw: None,
        latency_ms: None,
        violations: Vec::new(),
        error: None,
        wall_time_ms,
    };
    match result {
        Ok(ev) => {
            let obj = Objectives::new(ev.val_mse, ev.hw.cost.energy_mj());
            if obj.is_finite() {
                t.status = TrialStatus::Complete;
                t.objectives = Some(obj);
                t.feasible = ev.hw.feasibility.feasible;
                t.violations = ev.hw.feasibility.violations;
            } else {
                t.error = Some(format!("non-finite objectives ({}, {})", obj.val_mse, obj.energy_mj));
            }
            t.resources = Some(ev.hw.resources);
            t.power_mw = Some(ev.hw.cost.power_mw());
            t.latency_ms = Some(ev.hw.cost.latency_ms());
        }
        Err(e) => t.error = Some(e.0),
    }
    if let Some(e) = &t.error {
        log::warn!("trial {id} failed: {e}");
    }
    t
}

/// NSGA-II over `space`. Each committed trial is passed to `sink` in id order.
pub fn nsga2_run_with<E, F>(
    space: &SearchSpace,
    evaluator: &E,
    cfg: &NsgaConfig,
    seed: u64,
    mut sink: F,
) -> Result<SearchResult, SearchError>
where
    E: Evaluator + ?Sized,
    F: FnMut(&Trial) -> Result<(), SearchError>,
{
    space.validate()?;
    cfg.validate()?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().map_err(|e| SearchError::Pool(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(cfg.trials);
    let mut parents: Vec<usize> = Vec::new();
    let mut generation = 0;

    while trials.len() < cfg.trials {
        let size = cfg.population.min(cfg.trials - trials.len());
        let genomes: Vec<Genome> = if parents.is_empty() {
            (0..size).map(|_| space.sample(&mut rng)).collect()
        } else {
            let refs: Vec<&Trial> = parents.iter().map(|&i| &trials[i]).collect();
            let (rk, cd) = rank(&refs);
            let mut out = Vec::with_capacity(size + 1);
            while out.len() < size {
                let a = refs[tournament(&rk, &cd, &mut rng)].genome;
                let b = refs[tournament(&rk, &cd, &mut rng)].genome;
                out.extend(offspring(space, cfg, &a, &b, &mut rng));
            }
            out.truncate(size);
            out
        };
        let first = trials.len();
        let jobs: Vec<(usize, Genome)> = genomes.into_iter().enumerate().map(|(k, g)| (first + k, g)).collect();
        let batch: Vec<Trial> = if cfg.jobs == 1 {
            jobs.into_iter().map(|(id, g)| evaluate_one(space, evaluator, seed, id, generation, g)).collect()
        } else {
            pool.install(|| {
                jobs.into_par_iter().map(|(id, g)| evaluate_one(space, evaluator, seed, id, generation, g)).collect()
            })
        };
        for t in batch {
            sink(&t)?;
            trials.push(t);
        }
        log::info!("generation {generation}: {} trials evaluated", trials.len());

        // Elitist survival over parents and the new generation.
        let mut cand: Vec<usize> = parents.clone();
        cand.extend(first..trials.len());
        let refs: Vec<&Trial> = cand.iter().map(|&i| &trials[i]).collect();
        let (rk, cd) = rank(&refs);
        let mut order: Vec<usize> = (0..cand.len()).collect();
        order.sort_by(|&a, &b| rk[a].cmp(&rk[b]).then(cd[b].total_cmp(&cd[a])).then(cand[a].cmp(&cand[b])));
        parents = order.into_iter().take(cfg.population).map(|k| cand[k]).collect();
        generation += 1;
    }
    let front = pareto_extract(&trials);
    Ok(SearchResult { trials, front })
}

pub fn nsga2_run<E: Evaluator + ?Sized>(
    space: &SearchSpace,
    evaluator: &E,
    cfg: &NsgaConfig,
    seed: u64,
) -> Result<SearchResult, SearchError> {
    nsga2_run_with(space, evaluator, cfg, seed, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::{CostModel, HwEstimate};
    use crate::model::Arch;
    use crate::search::evaluator::{EvalError, Evaluation, SurrogateEvaluator};

    fn hw(cfg: &ModelConfig) -> HwEstimate {
        CostModel::calibrated().estimate(&cfg.net(), cfg.bits).unwrap()
    }

    #[test]
    fn sbx_and_mutation_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let (a, b) = (rng.gen_range(-5.0..=-3.0), rng.gen_range(-5.0..=-3.0));
            let (c, d) = sbx(a, b, -5.0, -3.0, 15.0, &mut rng);
            assert!((-5.0..=-3.0).contains(&c) && (-5.0..=-3.0).contains(&d));
            let m = polynomial_mutation(a, -5.0, -3.0, 20.0, &mut rng);
            assert!((-5.0..=-3.0).contains(&m));
        }
    }

    #[test]
    fn budget_and_generations() {
        let space = SearchSpace::new(Arch::Lstm, 12);
        let r = nsga2_run(&space, &SurrogateEvaluator::default(), &NsgaConfig::default(), 5).unwrap();
        assert_eq!(r.trials.len(), 100);
        assert_eq!(r.trials.last().unwrap().generation, 4);
        assert!(r.trials.iter().enumerate().all(|(i, t)| t.id == i));
        let short = NsgaConfig { trials: 10, ..Default::default() };
        assert_eq!(nsga2_run(&space, &SurrogateEvaluator::default(), &short, 5).unwrap().trials.len(), 10);
    }

    #[test]
    fn deterministic_and_parallel_agnostic() {
        let space = SearchSpace::new(Arch::Transformer, 24);
        let ev = SurrogateEvaluator::default();
        let a = nsga2_run(&space, &ev, &NsgaConfig::default(), 11).unwrap();
        let b = nsga2_run(&space, &ev, &NsgaConfig { jobs: 3, ..Default::default() }, 11).unwrap();
        let strip = |r: &SearchResult| r.trials.iter().map(|t| (t.config, t.objectives)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.front.objectives(), b.front.objectives());
        let c = nsga2_run(&space, &ev, &NsgaConfig::default(), 12).unwrap();
        assert_ne!(strip(&a), strip(&c));
    }

    #[test]
    fn constant_evaluator_collapses_front() {
        let ev = |cfg: &ModelConfig, _: u64| Ok(Evaluation { val_mse: 0.5, hw: hw(&ModelConfig { width: 8, ..*cfg }) });
        let r = nsga2_run(&SearchSpace::new(Arch::Lstm, 6), &ev, &NsgaConfig::default(), 3).unwrap();
        assert_eq!(r.front.distinct_points().len(), 1);
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let ev = |cfg: &ModelConfig, _: u64| {
            if cfg.bits == 4 {
                Err(EvalError("diverged".into()))
            } else {
                SurrogateEvaluator::default().evaluate(cfg, 0)
            }
        };
        let r = nsga2_run(&SearchSpace::new(Arch::Lstm, 6), &ev, &NsgaConfig::default(), 8).unwrap();
        let c = deployability_census(&r.trials);
        assert!(c.failed > 0);
        assert_eq!(c.failed + c.feasible + c.infeasible, 100);
        assert!(r.front.members.iter().all(|t| t.config.bits != 4));
        assert!(r.trials.iter().filter(|t| t.status == TrialStatus::Failed).all(|t| t.error.is_some()));
    }

    #[test]
    fn constrained_ranking_order() {
        let space = SearchSpace::new(Arch::Transformer, 24);
        let ev = SurrogateEvaluator::default();
        let mk = |id: usize, width: usize, bits: u8| {
            let g = Genome {
                bits: space.bits.iter().position(|&b| b == bits).unwrap(),
                batch: 0,
                width: width / 8 - 1,
                log_lr: -4.0,
            };
            evaluate_one(&space, &ev, 0, id, 0, g)
        };
        let feas = mk(0, 8, 8);
        let bad = mk(1, 64, 8);
        assert!(feas.feasible && !bad.feasible);
        let mut failed = feas.clone();
        failed.status = TrialStatus::Failed;
        failed.feasible = false;
        let pool = [&failed, &bad, &feas];
        let (r, _) = rank(&pool);
        assert!(r[2] < r[1] && r[1] < r[0]);
    }

    #[test]
    fn census_tallies() {
        let space = SearchSpace::new(Arch::Lstm, 24);
        let r = nsga2_run(&space, &SurrogateEvaluator::default(), &NsgaConfig::default(), 1).unwrap();
        assert_eq!(deployability_census(&r.trials), Census { feasible: 100, infeasible: 0, failed: 0 });
        assert_eq!(deployability_census(&[]), Census::default());
    }
}
