//! Constrained bi-objective search (validation MSE vs energy) with NSGA-II.

mod archive;
mod evaluator;
mod nsga2;
mod pareto;
mod space;

pub use archive::{append_trial, read_archive, write_archive, write_front_csv, ARCHIVE_SCHEMA, FRONT_COLUMNS};
pub use evaluator::{EvalError, Evaluation, Evaluator, SurrogateEvaluator, TrainingEvaluator};
pub use nsga2::{
    deployability_census, nsga2_run, nsga2_run_with, pareto_extract, trial_seed, Census, NsgaConfig, ParetoFront,
    SearchResult, Trial, TrialStatus,
};
pub use pareto::{crowding_distance, dominates, hypervolume, non_dominated_sort, pareto_indices, Objectives};
pub use space::{Genome, SearchSpace, GENE_COUNT};

use crate::model::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("objectives must be finite, got ({}, {})", .0.val_mse, .0.energy_mj)]
    NonFinite(Objectives),
    #[error("search space: {0}")]
    Space(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("search settings: {0}")]
    Budget(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("archive line {line}: {msg}")]
    Archive { line: usize, msg: String },
    #[error("unsupported archive schema {0}")]
    Schema(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
