//! Basin-level series: CSV ingestion, windowing, splits, normalization and a
//! synthetic generator.

mod series;
mod synth;
mod window;

pub use series::{load_csv, Gap, TimeSeries, LEVEL_MAX, LEVEL_MIN, MAX_FILL_HOURS};
pub use synth::{sine, synthesize, synthesize_with, SynthParams, Synthetic};
pub use window::{
    chronological_split, make_windows, mse, windows_from_runs, Normalizer, SplitSpec, Splits, TestBoundary,
    WindowedDataset,
};

/// Hours in a non-leap year; the full-size synthetic series spans three of them.
pub const HOURS_PER_YEAR: usize = 8_760;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `timestamp,level_m`, found `{0}`")]
    Header(String),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("row {row}: level {value} outside [0, 6] m")]
    OutOfRange { row: usize, value: f64 },
    #[error("row {row}: duplicate timestamp")]
    DuplicateTimestamp { row: usize },
    #[error("row {row}: timestamp earlier than previous row")]
    NonMonotonic { row: usize },
    #[error("row {row}: spacing is not a whole number of hours")]
    IrregularSpacing { row: usize },
    #[error("no data rows")]
    Empty,
    #[error("window length must be positive, got {0}")]
    InvalidWindow(usize),
    #[error("series of length {len} too short for window {n}")]
    TooShort { len: usize, n: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{0} segment has no windows")]
    EmptySegment(&'static str),
    #[error("training series is constant; cannot normalize")]
    ConstantSeries,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// A fully prepared, normalized forecasting problem.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub splits: Splits,
    pub normalizer: Normalizer,
}

/// Window, split chronologically and z-score with training statistics.
pub fn prepare(series: &TimeSeries, n: usize, spec: &SplitSpec) -> Result<Prepared, DataError> {
    let ds = windows_from_runs(&series.runs(), n)?;
    let raw = chronological_split(&ds, spec)?;
    let normalizer = Normalizer::fit_dataset(&raw.train)?;
    let splits = Splits {
        train: normalizer.apply_dataset(&raw.train),
        val: normalizer.apply_dataset(&raw.val),
        test: normalizer.apply_dataset(&raw.test),
    };
    Ok(Prepared { splits, normalizer })
}
