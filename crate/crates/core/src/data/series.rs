use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use super::DataError;

pub const LEVEL_MIN: f64 = 0.0;
pub const LEVEL_MAX: f64 = 6.0;
/// Gaps up to this many missing hours are forward-filled; longer gaps split
/// the series into separate runs.
pub const MAX_FILL_HOURS: i64 = 3;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly basin levels in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub levels: Vec<f64>,
}

/// A hole in the hourly grid: `missing` hours between data row `after_row`
/// (1-based, header excluded) and the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub after_row: usize,
    pub missing: i64,
}

#[derive(Debug, Deserialize)]
struct Record {
    timestamp: String,
    level_m: f64,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

impl TimeSeries {
    /// Build from values on a regular hourly grid starting at `start`.
    pub fn hourly(start: NaiveDateTime, levels: Vec<f64>) -> Self {
        let timestamps = (0..levels.len()).map(|i| start + TimeDelta::hours(i as i64)).collect();
        Self { timestamps, levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn gaps(&self) -> Vec<Gap> {
        self.timestamps
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let missing = (w[1] - w[0]).num_hours() - 1;
                (missing > 0).then_some(Gap { after_row: i + 1, missing })
            })
            .collect()
    }

    /// Contiguous hourly runs after forward-filling short gaps.
    pub fn runs(&self) -> Vec<Vec<f64>> {
        let mut runs = Vec::new();
        let mut cur: Vec<f64> = Vec::new();
        for i in 0..self.len() {
            if i > 0 {
                let missing = (self.timestamps[i] - self.timestamps[i - 1]).num_hours() - 1;
                if missing > MAX_FILL_HOURS {
                    runs.push(std::mem::take(&mut cur));
                } else {
                    let last = self.levels[i - 1];
                    cur.extend(std::iter::repeat_n(last, missing.max(0) as usize));
                }
            }
            cur.push(self.levels[i]);
        }
        if !cur.is_empty() {
            runs.push(cur);
        }
        runs
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["timestamp", "level_m"])?;
        for (t, v) in self.timestamps.iter().zip(&self.levels) {
            wr.write_record([t.format(TS_FORMAT).to_string(), format!("{v:.4}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DataError> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "level_m" {
            return Err(DataError::Header(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut timestamps: Vec<NaiveDateTime> = Vec::new();
        let mut levels = Vec::new();
        for (i, rec) in rd.deserialize::<Record>().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| DataError::Parse { row, msg: e.to_string() })?;
            let ts = parse_timestamp(&rec.timestamp)
                .ok_or_else(|| DataError::Parse { row, msg: format!("bad timestamp {:?}", rec.timestamp) })?;
            if !rec.level_m.is_finite() || !(LEVEL_MIN..=LEVEL_MAX).contains(&rec.level_m) {
                return Err(DataError::OutOfRange { row, value: rec.level_m });
            }
            if let Some(&prev) = timestamps.last() {
                if ts == prev {
                    return Err(DataError::DuplicateTimestamp { row });
                }
                if ts < prev {
                    return Err(DataError::NonMonotonic { row });
                }
                let step = ts - prev;
                if step.num_seconds() % 3600 != 0 {
                    return Err(DataError::IrregularSpacing { row });
                }
            }
            timestamps.push(ts);
            levels.push(rec.level_m);
        }
        if levels.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Self { timestamps, levels })
    }
}

/// Load a `timestamp,level_m` CSV and validate it.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries, DataError> {
    let f = std::fs::File::open(path.as_ref())?;
    let s = TimeSeries::read_csv(std::io::BufReader::new(f))?;
    for g in s.gaps() {
        log::warn!("gap of {} h after row {}", g.missing, g.after_row);
    }
    Ok(s)
}
