//! Trial archive (JSON lines) and front CSV.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::nsga2::{ParetoFront, Trial};
use super::SearchError;

pub const ARCHIVE_SCHEMA: u32 = 1;

#[derive(Serialize)]
struct LineOut<'a> {
    schema: u32,
    #[serde(flatten)]
    trial: &'a Trial,
}

#[derive(Deserialize)]
struct LineIn {
    schema: u32,
    #[serde(flatten)]
    trial: Trial,
}

/// Append one trial as a single line.
pub fn append_trial<W: Write>(mut w: W, trial: &Trial) -> Result<(), SearchError> {
    let line = serde_json::to_string(&LineOut { schema: ARCHIVE_SCHEMA, trial })
        .map_err(|e| SearchError::Archive { line: trial.id + 1, msg: e.to_string() })?;
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn write_archive<W: Write>(mut w: W, trials: &[Trial]) -> Result<(), SearchError> {
    for t in trials {
        append_trial(&mut w, t)?;
    }
    Ok(())
}

/// Blank lines are skipped.
pub fn read_archive<R: BufRead>(r: R) -> Result<Vec<Trial>, SearchError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LineIn =
            serde_json::from_str(&line).map_err(|e| SearchError::Archive { line: i + 1, msg: e.to_string() })?;
        if parsed.schema != ARCHIVE_SCHEMA {
            return Err(SearchError::Schema(parsed.schema));
        }
        out.push(parsed.trial);
    }
    Ok(out)
}

pub const FRONT_COLUMNS: [&str; 12] = [
    "trial_id",
    "b",
    "bs",
    "lr",
    "width",
    "val_mse",
    "energy_mj",
    "luts_pct",
    "bram_pct",
    "dsp_pct",
    "power_mw",
    "latency_ms",
];

pub fn write_front_csv<W: Write>(w: W, front: &ParetoFront) -> Result<(), SearchError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(FRONT_COLUMNS)?;
    for t in &front.members {
        let o = t.objectives.expect("front members are complete");
        let r = t.resources.expect("front members carry resources");
        csv.write_record([
            t.id.to_string(),
            t.config.bits.to_string(),
            t.config.batch_size.to_string(),
            t.config.lr.to_string(),
            t.config.width.to_string(),
            o.val_mse.to_string(),
            o.energy_mj.to_string(),
            r.luts_pct.to_string(),
            r.bram_pct.to_string(),
            r.dsp_pct.to_string(),
            t.power_mw.unwrap_or(f64::NAN).to_string(),
            t.latency_ms.unwrap_or(f64::NAN).to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;
    use crate::search::{nsga2_run, NsgaConfig, SearchSpace, SurrogateEvaluator};

    #[test]
    fn archive_round_trip() {
        let r = nsga2_run(
            &SearchSpace::new(Arch::Transformer, 12),
            &SurrogateEvaluator::default(),
            &NsgaConfig { trials: 30, ..Default::default() },
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_archive(&mut buf, &r.trials).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 30);
        let back = read_archive(&buf[..]).unwrap();
        let mut again = Vec::new();
        write_archive(&mut again, &back).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.len(), 30);
    }

    #[test]
    fn rejects_other_schema() {
        let r = nsga2_run(
            &SearchSpace::new(Arch::Lstm, 6),
            &SurrogateEvaluator::default(),
            &NsgaConfig { trials: 1, ..Default::default() },
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_archive(&mut buf, &r.trials).unwrap();
        let s = String::from_utf8(buf).unwrap().replace("\"schema\":1", "\"schema\":9");
        assert!(matches!(read_archive(s.as_bytes()), Err(SearchError::Schema(9))));
        assert!(matches!(read_archive(&b"{oops\n"[..]), Err(SearchError::Archive { line: 1, .. })));
    }

    #[test]
    fn front_csv_header() {
        let mut buf = Vec::new();
        write_front_csv(&mut buf, &ParetoFront::default()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), FRONT_COLUMNS.join(","));
    }
}
