//! Report rows, their comma-separated form and per-cell summaries.

use std::io::Write;

use serde::Serialize;

use crate::pipeline::Algorithm;
use crate::{Error, Result};

pub const HEADER: &str = "algorithm,occupancy,seed,survivor_pct,exchanges,duration_s,planning_elapsed_s,truncated";

pub const SUMMARY_HEADER: &str = "algorithm,occupancy,runs,survivor_pct_mean,survivor_pct_min,survivor_pct_max,\
exchanges_mean,exchanges_min,exchanges_max,duration_s_mean,duration_s_min,duration_s_max,\
planning_elapsed_s_mean,planning_elapsed_s_min,planning_elapsed_s_max,truncated_runs";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub occupancy: u32,
    /// Cell seed; `run --seed` with this value reproduces the row.
    pub seed: u64,
    pub survivor_pct: f64,
    pub exchanges: u64,
    pub duration_s: f64,
    pub planning_elapsed_s: f64,
    pub truncated: bool,
}

impl ReportRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{},{:.1},{:.6},{}\n",
            self.algorithm,
            self.occupancy,
            self.seed,
            self.survivor_pct,
            self.exchanges,
            self.duration_s,
            self.planning_elapsed_s,
            self.truncated
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(Error::Validation(format!("expected 8 fields, got {}: {line:?}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().map_err(|_| Error::Validation(format!("bad number {:?} in {line:?}", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse().map_err(|_| Error::Validation(format!("bad integer {:?} in {line:?}", f[i])))
        };
        Ok(ReportRow {
            algorithm: f[0].parse()?,
            occupancy: int(1)? as u32,
            seed: int(2)?,
            survivor_pct: num(3)?,
            exchanges: int(4)?,
            duration_s: num(5)?,
            planning_elapsed_s: num(6)?,
            truncated: f[7]
                .parse()
                .map_err(|_| Error::Validation(format!("bad flag {:?} in {line:?}", f[7])))?,
        })
    }
}

/// Appends rows to a report, one `write_all` per complete line.
pub struct ReportWriter<W: Write> {
    out: W,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        out.write_all(format!("{HEADER}\n").as_bytes())?;
        out.flush()?;
        Ok(ReportWriter { out })
    }

    pub fn write(&mut self, row: &ReportRow) -> Result<()> {
        self.out.write_all(row.to_line().as_bytes())?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HEADER => {}
        _ => return Err(Error::Validation("report does not start with the expected header".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(ReportRow::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: impl Iterator<Item = f64>) -> Spread {
        let v: Vec<f64> = values.collect();
        Spread {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub occupancy: u32,
    pub runs: usize,
    pub survivor_pct: Spread,
    pub exchanges: Spread,
    pub duration_s: Spread,
    pub planning_elapsed_s: Spread,
    pub truncated_runs: usize,
}

impl SummaryRow {
    pub fn to_line(&self) -> String {
        let s = |x: &Spread, p: usize| format!("{:.p$},{:.p$},{:.p$}", x.mean, x.min, x.max);
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.algorithm,
            self.occupancy,
            self.runs,
            s(&self.survivor_pct, 4),
            s(&self.exchanges, 2),
            s(&self.duration_s, 1),
            s(&self.planning_elapsed_s, 6),
            self.truncated_runs
        )
    }
}

/// Mean, min and max per (algorithm, occupancy) cell, in that order.
pub fn summarize(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Algorithm, u32)> = rows.iter().map(|r| (r.algorithm, r.occupancy)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(algorithm, occupancy)| {
            let cell: Vec<&ReportRow> =
                rows.iter().filter(|r| r.algorithm == algorithm && r.occupancy == occupancy).collect();
            SummaryRow {
                algorithm,
                occupancy,
                runs: cell.len(),
                survivor_pct: Spread::of(cell.iter().map(|r| r.survivor_pct)),
                exchanges: Spread::of(cell.iter().map(|r| r.exchanges as f64)),
                duration_s: Spread::of(cell.iter().map(|r| r.duration_s)),
                planning_elapsed_s: Spread::of(cell.iter().map(|r| r.planning_elapsed_s)),
                truncated_runs: cell.iter().filter(|r| r.truncated).count(),
            }
        })
        .collect()
}

pub fn summary_text(rows: &[ReportRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summarize(rows) {
        out.push_str(&s.to_line());
    }
    out
}
