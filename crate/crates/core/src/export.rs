//! CSV output for traces and per-run summaries.
//!
//! Numbers are written with `Display`, which prints the shortest string that
//! parses back to the same value.

use crate::ippso::RunResult;
use crate::scalar::Scalar;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One finished run with the metadata that goes into the CSV files.
#[derive(Debug, Clone, Copy)]
pub struct RunRecord<'a, T> {
    pub seed: u64,
    pub result: &'a RunResult<T>,
    pub runtime_seconds: f64,
}

impl<'a, T> RunRecord<'a, T> {
    fn antennas(&self) -> usize {
        self.result.final_positions.len()
    }

    fn users(&self) -> usize {
        self.result.per_user_latencies.len()
    }

    fn key(&self) -> (crate::ippso::Scheme, u64, usize) {
        (self.result.scheme, self.seed, self.antennas())
    }
}

fn sorted<'r, 'a, T>(records: &'r [RunRecord<'a, T>]) -> Vec<&'r RunRecord<'a, T>> {
    let mut v: Vec<_> = records.iter().collect();
    v.sort_by_key(|r| r.key());
    v
}

fn push_padded<T: Scalar>(line: &mut String, values: impl Iterator<Item = T>, width: usize) {
    let mut written = 0;
    for v in values {
        let _ = write!(line, ",{v}");
        written += 1;
    }
    for _ in written..width {
        line.push(',');
    }
}

pub fn trace_csv<T: Scalar>(records: &[RunRecord<'_, T>]) -> String {
    let n = records.iter().map(RunRecord::users).max().unwrap_or(0);
    let m = records.iter().map(RunRecord::antennas).max().unwrap_or(0);
    let mut out = String::from("scheme,seed,outer_iter,inner_iter,global_best_fitness,total_latency");
    for i in 1..=n {
        let _ = write!(out, ",beta_{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",antenna_x_{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",antenna_y_{i}");
    }
    out.push('\n');
    for rec in sorted(records) {
        let mut rows: Vec<_> = rec.result.trace.iter().collect();
        rows.sort_by_key(|r| (r.outer_iter, r.inner_iter));
        for row in rows {
            let mut line = format!(
                "{},{},{},{},{},{}",
                rec.result.scheme.name(),
                rec.seed,
                row.outer_iter,
                row.inner_iter,
                row.global_best_fitness,
                row.total_latency
            );
            push_padded(&mut line, row.offload_ratios.iter().copied(), n);
            push_padded(&mut line, row.positions.iter().map(|p| p.x), m);
            push_padded(&mut line, row.positions.iter().map(|p| p.y), m);
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

pub fn summary_csv<T: Scalar>(records: &[RunRecord<'_, T>]) -> String {
    let mut out = String::from("scheme,seed,M,N,total_latency,mean_rate_bps,runtime_seconds\n");
    for rec in sorted(records) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            rec.result.scheme.name(),
            rec.seed,
            rec.antennas(),
            rec.users(),
            rec.result.total_latency,
            rec.result.mean_rate(),
            rec.runtime_seconds
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExportError> {
    std::fs::write(path, contents).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `trace.csv` and `summary.csv` into `dir`, creating it if needed.
pub fn write_outputs<T: Scalar>(dir: &Path, records: &[RunRecord<'_, T>]) -> Result<(), ExportError> {
    std::fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join("trace.csv"), &trace_csv(records))?;
    write_file(&dir.join("summary.csv"), &summary_csv(records))
}
