//! Tabular suite reports. CSVs are byte-deterministic under a fixed seed:
//! wall times are kept out of the CSVs and written to a separate timings
//! file instead.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{OulabError, Result};

/// One certified (or refuted) quantity.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub experiment: String,
    pub quantity: String,
    pub estimate: f64,
    pub std_err: f64,
    /// The bound or target the estimate is checked against (NaN when the
    /// row is informational).
    pub bound: f64,
    pub pass: bool,
    /// Milliseconds; excluded from the CSV so reruns are byte-identical.
    pub wall_ms: f64,
}

impl ReportRow {
    pub fn new(
        experiment: &str,
        quantity: &str,
        estimate: f64,
        std_err: f64,
        bound: f64,
        pass: bool,
    ) -> Self {
        ReportRow {
            experiment: experiment.to_string(),
            quantity: quantity.to_string(),
            estimate,
            std_err,
            bound,
            pass,
            wall_ms: 0.0,
        }
    }
}

/// 17 significant digits: round-trips every f64 exactly.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("experiment,quantity,estimate,std_err,bound,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment,
            r.quantity,
            fmt_float(r.estimate),
            fmt_float(r.std_err),
            fmt_float(r.bound),
            r.pass
        );
    }
    out
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows))
        .map_err(|e| OulabError::Config(format!("{}: {e}", path.display())))
}

pub fn write_timings(path: &Path, timings: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("suite\twall_ms\n");
    for (name, ms) in timings {
        let _ = writeln!(out, "{name}\t{ms:.1}");
    }
    std::fs::write(path, out).map_err(|e| OulabError::Config(format!("{}: {e}", path.display())))
}
