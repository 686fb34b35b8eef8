use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SweepResult, SweepRow};
use crate::error::Result;

pub const CSV_HEADER: &str =
    "method,param,value,repeat,frob,spectral,rescaled,lower_bound,wall_ms,seed";

/// CSV text with one line per row. `f64` values use Rust's shortest
/// round-trip formatting.
pub fn to_csv_string(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        let SweepRow {
            method,
            param,
            value,
            repeat,
            frob,
            spectral,
            rescaled,
            lower_bound,
            wall_ms,
            seed,
        } = row;
        writeln!(out, "{method},{param},{value},{repeat},{frob},{spectral},{rescaled},{lower_bound},{wall_ms},{seed}")
            .expect("writing to a String");
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(result))?;
    Ok(())
}

/// Reads rows written by [`emit_csv`]. Failure details are not stored in the file.
pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize::<SweepRow>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        rows,
        failures: Vec::new(),
    })
}
