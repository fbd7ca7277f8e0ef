//! Trace serialization: CSV with a fixed header and JSON arrays.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::multiblock::MultiblockRecord;
use crate::solver::IterationRecord;

pub const CSV_HEADER: [&str; 7] = ["k", "objective", "step_norm", "w_norm", "c_k", "rho1_witness", "rho2_witness"];
pub const MULTIBLOCK_CSV_HEADER: [&str; 9] = [
    "k",
    "objective",
    "step_norm",
    "w_norm",
    "c_k",
    "rho1_witness",
    "rho2_witness",
    "step_norm_X",
    "step_norm_Y",
];

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes the single-block trace as CSV. Missing witnesses are empty cells.
pub fn write_csv<T: Display, W: Write>(records: &[IterationRecord<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.objective.to_string(),
            r.step_norm.to_string(),
            r.w_norm.to_string(),
            r.c_k.to_string(),
            r.rho1_witness.to_string(),
            opt(&r.rho2_witness),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_multiblock_csv<T: Display, W: Write>(records: &[MultiblockRecord<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MULTIBLOCK_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.objective.to_string(),
            r.step_norm.to_string(),
            r.w_norm.to_string(),
            r.c_k.to_string(),
            r.rho1_witness.to_string(),
            opt(&r.rho2_witness),
            r.step_norm_x.to_string(),
            r.step_norm_y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<R: Serialize, W: Write>(records: &[R], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

pub fn csv_string<T: Display>(records: &[IterationRecord<T>]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn save_csv<T: Display>(records: &[IterationRecord<T>], path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn save_json<R: Serialize>(records: &[R], path: impl AsRef<Path>) -> Result<()> {
    write_json(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Whitespace-separated `k objective w_norm` columns for plotting tools.
pub fn plot_data<W: Write>(rows: impl IntoIterator<Item = (usize, f64, f64)>, mut out: W) -> Result<()> {
    writeln!(out, "# k objective w_norm")?;
    for (k, f, w) in rows {
        writeln!(out, "{k} {f:e} {w:e}")?;
    }
    Ok(())
}
