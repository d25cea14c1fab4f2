//! CSV import and export of designs, traces and evaluation tables.

use std::io::{Read, Write};

use crate::ace::{AceResult, TraceRecord};
use crate::design::Design;
use crate::error::{AceError, Result};
use crate::scalar::Real;

pub const TRACE_HEADER: [&str; 7] = ["start", "phase", "sweep", "index", "utility_estimate", "p_accept", "accepted"];
pub const SUMMARY_HEADER: [&str; 6] = ["start", "averaged_utility", "sd", "accepted", "rejected", "selected"];

pub fn design_header(v: usize) -> Vec<String> {
    (1..=v).map(|j| format!("x{j}")).collect()
}

/// Writes `# key: value` metadata lines followed by the `x1..xv` table, one row per run.
pub fn write_design_csv<T: Real, W: Write>(mut w: W, design: &Design<T>, metadata: &[(&str, String)]) -> Result<()> {
    for (k, v) in metadata {
        let v = v.replace(['\n', '\r'], " ");
        writeln!(w, "# {k}: {v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(design_header(design.variables()))?;
    for row in design.rows() {
        out.write_record(row.iter().map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a design table, skipping `#` lines. Columns must be `x1..xv`.
pub fn read_design_csv<T: Real, R: Read>(r: R) -> Result<Design<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let v = headers.len();
    if v == 0 || headers.iter().ne(design_header(v).iter().map(String::as_str)) {
        return Err(AceError::InvalidArgument(format!("design header must be x1..x{v}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(T::of(x)),
                _ => Err(AceError::InvalidArgument(format!("design row {}: `{f}` is not a finite number", line + 1))),
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(Design::empty(v));
    }
    Design::from_rows(&rows)
}

pub fn write_trace_csv<'a, T: Real + 'a, W: Write>(w: W, records: impl IntoIterator<Item = &'a TraceRecord<T>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in records {
        out.write_record([
            r.start.to_string(),
            r.phase.to_string(),
            r.sweep.to_string(),
            r.index.to_string(),
            r.utility.to_string(),
            r.p_accept.to_string(),
            u8::from(r.accepted).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per successful start.
pub fn write_summary_csv<T: Real, W: Write>(w: W, result: &AceResult<T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for s in &result.starts {
        let sd = if s.evaluations.len() > 1 { crate::scalar::sample_variance(&s.evaluations).sqrt() } else { T::zero() };
        out.write_record([
            s.result.start.to_string(),
            s.averaged_utility.to_string(),
            sd.to_string(),
            s.result.accepted.to_string(),
            s.result.rejected.to_string(),
            u8::from(s.result.start == result.selected).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Generic numeric table with a fixed header.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(AceError::InvalidArgument("row width differs from header".into()));
        }
        out.write_record(row.iter().map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
