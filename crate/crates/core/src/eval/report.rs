//! Report files. CSV columns are fixed:
//!
//! - `metrics.csv`: `query_id,method,k,hr,rr,r10_50,time_ms`
//! - `summary.csv`: `method,k,queries,hr,rr,r10_50,time_ms,visited`
//! - `sweep_*.csv`: `x,hr,rr,r10_50,time_ms,visited`
//!
//! Plot data (`fig*.dat`) is whitespace-separated columns under a `#`
//! header line. With `timings` off every time column is written as 0 so
//! that reruns are byte-identical.

use std::io::Write;

use super::{QueryEval, Summary, SweepPoint};
use crate::error::Result;

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn ms(x: f64, timings: bool) -> String {
    num(if timings { x } else { 0.0 })
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[QueryEval], timings: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["query_id", "method", "k", "hr", "rr", "r10_50", "time_ms"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.query.to_string(),
            r.method.clone(),
            r.k.to_string(),
            num(r.hr),
            num(r.rr),
            opt(r.r10_50),
            ms(r.time_ms, timings),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[Summary], timings: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "k", "queries", "hr", "rr", "r10_50", "time_ms", "visited"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.method.clone(),
            r.k.to_string(),
            r.queries.to_string(),
            num(r.hr),
            num(r.rr),
            opt(r.r10_50),
            ms(r.time_ms, timings),
            num(r.visited),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint], timings: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "hr", "rr", "r10_50", "time_ms", "visited"]).map_err(csv_err)?;
    for p in points {
        out.write_record([num(p.x), num(p.hr), num(p.rr), opt(p.r10_50), ms(p.time_ms, timings), num(p.visited)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `columns` names every column, x first; each row must match its length.
pub fn write_dat<W: Write>(mut w: W, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# {}", columns.join(" "))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|&x| num(x)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    std::io::Error::other(e).into()
}
