//! CSV files for operators and vectors.
//!
//! Operator files carry a two-line preamble (`kind,rows,cols,T,mu,t,tau`
//! and its values) followed by one matrix row per line. Values are written
//! in shortest round-trip form so a file read back reproduces the matrix
//! bit for bit. Vector files have a `value` header and one entry per line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::diffusion::{DiffusionOperator, OperatorKind};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("nothing to write")]
    Empty,
}

const OPERATOR_HEADER: [&str; 7] = ["kind", "rows", "cols", "T", "mu", "t", "tau"];

/// Twelve significant digits.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn lossless(x: f64) -> String {
    format!("{x:e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64, IoError> {
    s.trim().parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("not a number: {s:?}"),
    })
}

fn parse_usize(s: &str, line: usize) -> Result<usize, IoError> {
    s.trim().parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("not a count: {s:?}"),
    })
}

pub fn write_operator(path: &Path, op: &DiffusionOperator) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(OPERATOR_HEADER)?;
    let m = op.matrix();
    let (kind, mu, t, tau) = match op.kind() {
        OperatorKind::Interval { mu, t } => ("interval", lossless(mu), lossless(t), String::new()),
        OperatorKind::Graph { tau } => ("graph", String::new(), String::new(), lossless(tau)),
    };
    let big_t = match op.kind() {
        OperatorKind::Interval { .. } => lossless(op.effective_time()),
        OperatorKind::Graph { .. } => String::new(),
    };
    w.write_record([
        kind.to_string(),
        m.nrows().to_string(),
        m.ncols().to_string(),
        big_t,
        mu,
        t,
        tau,
    ])?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| lossless(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_operator(path: &Path) -> Result<DiffusionOperator, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(OPERATOR_HEADER) {
        return Err(IoError::Parse {
            line: 1,
            msg: format!("expected header {}", OPERATOR_HEADER.join(",")),
        });
    }
    let mut records = r.records();
    let meta = records.next().ok_or(IoError::Parse {
        line: 2,
        msg: "missing operator metadata".into(),
    })??;
    let rows = parse_usize(&meta[1], 2)?;
    let cols = parse_usize(&meta[2], 2)?;
    let kind = match meta[0].trim() {
        "interval" => OperatorKind::Interval {
            mu: parse_f64(&meta[4], 2)?,
            t: parse_f64(&meta[5], 2)?,
        },
        "graph" => OperatorKind::Graph {
            tau: parse_f64(&meta[6], 2)?,
        },
        other => {
            return Err(IoError::Parse {
                line: 2,
                msg: format!("unknown operator kind {other:?}"),
            })
        }
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 3;
        if rec.len() != cols {
            return Err(IoError::Parse {
                line,
                msg: format!("expected {cols} values, found {}", rec.len()),
            });
        }
        for v in rec.iter() {
            data.push(parse_f64(v, line)?);
        }
    }
    if data.len() != rows * cols {
        return Err(IoError::Parse {
            line: 3 + data.len() / cols.max(1),
            msg: format!("expected {rows} matrix rows"),
        });
    }
    Ok(DiffusionOperator::from_parts(
        DMatrix::from_row_slice(rows, cols, &data),
        kind,
    ))
}

pub fn write_vector(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "value")?;
    for v in values {
        writeln!(w, "{}", lossless(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        if i == 0 && field.parse::<f64>().is_err() {
            continue;
        }
        out.push(parse_f64(field, i + 1)?);
    }
    Ok(out)
}
