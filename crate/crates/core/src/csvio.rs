//! Minimal numeric CSV reading and writing.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! written and read back is bit-identical.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Parses comma-separated numeric rows. Blank lines are skipped. With
/// `header`, the first non-blank line is skipped. Errors carry 1-based line
/// and column positions.
pub fn parse_numeric_rows(text: &str, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut header_pending = header;
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let row = parse_row(line, lineno + 1)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    column: row.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(col, field)| {
            let field = field.trim();
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno,
                column: col + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::Parse {
                    line: lineno,
                    column: col + 1,
                    message: format!("`{field}` is not finite"),
                })
            }
        })
        .collect()
}

/// Reads a matrix, one row per line. A first line with no numeric field is
/// treated as a header.
pub fn read_matrix(text: &str) -> Result<Matrix> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    let header = first.is_some_and(|l| l.split(',').all(|f| f.trim().parse::<f64>().is_err()));
    let rows = parse_numeric_rows(text, header)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "no numeric rows".into(),
        });
    }
    Ok(Matrix::from_rows(&rows))
}

pub fn write_matrix(m: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for i in 0..m.rows() {
        let fields: Vec<String> = m.row(i).iter().map(|x| format_float(*x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Shortest round-trip representation; non-finite values as `inf`, `-inf`, `nan`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}
