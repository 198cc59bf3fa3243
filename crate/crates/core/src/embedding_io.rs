//! Text vector files in the word2vec layout.
//!
//! ```text
//! <count> <dim>
//! key v1 v2 ... vdim
//! ```
//!
//! Values are written with 17 significant digits so a file round-trips
//! exactly. A header may carry extra whitespace-separated fields after the
//! dimension; they are preserved in [`VectorFile::extra`].

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorFileError {
    #[error("missing or malformed header line")]
    Header,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("header announces {expected} rows, found {found}")]
    Count { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub extra: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_vectors<'a, I>(dim: usize, extra: &[String], rows: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let rows: Vec<_> = rows.into_iter().collect();
    let mut out = format!("{} {}", rows.len(), dim);
    for e in extra {
        out.push(' ');
        out.push_str(e);
    }
    out.push('\n');
    for (key, v) in rows {
        debug_assert_eq!(v.len(), dim);
        out.push_str(key);
        for x in v {
            out.push(' ');
            out.push_str(&format_value(*x));
        }
        out.push('\n');
    }
    out
}

pub fn read_vectors(text: &str) -> Result<VectorFile, VectorFileError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(VectorFileError::Header)?;
    let mut fields = header.split_whitespace();
    let count: usize = fields.next().and_then(|t| t.parse().ok()).ok_or(VectorFileError::Header)?;
    let dim: usize = fields.next().and_then(|t| t.parse().ok()).ok_or(VectorFileError::Header)?;
    let extra = fields.map(str::to_string).collect();
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let key = parts.next().unwrap_or_default().to_string();
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| VectorFileError::Line { line: i + 2, message: e.to_string() })?;
        if values.len() != dim {
            return Err(VectorFileError::Line {
                line: i + 2,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(VectorFileError::Line { line: i + 2, message: "non-finite value".into() });
        }
        rows.push((key, values));
    }
    if rows.len() != count {
        return Err(VectorFileError::Count { expected: count, found: rows.len() });
    }
    Ok(VectorFile { dim, extra, rows })
}
