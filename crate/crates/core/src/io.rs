//! Plain-text persistence.
//!
//! Matrices are CSV with one matrix row per line and an optional leading
//! header `# k=<rows> n=<cols>`. Files are written atomically through a
//! temporary file in the target directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::basis::Basis;
use crate::error::{OicaError, Result};

/// Write `contents` to `path` via temp file + rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| OicaError::Io(e.error))?;
    Ok(())
}

pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let (rows, cols) = m.dim();
    let mut out = format!("# k={rows} n={cols}\n");
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parse a matrix CSV. The header is optional; when present its shape must
/// match the body.
pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut declared: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut cols: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(shape) = parse_header(rest) {
                declared = Some(shape);
            }
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                OicaError::Parse(format!("line {}: bad number '{}'", lineno + 1, field.trim()))
            })?;
            values.push(v);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(OicaError::Parse(format!(
                    "line {}: expected {c} columns, found {width}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if let Some((k, n)) = declared {
        if (k, n) != (rows, cols) {
            return Err(OicaError::Parse(format!(
                "header declares {k}x{n} but body is {rows}x{cols}"
            )));
        }
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| OicaError::Parse(e.to_string()))
}

fn parse_header(rest: &str) -> Option<(usize, usize)> {
    let mut k = None;
    let mut n = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("k=") {
            k = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().ok();
        }
    }
    Some((k?, n?))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

pub fn write_basis(path: &Path, basis: &Basis) -> Result<()> {
    write_matrix(path, basis.as_array())
}

pub fn read_basis(path: &Path) -> Result<Basis> {
    Basis::new(read_matrix(path)?)
}

/// Minimal CSV table builder for tabular outputs.
#[derive(Debug, Clone)]
pub struct CsvTable {
    buf: String,
    width: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            width: header.len(),
        }
    }

    pub fn push<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut count = 0;
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{f}");
            count += 1;
        }
        debug_assert_eq!(count, self.width, "row width differs from header");
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}
