//! Dense matrix files: a little-endian binary layout and CSV.
//!
//! Binary layout: magic `MFLW`, `u32` version, `u64` rows, `u64` cols, then
//! `rows * cols` `f64` values in row-major order. CSV files carry a header
//! row `dim0,dim1,...` followed by one matrix row per line.
//!
//! On disk a row is one sample. In memory the pipeline keeps samples as
//! columns; [`load_samples`] and [`save_samples`] transpose between the two.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const MAGIC: [u8; 4] = *b"MFLW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Binary,
    Csv,
}

impl Format {
    /// CSV for a `.csv` extension, binary otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Binary => "bin",
            Format::Csv => "csv",
        }
    }
}

pub fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    let bad = |msg: &str| HarnessError::format(path, msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad("file is shorter than the matrix header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(bad("missing MFLW magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported matrix file version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| bad("matrix shape overflows"))?;
    if bytes.len() - HEADER_LEN != payload {
        return Err(bad(&format!(
            "header declares {rows}x{cols} but payload has {} bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let data = &bytes[HEADER_LEN..];
    Ok(DMatrix::from_fn(rows, cols, |r, c| {
        let at = 8 * (r * cols + c);
        f64::from_le_bytes(data[at..at + 8].try_into().unwrap())
    }))
}

pub fn to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("dim{c}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            // `Display` prints the shortest string that parses back exactly.
            write!(out, "{}", m[(r, c)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| HarnessError::format(path, "CSV file is empty"))?;
    let cols = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                HarnessError::format(path, format!("line {}: cannot parse {:?} as a number", i + 1, field.trim()))
            })?;
            values.push(v);
        }
        if values.len() - before != cols {
            return Err(HarnessError::format(
                path,
                format!("line {}: expected {cols} fields, found {}", i + 1, values.len() - before),
            ));
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Reads a matrix exactly as stored, choosing the format from the extension.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match Format::from_path(path) {
        Format::Binary => decode(&fs::read(path).map_err(|e| HarnessError::io(path, e))?, path),
        Format::Csv => from_csv(&fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?, path),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let bytes = match Format::from_path(path) {
        Format::Binary => encode(m),
        Format::Csv => to_csv(m).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Loads a file of one sample per row as a `dim x steps` matrix.
pub fn load_samples(path: &Path) -> Result<DMatrix<f64>> {
    let m = read_matrix(path)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::format(path, "data contains non-finite values"));
    }
    Ok(m.transpose())
}

/// Writes a `dim x steps` matrix as one sample per row.
pub fn save_samples(path: &Path, data: &DMatrix<f64>) -> Result<()> {
    write_matrix(path, &data.transpose())
}
