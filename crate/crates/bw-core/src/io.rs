//! Text formats: the `bwmat v1` matrix file and flat key=value blocks.
//!
//! Matrices are serialized with 17 significant digits so that a write/read
//! round trip reproduces every entry bit-exactly.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{BwError, Result};
use crate::psd::SymMatrix;

/// Formats a float with round-trip precision (17 significant digits).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a symmetric matrix in `bwmat v1` format.
pub fn write_bwmat(w: &mut impl Write, m: &SymMatrix) -> Result<()> {
    let d = m.dim();
    writeln!(w, "bwmat v1 {d}")?;
    let mat = m.as_matrix();
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format_float(mat[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads a matrix in `bwmat v1` format.
pub fn read_bwmat(r: &mut impl BufRead) -> Result<SymMatrix> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "bwmat" || parts[1] != "v1" {
        return Err(BwError::Parse(format!(
            "bad bwmat header: {:?}",
            header.trim_end()
        )));
    }
    let d: usize = parts[2]
        .parse()
        .map_err(|_| BwError::Parse(format!("bad dimension: {:?}", parts[2])))?;
    if d == 0 {
        return Err(BwError::Parse("dimension must be positive".into()));
    }
    let mut entries = Vec::with_capacity(d * d);
    let mut line = String::new();
    for i in 0..d {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(BwError::Parse(format!("unexpected end of file at row {i}")));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| BwError::Parse(format!("bad float {tok:?} in row {i}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(BwError::Parse(format!(
                "row {i} has {} entries, expected {d}",
                row.len()
            )));
        }
        entries.extend(row);
    }
    SymMatrix::new(DMatrix::from_row_slice(d, d, &entries))
}

/// Parses a symmetric matrix from a `bwmat v1` string.
pub fn parse_bwmat(text: &str) -> Result<SymMatrix> {
    read_bwmat(&mut text.as_bytes())
}

/// Serializes a symmetric matrix to a `bwmat v1` string.
pub fn bwmat_to_string(m: &SymMatrix) -> String {
    let mut buf = Vec::new();
    write_bwmat(&mut buf, m).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("bwmat output is ASCII")
}

/// Parses a flat key=value block. Blank lines and `#` comments are ignored.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BwError::Parse(format!("line {}: expected key=value", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Renders key=value pairs, one per line.
pub fn kv_to_string(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}
