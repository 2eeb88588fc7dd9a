//! Matrix files, hashing and small JSON helpers.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    order: String,
}

/// Binary matrix: one JSON header line, then little-endian `f64`s in
/// row-major order.
pub fn write_matrix_binary<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    let header = Header {
        rows: m.nrows(),
        cols: m.ncols(),
        order: "row-major".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.order != "row-major" {
        return invalid(format!("unsupported matrix order `{}`", header.order));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = header.rows * header.cols * 8;
    if bytes.len() != expected {
        return invalid(format!(
            "matrix body has {} bytes, header implies {expected}",
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(header.rows, header.cols, &values))
}

/// Headerless CSV, one matrix row per line. Values round-trip exactly.
pub fn write_matrix_csv<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "row {rows} has {} values, expected {c}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("row {rows}: `{field}` is not a number"))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}

/// Reads either format, telling them apart by the leading `{` of the header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    if bytes.first() == Some(&b'{') {
        read_matrix_binary(&bytes[..])
    } else {
        read_matrix_csv(&bytes[..])
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, csv: bool) -> Result<()> {
    let mut buf = Vec::new();
    if csv {
        write_matrix_csv(&mut buf, m)?;
    } else {
        write_matrix_binary(&mut buf, m)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
