//! Matrix files.
//!
//! Two formats are understood:
//!
//! * CSV (RFC 4180), one matrix row per record, no header unless asked for;
//! * `GRMMAT01` binary: the 8-byte magic `GRMMAT01`, row and column counts as
//!   little-endian `u64`, then `rows · cols` little-endian `f64` values in
//!   row-major order.
//!
//! [`read_matrix`] sniffs the magic and picks the right reader.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

pub const BINARY_MAGIC: &[u8; 8] = b"GRMMAT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.bin` and `.grm` files are binary, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("grm") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

fn data_err(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}

/// Parses a CSV matrix. `header` skips the first record.
pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(data_err(format!(
                    "record {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                data_err(format!(
                    "record {}, field {}: cannot parse {field:?}",
                    line + 1,
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(data_err(format!(
                    "record {}, field {}: not finite",
                    line + 1,
                    j + 1
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| data_err("empty matrix file"))?;
    DataMatrix::new(rows, cols, data).map_err(|e| data_err(e.to_string()))
}

/// Writes a CSV matrix using the shortest round-tripping float repr.
pub fn write_csv<W: Write>(w: &DataMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for i in 0..w.rows() {
        wtr.write_record(w.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<DataMatrix> {
    let mut head = [0u8; 24];
    reader
        .read_exact(&mut head)
        .map_err(|_| data_err("binary matrix header truncated"))?;
    if &head[..8] != BINARY_MAGIC {
        return Err(data_err("missing GRMMAT01 magic"));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(head[16..24].try_into().expect("8 bytes"));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| data_err("binary matrix dimensions overflow"))?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() as u64 != count {
        return Err(data_err(format!(
            "binary matrix body has {} bytes, expected {count}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DataMatrix::new(rows as usize, cols as usize, data).map_err(|e| data_err(e.to_string()))
}

pub fn write_binary<W: Write>(w: &DataMatrix, mut writer: W) -> Result<()> {
    writer.write_all(BINARY_MAGIC)?;
    writer.write_all(&(w.rows() as u64).to_le_bytes())?;
    writer.write_all(&(w.cols() as u64).to_le_bytes())?;
    for v in w.as_slice() {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a matrix file, detecting the binary magic; `header` only applies to CSV.
pub fn read_matrix(path: &Path, header: bool) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice(), header)
    }
}

pub fn write_matrix(w: &DataMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let buf = std::io::BufWriter::new(file);
    match format {
        MatrixFormat::Csv => write_csv(w, buf),
        MatrixFormat::Binary => write_binary(w, buf),
    }
}
