use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::linalg::RealMatrix;
use crate::{CapeError, Result};

/// File magic of the binary matrix container.
pub const MAGIC: &[u8; 8] = b"CAPEMAT1";

/// Writes `m` as magic, `u32` rank (2), two `u64` dims and row-major
/// little-endian `f64` values.
pub fn write_matrix<W: Write>(mut out: W, m: &RealMatrix) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&2u32.to_le_bytes())?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| CapeError::Format(format!("truncated matrix file: {e}")))?;
    Ok(buf)
}

/// Reads a matrix written by [`write_matrix`]. Rank-1 files load as a
/// single column.
pub fn read_matrix<R: Read>(mut input: R) -> Result<RealMatrix> {
    let magic: [u8; 8] = read_array(&mut input)?;
    if &magic != MAGIC {
        return Err(CapeError::Format("bad magic".into()));
    }
    let rank = u32::from_le_bytes(read_array(&mut input)?);
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(u64::from_le_bytes(read_array(&mut input)?) as usize);
    }
    let (rows, cols) = match dims.as_slice() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => return Err(CapeError::Format(format!("unsupported rank {rank}"))),
    };
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| CapeError::Format("dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(read_array(&mut input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(CapeError::Format("trailing bytes after matrix".into()));
    }
    Ok(RealMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_matrix(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix(&mut out, m)?;
    out.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<RealMatrix> {
    read_matrix(BufReader::new(File::open(path)?))
}

fn csv_err(e: csv::Error) -> CapeError {
    CapeError::Format(e.to_string())
}

/// Writes `m` as headerless CSV, one matrix row per line.
pub fn save_matrix_csv(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<RealMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| CapeError::Format(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CapeError::Format("ragged CSV matrix".into()));
    }
    Ok(RealMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
