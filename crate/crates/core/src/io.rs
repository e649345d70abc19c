//! Binary snapshots and the diagnostics CSV.
//!
//! Snapshot layout, all little-endian: magic `DHYM`, `u32` version, `u32` n,
//! `2n` `u32` axis sizes, then the `f64` values in row-major order. The box
//! itself is not stored; a reader supplies it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::DiagnosticsRow;
use crate::grid::{make_grid, GridSpec, ScalarField, MAX_DIM};

pub const MAGIC: &[u8; 4] = b"DHYM";
pub const VERSION: u32 = 1;

pub fn encode_snapshot(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(12 + 4 * g.axes() + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    for &d in g.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::Snapshot {
            offset,
            msg: format!("size mismatch: header truncated at {} bytes", bytes.len()),
        })
}

/// Header of a snapshot: `n` and the axis sizes.
pub fn decode_header(bytes: &[u8]) -> Result<(usize, Vec<usize>)> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Snapshot {
            offset: 0,
            msg: "bad magic, expected \"DHYM\"".into(),
        });
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Snapshot {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let n = read_u32(bytes, 8)? as usize;
    if n == 0 || n > MAX_DIM {
        return Err(Error::Snapshot {
            offset: 8,
            msg: format!("dimension {n} outside 1..={MAX_DIM}"),
        });
    }
    let dims = (0..2 * n)
        .map(|k| read_u32(bytes, 12 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok((n, dims))
}

/// Decodes a snapshot onto `grid`, whose axis sizes must match the header.
pub fn decode_snapshot(bytes: &[u8], grid: &GridSpec) -> Result<ScalarField> {
    let (n, dims) = decode_header(bytes)?;
    if n != grid.n() || dims != grid.dims() {
        return Err(Error::GridMismatch(format!(
            "snapshot has n = {n}, dims {dims:?}; grid has n = {}, dims {:?}",
            grid.n(),
            grid.dims()
        )));
    }
    let start = 12 + 8 * n;
    let count: usize = dims.iter().product();
    let expected = start + 8 * count;
    if bytes.len() != expected {
        return Err(Error::Snapshot {
            offset: start,
            msg: format!("size mismatch: {} bytes, expected {expected}", bytes.len()),
        });
    }
    let values = bytes[start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    ScalarField::new(grid.clone(), values)
}

pub fn write_snapshot(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, encode_snapshot(field))?;
    Ok(())
}

/// Reads a snapshot onto a box `[lo, hi]`, with the grid rebuilt from the
/// stored axis sizes.
pub fn read_snapshot(path: &Path, lo: &[f64], hi: &[f64]) -> Result<ScalarField> {
    let bytes = fs::read(path)?;
    let (n, dims) = decode_header(&bytes)?;
    let grid = make_grid(n, lo, hi, &dims)?;
    decode_snapshot(&bytes, &grid)
}

pub const DIAGNOSTICS_HEADER: &str = "t,J,S,sup_dtu,theta_min,theta_max,lambda_min,residual,comparison_ok";

/// Seventeen significant digits, enough to round-trip every `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_diagnostics(rows: &[DiagnosticsRow]) -> String {
    let mut s = String::with_capacity(200 * (rows.len() + 1));
    s.push_str(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in rows {
        let fields = [
            r.t,
            r.j,
            r.s,
            r.sup_dtu,
            r.theta_min,
            r.theta_max,
            r.lambda_min,
            r.residual,
        ];
        for f in fields {
            s.push_str(&num(f));
            s.push(',');
        }
        s.push_str(if r.comparison_ok { "true" } else { "false" });
        s.push('\n');
    }
    s
}

pub fn write_diagnostics(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(format_diagnostics(rows).as_bytes())?;
    Ok(())
}
