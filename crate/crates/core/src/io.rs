//! AXIFIELD binary files and CSV export.
//!
//! Layout: 16-byte magic, a `u32` little-endian byte count, a UTF-8 JSON
//! header `{n_r, n_z, r_max, z_max}`, then `n_r·n_z` little-endian `f64`
//! values, r outer and x3 inner.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxiGrid, Field};
use crate::scalar::Real;

pub const AXIFIELD_MAGIC: [u8; 16] = *b"AXIFIELD\0\0\0\0\0\0\0\x01";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub z_max: f64,
}

impl GridHeader {
    pub fn of<S: Real>(g: &AxiGrid<S>) -> Self {
        Self { n_r: g.n_r(), n_z: g.n_z(), r_max: g.r_max().to_f64_lossy(), z_max: g.z_max().to_f64_lossy() }
    }

    pub fn build<S: Real>(&self) -> Result<Arc<AxiGrid<S>>> {
        AxiGrid::shared(S::lit(self.r_max), S::lit(self.z_max), self.n_r, self.n_z)
    }
}

pub fn write_raw<W: Write>(header: &GridHeader, values: &[f64], mut w: W) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(&AXIFIELD_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads header and values without interpreting them as a [`Field`]
/// (tabulated potentials need nonzero boundary values).
pub fn read_raw<R: Read>(mut r: R) -> Result<(GridHeader, Vec<f64>)> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if magic != AXIFIELD_MAGIC {
        return Err(Error::Format("bad AXIFIELD magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: GridHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))?;
    let n = header.n_r.checked_mul(header.n_z).ok_or_else(|| Error::Format("header size overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(Error::Format(format!("expected {} value bytes, found {}", 8 * n, bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values))
}

pub fn write_axifield<S: Real, W: Write>(u: &Field<S>, w: W) -> Result<()> {
    let values: Vec<f64> = u.values().iter().map(|v| v.to_f64_lossy()).collect();
    write_raw(&GridHeader::of(u.grid()), &values, w)
}

pub fn read_axifield<S: Real, R: Read>(r: R) -> Result<Field<S>> {
    let (header, values) = read_raw(r)?;
    let grid = header.build::<S>()?;
    Field::from_values(&grid, values.into_iter().map(S::lit).collect())
}

pub fn save_axifield<S: Real>(u: &Field<S>, path: impl AsRef<Path>) -> Result<()> {
    write_axifield(u, BufWriter::new(File::create(path)?))
}

pub fn load_axifield<S: Real>(path: impl AsRef<Path>) -> Result<Field<S>> {
    read_axifield(BufReader::new(File::open(path)?))
}

/// CSV with columns `r,x3,value`, one row per node in storage order.
pub fn write_csv<S: Real, W: Write>(u: &Field<S>, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "r,x3,value")?;
    let g = u.grid();
    for (k, v) in u.values().iter().enumerate() {
        let (r, z) = g.coords(k);
        writeln!(w, "{},{},{}", r.to_f64_lossy(), z.to_f64_lossy(), v.to_f64_lossy())?;
    }
    w.flush()?;
    Ok(())
}
