//! Minimal raster container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "BLM1" | version u16 | dtype u8 | nx u32 | ny u32 | nz u32 | payload
//! ```
//!
//! dtype 0 is bit-packed binary (row-major x fastest, 8 voxels per byte,
//! LSB first), dtype 1 is 32-bit floats in the same voxel order. The payload
//! length must match the dims exactly; trailing bytes are an error.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{data_err, Result};

const MAGIC: &[u8; 4] = b"BLM1";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Raster {
    Bits { dims: [u32; 3], cells: Vec<bool> },
    F32 { dims: [u32; 3], cells: Vec<f32> },
}

impl Raster {
    pub fn dims(&self) -> [u32; 3] {
        match self {
            Raster::Bits { dims, .. } | Raster::F32 { dims, .. } => *dims,
        }
    }

    pub fn num_cells(&self) -> usize {
        let [nx, ny, nz] = self.dims();
        nx as usize * ny as usize * nz as usize
    }

    pub fn as_bits(&self) -> Result<&[bool]> {
        match self {
            Raster::Bits { cells, .. } => Ok(cells),
            Raster::F32 { .. } => data_err("expected a binary raster, found float"),
        }
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match self {
            Raster::F32 { cells, .. } => Ok(cells),
            Raster::Bits { .. } => data_err("expected a float raster, found binary"),
        }
    }
}

fn check_dims(dims: [u32; 3], len: usize, what: &str) -> Result<()> {
    let want = dims[0] as usize * dims[1] as usize * dims[2] as usize;
    if want == 0 {
        return data_err(format!("{what}: dims {dims:?} must be positive"));
    }
    if len != want {
        return data_err(format!("{what}: {len} cells for dims {dims:?} (need {want})"));
    }
    Ok(())
}

pub fn write_bits(path: &Path, dims: [u32; 3], cells: &[bool]) -> Result<()> {
    check_dims(dims, cells.len(), "raster write")?;
    let mut payload = vec![0u8; cells.len().div_ceil(8)];
    for (i, &b) in cells.iter().enumerate() {
        if b {
            payload[i / 8] |= 1 << (i % 8);
        }
    }
    write_raw(path, 0, dims, &payload)
}

pub fn write_f32(path: &Path, dims: [u32; 3], cells: &[f32]) -> Result<()> {
    check_dims(dims, cells.len(), "raster write")?;
    let mut payload = Vec::with_capacity(cells.len() * 4);
    for v in cells {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_raw(path, 1, dims, &payload)
}

/// Convenience: f64 values narrowed to the raster's 32-bit storage.
pub fn write_f64_as_f32(path: &Path, dims: [u32; 3], cells: &[f64]) -> Result<()> {
    let narrowed: Vec<f32> = cells.iter().map(|&v| v as f32).collect();
    write_f32(path, dims, &narrowed)
}

fn write_raw(path: &Path, dtype: u8, dims: [u32; 3], payload: &[u8]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 2 + 1 + 12 + payload.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(dtype);
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(payload);
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path)
        .map_err(|e| crate::Error::Data(format!("{}: {e}", path.display())))?;
    let ctx = path.display();
    if bytes.len() < 19 {
        return data_err(format!("{ctx}: truncated raster header"));
    }
    if &bytes[0..4] != MAGIC {
        return data_err(format!("{ctx}: bad magic, not a raster file"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return data_err(format!("{ctx}: unsupported raster version {version}"));
    }
    let dtype = bytes[6];
    let mut dims = [0u32; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(bytes[7 + 4 * i..11 + 4 * i].try_into().unwrap());
    }
    let n = dims[0] as usize * dims[1] as usize * dims[2] as usize;
    if n == 0 {
        return data_err(format!("{ctx}: zero-sized dims {dims:?}"));
    }
    let payload = &bytes[19..];
    match dtype {
        0 => {
            if payload.len() != n.div_ceil(8) {
                return data_err(format!(
                    "{ctx}: bit payload is {} bytes, dims {dims:?} need {}",
                    payload.len(),
                    n.div_ceil(8)
                ));
            }
            let cells = (0..n).map(|i| payload[i / 8] >> (i % 8) & 1 == 1).collect();
            Ok(Raster::Bits { dims, cells })
        }
        1 => {
            if payload.len() != 4 * n {
                return data_err(format!(
                    "{ctx}: float payload is {} bytes, dims {dims:?} need {}",
                    payload.len(),
                    4 * n
                ));
            }
            let cells = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Raster::F32 { dims, cells })
        }
        other => data_err(format!("{ctx}: unknown raster dtype {other}")),
    }
}
