//! GMGRID01 descriptor grid files.
//!
//! Layout: the 8-byte magic `GMGRID01`, then height, width and dim as
//! little-endian `u32`, then `height * width * dim` little-endian `f32`
//! values in row-major cell order. The cell size is not stored; it comes
//! from the view metadata.

use std::path::Path;

use geomatch_core::dense::FeatureGrid;

use crate::error::{read_file, write_file, CliError, Result};

pub const MAGIC: &[u8; 8] = b"GMGRID01";
const HEADER_LEN: usize = 8 + 3 * 4;

pub fn encode_grid(grid: &FeatureGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [grid.height(), grid.width(), grid.dim()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a grid. Descriptors are taken as stored, so a round trip is
/// bit-exact.
pub fn decode_grid(bytes: &[u8], cell_size_px: f64) -> std::result::Result<FeatureGrid, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic, expected GMGRID01".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
    let (height, width, dim) = (word(0), word(1), word(2));
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(dim))
        .and_then(|n| n.checked_mul(4))
        .ok_or("header dimensions overflow")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(format!(
            "payload is {} bytes, header {height}x{width}x{dim} implies {expected}",
            body.len()
        ));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureGrid::from_unit_descriptors(width, height, dim, cell_size_px, data).map_err(|e| e.to_string())
}

pub fn write_grid(path: &Path, grid: &FeatureGrid) -> Result<()> {
    write_file(path, &encode_grid(grid))
}

pub fn read_grid(path: &Path, cell_size_px: f64) -> Result<FeatureGrid> {
    let bytes = read_file(path)?;
    decode_grid(&bytes, cell_size_px).map_err(|e| CliError::format(path, e))
}
