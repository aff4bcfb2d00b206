//! Binary field files: a 32-byte header (`FPK1`, n, nx, ny, h) followed by
//! little-endian f64 values, plus a JSON sidecar with grid metadata.

use super::{Field, Grid};
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"FPK1";

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub name: String,
    pub grid: Grid,
    pub exterior_zero: bool,
    /// Free-form metadata (domain shape, ε, peak config, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_field(path: &Path, field: &Field, name: &str, extra: serde_json::Value) -> Result<()> {
    let g = field.grid;
    let mut buf = Vec::with_capacity(32 + 8 * field.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.n as u32).to_le_bytes());
    buf.extend_from_slice(&(g.dims[0] as u64).to_le_bytes());
    buf.extend_from_slice(&(g.dims[1] as u64).to_le_bytes());
    buf.extend_from_slice(&g.h.to_le_bytes());
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    let meta = FieldMeta {
        name: name.to_string(),
        grid: g,
        exterior_zero: field.exterior_zero,
        extra,
    };
    fs::write(sidecar(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(Field, FieldMeta)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 || &bytes[..4] != MAGIC {
        return Err(invalid(format!("{}: not a field file", path.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n = u32_at(4) as usize;
    let nx = u64_at(8) as usize;
    let ny = u64_at(16) as usize;
    let h = f64::from_bits(u64_at(24));
    if bytes.len() != 32 + 8 * nx * ny {
        return Err(invalid(format!("{}: truncated field data", path.display())));
    }
    let values = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    if meta.grid.n != n || meta.grid.dims != [nx, ny] || meta.grid.h != h {
        return Err(invalid(format!("{}: header and sidecar disagree", path.display())));
    }
    let field = Field {
        grid: meta.grid,
        values,
        exterior_zero: meta.exterior_zero,
    };
    Ok((field, meta))
}
