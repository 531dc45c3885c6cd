use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, GridField};
use crate::error::{EekError, Result};

const MAGIC: &[u8; 4] = b"EEK1";

/// Writes `u` as: magic "EEK1", u32 n, f64 half width, u32 components, then the
/// little-endian f64 payload (component-major, x fastest).
pub fn write_field(path: impl AsRef<Path>, u: &GridField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(u.grid().n() as u32).to_le_bytes())?;
    w.write_all(&u.grid().half_width().to_le_bytes())?;
    w.write_all(&(u.components() as u32).to_le_bytes())?;
    for v in u.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<GridField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(EekError::Format {
            field: "magic",
            reason: format!("expected \"EEK1\", found {:?}", magic),
        });
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b4, "n_per_axis")?;
    let n = u32::from_le_bytes(b4) as usize;
    read_exact(&mut r, &mut b8, "half_width")?;
    let half_width = f64::from_le_bytes(b8);
    read_exact(&mut r, &mut b4, "components")?;
    let components = u32::from_le_bytes(b4) as usize;
    let grid = Grid::new(n, half_width).map_err(|e| EekError::Format {
        field: "n_per_axis",
        reason: e.to_string(),
    })?;
    if components == 0 {
        return Err(EekError::Format {
            field: "components",
            reason: "must be at least 1".into(),
        });
    }
    let count = components * grid.len();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * count {
        return Err(EekError::Format {
            field: "payload",
            reason: format!("expected {} bytes, found {}", 8 * count, bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridField::new(grid, components, data).map_err(|e| EekError::Format {
        field: "payload",
        reason: e.to_string(),
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], field: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| EekError::Format {
        field,
        reason: format!("truncated header: {e}"),
    })
}
