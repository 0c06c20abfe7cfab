use std::io::{Read, Write};

use torus_core::{ScalarField, TorusGrid};

use crate::SolverError;

const MAGIC: &[u8; 4] = b"RPME";
const VERSION: u32 = 1;

/// Binary field dump: 16-byte header (magic "RPME", version, dim,
/// points per dim, all little-endian u32 after the magic), then the node
/// values as little-endian f64 with the x index fastest. Round-trips bits.
pub fn write_field_binary<W: Write>(mut w: W, field: &ScalarField) -> Result<(), SolverError> {
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.points_per_dim() as u32).to_le_bytes())?;
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<ScalarField, SolverError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(SolverError::BadDump(format!(
            "bad magic {:?}, expected {:?}",
            &header[0..4],
            MAGIC
        )));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(SolverError::BadDump(format!(
            "unsupported dump version {version}"
        )));
    }
    let dim = word(8) as usize;
    let points = word(12) as usize;
    let grid = TorusGrid::new(dim, points)
        .map_err(|e| SolverError::BadDump(format!("bad grid in dump header: {e}")))?;
    let mut values = vec![0.0_f64; grid.node_count()];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(ScalarField::new(grid, values)?)
}

/// CSV snapshot: index columns, node coordinates, and the value, with
/// 17 significant digits so text round-trips reproduce every bit.
pub fn write_snapshot_csv<W: Write>(
    w: W,
    field: &ScalarField,
    t: f64,
) -> Result<(), SolverError> {
    let grid = field.grid();
    let mut out = csv::Writer::from_writer(w);
    if grid.dim() == 1 {
        out.write_record(["t", "i", "x", "u"])?;
        for (i, &v) in field.values().iter().enumerate() {
            out.write_record([
                format!("{t:.17e}"),
                i.to_string(),
                format!("{:.17e}", grid.coord(i)),
                format!("{v:.17e}"),
            ])?;
        }
    } else {
        out.write_record(["t", "ix", "iy", "x", "y", "u"])?;
        let n = grid.points_per_dim();
        for iy in 0..n {
            for ix in 0..n {
                let idx = grid.index2(ix, iy);
                out.write_record([
                    format!("{t:.17e}"),
                    ix.to_string(),
                    iy.to_string(),
                    format!("{:.17e}", grid.coord(ix)),
                    format!("{:.17e}", grid.coord(iy)),
                    format!("{:.17e}", field.values()[idx]),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
