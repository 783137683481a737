//! Field snapshot files.
//!
//! Binary layout, all little-endian:
//! `u64 dim`, `dim x u64 n_cells`, `dim x f64 side length`, then
//! `prod(n_cells) x f64` values in row-major order.

use std::io::{Read, Write};

use super::{Grid, GridError, ScalarField};

/// Largest grid written by [`write_field_csv`].
pub const CSV_MAX_CELLS: usize = 1 << 16;

pub fn write_field_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<(), GridError> {
    let g = field.grid();
    out.write_all(&(g.dim() as u64).to_le_bytes())?;
    for a in 0..g.dim() {
        out.write_all(&(g.cells(a) as u64).to_le_bytes())?;
    }
    for a in 0..g.dim() {
        out.write_all(&g.side(a).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field_binary<R: Read>(mut input: R) -> Result<ScalarField, GridError> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8], GridError> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(&mut input)?) as usize;
    if dim != 1 && dim != 2 {
        return Err(GridError::Format(format!("unsupported dimension {dim}")));
    }
    let mut cells = Vec::with_capacity(dim);
    for _ in 0..dim {
        let n = u64::from_le_bytes(next(&mut input)?);
        if n > (1 << 24) {
            return Err(GridError::Format(format!("implausible cell count {n}")));
        }
        cells.push(n as usize);
    }
    let mut side = Vec::with_capacity(dim);
    for _ in 0..dim {
        side.push(f64::from_le_bytes(next(&mut input)?));
    }
    let grid = Grid::new(dim, &cells, &side)?;
    let mut payload = vec![0u8; 8 * grid.len()];
    input.read_exact(&mut payload)?;
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(grid, values)
}

/// Writes `x[,y],value` rows with a header; refuses grids above [`CSV_MAX_CELLS`].
pub fn write_field_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<(), GridError> {
    let g = field.grid();
    if g.len() > CSV_MAX_CELLS {
        return Err(GridError::Format(format!(
            "{} cells is too many for CSV output (limit {CSV_MAX_CELLS})",
            g.len()
        )));
    }
    if g.dim() == 1 {
        writeln!(out, "x,value")?;
    } else {
        writeln!(out, "x,y,value")?;
    }
    for (i, v) in field.values().iter().enumerate() {
        let x = g.coords(i);
        if g.dim() == 1 {
            writeln!(out, "{:?},{:?}", x[0], v)?;
        } else {
            writeln!(out, "{:?},{:?},{:?}", x[0], x[1], v)?;
        }
    }
    Ok(())
}
