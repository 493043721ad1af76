use super::{build_grid, GridKind, GridSpec, SmockingPattern, StitchingLine, UnitCell};
use crate::error::{Error, Result};

/// Repeats the stitching lines of a unit pattern `reps_x` by `reps_y` times.
///
/// Tiles advance by the unit cell's period; each successive row of tiles is
/// offset by `shift` cells along x. Vertices on shared tile borders are the
/// same grid vertex, so a line that lands on a vertex already claimed by
/// another line is reported as a conflict.
pub fn tile_unit(unit: &SmockingPattern, reps_x: usize, reps_y: usize, shift: i64) -> Result<SmockingPattern> {
    if unit.grid.kind != GridKind::Square {
        return Err(Error::InvalidSpec("tiling needs a square-grid unit pattern".into()));
    }
    let cell = unit
        .unit_cell
        .ok_or_else(|| Error::InvalidSpec("unit pattern declares no unit cell".into()))?;
    if reps_x == 0 || reps_y == 0 {
        return Err(Error::InvalidSpec("tiling repetitions must be at least 1".into()));
    }
    let [px, py] = cell.period();
    if px == 0 || py == 0 {
        return Err(Error::InvalidSpec("unit cell has an empty period".into()));
    }
    let row_shift = shift.unsigned_abs() as usize * (reps_y - 1);
    let x0 = if shift < 0 { row_shift } else { 0 };

    let spec = GridSpec {
        cols: unit.grid.cols + px * (reps_x - 1) + row_shift,
        rows: unit.grid.rows + py * (reps_y - 1),
        ..unit.grid.clone()
    };
    let mut out = build_grid(&spec)?;

    let mut owner: Vec<Option<usize>> = vec![None; out.vertices.len()];
    for iy in 0..reps_y {
        for ix in 0..reps_x {
            let dx = (x0 + ix * px) as i64 + iy as i64 * shift;
            let dy = iy * py;
            for line in &unit.lines {
                let k = out.lines.len();
                let mut ids = Vec::with_capacity(line.vertex_ids.len());
                for &v in &line.vertex_ids {
                    let (i, j) = unit
                        .grid_coords(v)
                        .ok_or_else(|| Error::InvalidPattern(format!("unit line references missing vertex {v}")))?;
                    // dx is never negative thanks to x0.
                    let id = out
                        .grid_vertex((i as i64 + dx) as usize, j + dy)
                        .expect("tiled vertex inside the enlarged grid");
                    if let Some(first) = owner[id] {
                        return Err(Error::LineConflict {
                            first,
                            second: k,
                            vertex: id,
                        });
                    }
                    owner[id] = Some(k);
                    ids.push(id);
                }
                out.lines.push(StitchingLine::new(ids));
            }
        }
    }
    out.unit_cell = Some(UnitCell {
        min: [cell.min[0] + x0, cell.min[1]],
        max: [cell.max[0] + x0, cell.max[1]],
    });
    Ok(out)
}
