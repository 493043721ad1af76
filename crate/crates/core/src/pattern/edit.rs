use serde::{Deserialize, Serialize};

use super::{build_grid, validate_lines, GridKind, GridSpec, SmockingPattern, StitchingLine, UnitCell};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Plain cells added on each side of a square grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margin {
    pub left: usize,
    pub right: usize,
    pub bottom: usize,
    pub top: usize,
}

impl Margin {
    pub fn uniform(cells: usize) -> Self {
        Margin {
            left: cells,
            right: cells,
            bottom: cells,
            top: cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditOp {
    AddLine(Vec<usize>),
    DeleteLine(usize),
    AddMargin(Margin),
    Combine {
        other: Box<SmockingPattern>,
        axis: Axis,
        gap: usize,
    },
}

/// Applies one edit and returns the edited copy; the input is left untouched.
pub fn edit_pattern(p: &SmockingPattern, op: &EditOp) -> Result<SmockingPattern> {
    match op {
        EditOp::AddLine(ids) => {
            let mut out = p.clone();
            out.lines.push(StitchingLine::new(ids.clone()));
            validate_lines(&out.lines, out.vertices.len())?;
            Ok(out)
        }
        EditOp::DeleteLine(k) => {
            if *k >= p.lines.len() {
                return Err(Error::LineNotFound(*k));
            }
            let mut out = p.clone();
            out.lines.remove(*k);
            Ok(out)
        }
        EditOp::AddMargin(m) => add_margin(p, *m),
        EditOp::Combine { other, axis, gap } => combine(p, other, *axis, *gap),
    }
}

fn require_plain_square(p: &SmockingPattern, what: &str) -> Result<()> {
    if p.grid.kind != GridKind::Square {
        return Err(Error::InvalidSpec(format!("{what} needs a square grid")));
    }
    Ok(())
}

fn add_margin(p: &SmockingPattern, m: Margin) -> Result<SmockingPattern> {
    require_plain_square(p, "adding margins")?;
    let spec = GridSpec {
        cols: p.grid.cols + m.left + m.right,
        rows: p.grid.rows + m.bottom + m.top,
        ..p.grid.clone()
    };
    let mut out = build_grid(&spec)?;
    out.lines = remap_lines(p, &out, m.left, m.bottom);
    out.unit_cell = p.unit_cell.map(|c| UnitCell {
        min: [c.min[0] + m.left, c.min[1] + m.bottom],
        max: [c.max[0] + m.left, c.max[1] + m.bottom],
    });
    Ok(out)
}

fn combine(a: &SmockingPattern, b: &SmockingPattern, axis: Axis, gap: usize) -> Result<SmockingPattern> {
    require_plain_square(a, "combining")?;
    require_plain_square(b, "combining")?;
    if a.grid.deformation.is_some() || b.grid.deformation.is_some() {
        return Err(Error::InvalidSpec("cannot combine deformed grids".into()));
    }
    if (a.grid.spacing - b.grid.spacing).abs() > 1e-12 * a.grid.spacing {
        return Err(Error::InvalidSpec("combined patterns need equal grid spacing".into()));
    }
    let (cols, rows, off) = match axis {
        Axis::X => (
            a.grid.cols + gap + b.grid.cols,
            a.grid.rows.max(b.grid.rows),
            (a.grid.cols + gap, 0),
        ),
        Axis::Y => (
            a.grid.cols.max(b.grid.cols),
            a.grid.rows + gap + b.grid.rows,
            (0, a.grid.rows + gap),
        ),
    };
    let mut out = build_grid(&GridSpec::square(cols, rows, a.grid.spacing))?;
    let mut lines = remap_lines(a, &out, 0, 0);
    lines.extend(remap_lines(b, &out, off.0, off.1));
    validate_lines(&lines, out.vertices.len())?;
    out.lines = lines;
    Ok(out)
}

fn remap_lines(src: &SmockingPattern, dst: &SmockingPattern, dx: usize, dy: usize) -> Vec<StitchingLine> {
    src.lines
        .iter()
        .map(|line| {
            line.vertex_ids
                .iter()
                .map(|&v| {
                    let (i, j) = src.grid_coords(v).expect("square-grid vertex");
                    dst.grid_vertex(i + dx, j + dy).expect("vertex inside target grid")
                })
                .collect::<Vec<_>>()
                .into()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn delete_only_line_leaves_empty_set() {
        let p = fixtures::p1();
        let mut q = p.clone();
        while !q.lines.is_empty() {
            q = edit_pattern(&q, &EditOp::DeleteLine(0)).unwrap();
        }
        assert!(q.lines.is_empty());
        q.validate().unwrap();
        // Input untouched.
        assert_eq!(p.lines.len(), 3);
    }

    #[test]
    fn delete_missing_line_is_not_found() {
        let err = edit_pattern(&fixtures::p1(), &EditOp::DeleteLine(7)).unwrap_err();
        assert!(matches!(err, Error::LineNotFound(7)));
    }

    #[test]
    fn add_line_sharing_vertex_conflicts() {
        let p = fixtures::p1();
        let shared = p.lines[0].vertex_ids[0];
        let err = edit_pattern(&p, &EditOp::AddLine(vec![shared, 14])).unwrap_err();
        assert!(matches!(err, Error::LineConflict { first: 0, second: 3, .. }), "{err}");
    }

    #[test]
    fn add_line_appends() {
        let p = build_grid(&GridSpec::square(2, 2, 1.0)).unwrap();
        let q = edit_pattern(&p, &EditOp::AddLine(vec![0, 4])).unwrap();
        assert_eq!(q.lines, vec![StitchingLine::new(vec![0, 4])]);
    }

    #[test]
    fn uniform_margin_grows_grid_and_keeps_lines() {
        let p = fixtures::p1();
        let q = edit_pattern(&p, &EditOp::AddMargin(Margin::uniform(1))).unwrap();
        assert_eq!(q.grid.cols, p.grid.cols + 2);
        assert_eq!(q.grid.rows, p.grid.rows + 2);
        assert_eq!(q.lines.len(), p.lines.len());
        for (a, b) in p.lines.iter().zip(&q.lines) {
            for (&u, &v) in a.vertex_ids.iter().zip(&b.vertex_ids) {
                let (i, j) = p.grid_coords(u).unwrap();
                assert_eq!(q.grid_coords(v).unwrap(), (i + 1, j + 1));
            }
        }
    }

    #[test]
    fn combine_counts_vertices_from_constituents() {
        let arrow = fixtures::arrow_unit();
        let braid = fixtures::braid_unit();
        assert_eq!(arrow.grid.rows, braid.grid.rows);
        let gap = 2;
        let q = edit_pattern(
            &arrow,
            &EditOp::Combine {
                other: Box::new(braid.clone()),
                axis: Axis::X,
                gap,
            },
        )
        .unwrap();
        // The gap strip adds gap - 1 interior columns of rows + 1 vertices.
        let strip = (gap - 1) * (arrow.grid.rows + 1);
        assert_eq!(q.vertices.len(), arrow.vertices.len() + braid.vertices.len() + strip);
        assert_eq!(q.lines.len(), arrow.lines.len() + braid.lines.len());
        q.validate().unwrap();
    }

    #[test]
    fn combine_with_zero_gap_can_conflict() {
        let mut left = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        left.lines.push(vec![1, 3].into()); // right column
        let mut right = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        right.lines.push(vec![0, 2].into()); // left column
        let err = edit_pattern(
            &left,
            &EditOp::Combine {
                other: Box::new(right),
                axis: Axis::X,
                gap: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::LineConflict { .. }));
    }
}
