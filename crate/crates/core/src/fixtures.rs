//! Canonical patterns used by tests, the CLI examples and the browser demo.

use crate::pattern::{build_grid, tile_unit, GridSpec, SmockingPattern, StitchingLine, UnitCell};

fn square_with_lines(cols: usize, rows: usize, lines: &[&[(usize, usize)]]) -> SmockingPattern {
    let mut p = build_grid(&GridSpec::square(cols, rows, 1.0)).expect("valid fixture grid");
    p.lines = lines
        .iter()
        .map(|pts| {
            pts.iter()
                .map(|&(x, y)| p.grid_vertex(x, y).expect("fixture vertex inside grid"))
                .collect::<Vec<_>>()
                .into()
        })
        .collect();
    p.validate().expect("valid fixture");
    p
}

/// Arrow unit: two pairs of diagonal lines on a 6 x 2 cell grid.
pub fn arrow_unit() -> SmockingPattern {
    let mut p = square_with_lines(
        6,
        2,
        &[&[(0, 1), (1, 2)], &[(1, 1), (2, 0)], &[(3, 2), (4, 1)], &[(4, 0), (5, 1)]],
    );
    p.unit_cell = Some(UnitCell { min: [0, 0], max: [6, 2] });
    p
}

/// Arrow unit tiled 3 x 2: 24 stitching lines.
pub fn arrow() -> SmockingPattern {
    tile_unit(&arrow_unit(), 3, 2, 0).expect("arrow tiles without conflicts")
}

/// Box unit: four short lines around a central pleat vertex, period 3.
pub fn box_unit() -> SmockingPattern {
    let mut p = square_with_lines(
        3,
        3,
        &[&[(0, 0), (1, 0)], &[(2, 0), (2, 1)], &[(2, 2), (1, 2)], &[(0, 2), (0, 1)]],
    );
    p.unit_cell = Some(UnitCell { min: [0, 0], max: [3, 3] });
    p
}

pub fn box_pattern() -> SmockingPattern {
    tile_unit(&box_unit(), 3, 3, 0).expect("box tiles without conflicts")
}

/// Braid unit: opposing diagonal lines on a 4 x 2 cell grid.
pub fn braid_unit() -> SmockingPattern {
    let mut p = square_with_lines(4, 2, &[&[(0, 0), (1, 1)], &[(2, 1), (3, 0)]]);
    p.unit_cell = Some(UnitCell { min: [0, 0], max: [4, 2] });
    p
}

pub fn braid() -> SmockingPattern {
    tile_unit(&braid_unit(), 3, 3, 0).expect("braid tiles without conflicts")
}

/// Three lines whose underlay bounds form a right triangle: 1, 1, sqrt 2.
pub fn p1() -> SmockingPattern {
    square_with_lines(3, 2, &[&[(0, 0), (1, 1)], &[(1, 2), (2, 1)], &[(2, 0), (3, 1)]])
}

/// `p1` with its middle column widened to two units: bounds 1, 1, sqrt 5.
pub fn p2() -> SmockingPattern {
    let base = p1();
    let xs = [0.0, 1.0, 3.0, 4.0];
    let vertices = base
        .vertices
        .iter()
        .map(|&[x, y]| [xs[x as usize], y])
        .collect();
    SmockingPattern::explicit(vertices, base.edges.clone(), base.lines.clone()).expect("valid fixture")
}

/// A short central line surrounded by ten radial lines that cannot all sit
/// at their bounds in the plane.
pub fn p4() -> SmockingPattern {
    square_with_lines(
        5,
        4,
        &[
            &[(2, 2), (3, 2)],
            &[(1, 1), (0, 0)],
            &[(2, 1), (2, 0)],
            &[(3, 1), (3, 0)],
            &[(4, 1), (5, 0)],
            &[(4, 2), (5, 2)],
            &[(4, 3), (5, 4)],
            &[(3, 3), (3, 4)],
            &[(2, 3), (2, 4)],
            &[(1, 3), (0, 4)],
            &[(1, 2), (0, 2)],
        ],
    )
}

/// Basket weave: 2 x 2 blocks alternating horizontal and vertical line
/// pairs. Every vertex is stitched, so the pattern has no pleat nodes.
pub fn basket() -> SmockingPattern {
    let mut lines: Vec<Vec<(usize, usize)>> = Vec::new();
    for by in 0..2 {
        for bx in 0..2 {
            let (x, y) = (2 * bx, 2 * by);
            if (bx + by) % 2 == 0 {
                lines.push(vec![(x, y), (x + 1, y)]);
                lines.push(vec![(x, y + 1), (x + 1, y + 1)]);
            } else {
                lines.push(vec![(x, y), (x, y + 1)]);
                lines.push(vec![(x + 1, y), (x + 1, y + 1)]);
            }
        }
    }
    let refs: Vec<&[(usize, usize)]> = lines.iter().map(|l| l.as_slice()).collect();
    square_with_lines(3, 3, &refs)
}

/// One diagonal line in a 2 x 2 grid.
pub fn single_line() -> SmockingPattern {
    square_with_lines(2, 2, &[&[(0, 0), (1, 1)]])
}

/// Stitching-line midpoints of `p`, in line order.
pub fn line_midpoints(p: &SmockingPattern) -> Vec<[f64; 2]> {
    p.lines.iter().map(|l| midpoint(p, l)).collect()
}

fn midpoint(p: &SmockingPattern, l: &StitchingLine) -> [f64; 2] {
    let n = l.vertex_ids.len() as f64;
    let mut m = [0.0; 2];
    for &v in &l.vertex_ids {
        m[0] += p.vertices[v][0] / n;
        m[1] += p.vertices[v][1] / n;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_line_counts() {
        assert_eq!(arrow_unit().lines.len(), 4);
        assert_eq!(arrow().lines.len(), 24);
        assert_eq!(box_pattern().lines.len(), 36);
        assert_eq!(braid().lines.len(), 18);
        assert_eq!(p4().lines.len(), 11);
        assert_eq!(basket().lines.len(), 8);
    }

    #[test]
    fn basket_stitches_every_vertex() {
        let p = basket();
        assert!(p.line_of_vertex().iter().all(|o| o.is_some()));
    }

    #[test]
    fn p2_widens_middle_column() {
        let p = p2();
        assert_eq!(p.vertices[2], [3.0, 0.0]);
        assert_eq!(p.edges, p1().edges);
    }
}
