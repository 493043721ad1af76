use super::{GridKind, GridSpec, SmockingPattern};
use crate::error::{Error, Result};

/// Builds the bare fabric graph for a grid spec, with no stitching lines.
pub fn build_grid(spec: &GridSpec) -> Result<SmockingPattern> {
    spec.validate()?;
    let (vertices, edges) = match spec.kind {
        GridKind::Square => square_grid(spec),
        GridKind::Hexagonal => hex_grid(spec),
        GridKind::Explicit => {
            return Err(Error::InvalidSpec(
                "explicit grids carry their own vertices; use SmockingPattern::explicit".into(),
            ))
        }
    };
    Ok(SmockingPattern {
        grid: spec.clone(),
        vertices,
        edges: super::normalize_edges(edges),
        lines: Vec::new(),
        unit_cell: None,
    })
}

fn square_grid(spec: &GridSpec) -> (Vec<[f64; 2]>, Vec<[usize; 2]>) {
    let (c, r) = (spec.cols, spec.rows);
    let id = |i: usize, j: usize| j * (c + 1) + i;
    let mut vertices = Vec::with_capacity((c + 1) * (r + 1));
    for j in 0..=r {
        for i in 0..=c {
            vertices.push(spec.lattice_position(i as f64, j as f64));
        }
    }
    let mut edges = Vec::with_capacity((r + 1) * c + (c + 1) * r + 2 * c * r);
    for j in 0..=r {
        for i in 0..=c {
            if i < c {
                edges.push([id(i, j), id(i + 1, j)]);
            }
            if j < r {
                edges.push([id(i, j), id(i, j + 1)]);
            }
            if i < c && j < r {
                edges.push([id(i, j), id(i + 1, j + 1)]);
                edges.push([id(i + 1, j), id(i, j + 1)]);
            }
        }
    }
    (vertices, edges)
}

/// Honeycomb as a brick-wall lattice: every horizontal link, plus vertical
/// links where `col + row` is odd. `cols` hexagons per row.
fn hex_grid(spec: &GridSpec) -> (Vec<[f64; 2]>, Vec<[usize; 2]>) {
    let w = 2 * spec.cols + 1;
    let h = spec.rows;
    let s = spec.spacing;
    let id = |i: usize, j: usize| j * (w + 1) + i;
    let mut vertices = Vec::with_capacity((w + 1) * (h + 1));
    for j in 0..=h {
        for i in 0..=w {
            let lift = if (i + j) % 2 == 1 { 0.5 * s } else { 0.0 };
            vertices.push([i as f64 * 0.75f64.sqrt() * s, 1.5 * j as f64 * s + lift]);
        }
    }
    let mut edges = Vec::new();
    for j in 0..=h {
        for i in 0..=w {
            if i < w {
                edges.push([id(i, j), id(i + 1, j)]);
            }
            if j < h && (i + j) % 2 == 1 {
                edges.push([id(i, j), id(i, j + 1)]);
            }
        }
    }
    (vertices, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{Deformation, RadialDeform};
    use std::collections::BTreeSet;
    use std::f64::consts::PI;

    #[test]
    fn single_cell_has_sides_and_both_diagonals() {
        let p = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        assert_eq!(p.vertices.len(), 4);
        assert_eq!(p.edges.len(), 6);
    }

    #[test]
    fn two_cells_share_a_side() {
        // Brute force: collect the six edges of each cell, the shared side once.
        let cell = |i: usize| {
            let id = |a: usize, b: usize| b * 3 + a;
            let v = [id(i, 0), id(i + 1, 0), id(i + 1, 1), id(i, 1)];
            let mut e = vec![];
            for a in 0..4 {
                for b in a + 1..4 {
                    e.push([v[a].min(v[b]), v[a].max(v[b])]);
                }
            }
            e
        };
        let expected: BTreeSet<_> = cell(0).into_iter().chain(cell(1)).collect();
        let p = build_grid(&GridSpec::square(2, 1, 1.0)).unwrap();
        assert_eq!(p.vertices.len(), 6);
        assert_eq!(expected.len(), 11);
        assert_eq!(p.edges.iter().copied().collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn counts_match_closed_form() {
        for (c, r) in [(1, 1), (3, 2), (5, 4), (7, 1)] {
            let p = build_grid(&GridSpec::square(c, r, 0.5)).unwrap();
            assert_eq!(p.vertices.len(), (c + 1) * (r + 1));
            assert_eq!(p.edges.len(), (r + 1) * c + (c + 1) * r + 2 * c * r);
        }
    }

    #[test]
    fn radial_moves_positions_only() {
        let flat = build_grid(&GridSpec::square(3, 2, 1.0)).unwrap();
        let spec = GridSpec::square(3, 2, 1.0).with_deformation(Deformation::Radial(RadialDeform {
            inner_radius: 2.0,
            angular_span: PI,
        }));
        let bent = build_grid(&spec).unwrap();
        assert_eq!(flat.edges, bent.edges);
        for i in 0..bent.vertices.len() {
            for j in i + 1..bent.vertices.len() {
                let d = crate::pattern::dist2(bent.vertices[i], bent.vertices[j]);
                assert!(d > 1e-9, "vertices {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn full_turn_radial_stays_injective() {
        let spec = GridSpec::square(6, 1, 1.0).with_deformation(Deformation::Radial(RadialDeform {
            inner_radius: 1.0,
            angular_span: 2.0 * PI,
        }));
        let p = build_grid(&spec).unwrap();
        let first = p.vertices[0];
        let last = p.vertices[6];
        assert!(crate::pattern::dist2(first, last) > 0.1);
    }

    #[test]
    fn hex_edges_have_unit_length() {
        let p = build_grid(&GridSpec::hexagonal(3, 2, 1.0)).unwrap();
        for &[a, b] in &p.edges {
            let d = crate::pattern::dist2(p.vertices[a], p.vertices[b]);
            assert!((d - 1.0).abs() < 1e-12);
        }
        // No diagonals: every vertex has degree at most 3.
        let deg = p.neighbors();
        assert!(deg.iter().all(|n| n.len() <= 3));
        p.validate().unwrap();
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(matches!(
            build_grid(&GridSpec::square(0, 2, 1.0)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_grid(&GridSpec::square(2, 2, -1.0)),
            Err(Error::InvalidSpec(_))
        ));
    }
}
