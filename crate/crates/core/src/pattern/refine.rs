use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GridKind, Point2, SmockingPattern};
use crate::error::{Error, Result};
use crate::triangulate;

pub const DEFAULT_SUBDIVISION: usize = 2;

/// Triangulated high-resolution fabric containing the coarse vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinePattern {
    pub vertices: Vec<Point2>,
    pub faces: Vec<[usize; 3]>,
    /// Fine index of each coarse vertex.
    pub coarse_to_fine: Vec<usize>,
    pub subdivision: usize,
    /// Interpolation weights of each fine vertex over coarse vertices.
    pub stencils: Vec<Vec<(usize, f64)>>,
}

impl FinePattern {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .faces
            .iter()
            .flat_map(|f| [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]])
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Edges used by exactly one face.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for f in &self.faces {
            for [a, b] in [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]] {
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect()
    }

    /// Fine vertex groups of each stitching line of `p`.
    pub fn stitched_groups(&self, p: &SmockingPattern) -> Vec<Vec<usize>> {
        p.lines
            .iter()
            .map(|l| l.vertex_ids.iter().map(|&v| self.coarse_to_fine[v]).collect())
            .collect()
    }
}

/// Splits the fabric into a finer triangle mesh.
///
/// Square grids split each cell into `subdivision^2` subcells, each cut along
/// its (min, min)-(max, max) diagonal. Other grids are Delaunay-triangulated
/// and every triangle is split into `subdivision^2` triangles.
pub fn refine(p: &SmockingPattern, subdivision: usize) -> Result<FinePattern> {
    if subdivision == 0 {
        return Err(Error::InvalidSpec("subdivision must be at least 1".into()));
    }
    match p.grid.kind {
        GridKind::Square => Ok(refine_square(p, subdivision)),
        _ => refine_triangulated(p, subdivision),
    }
}

fn refine_square(p: &SmockingPattern, s: usize) -> FinePattern {
    let (cols, rows) = (p.grid.cols, p.grid.rows);
    let (fc, fr) = (cols * s, rows * s);
    let id = |a: usize, b: usize| b * (fc + 1) + a;
    let mut vertices = Vec::with_capacity((fc + 1) * (fr + 1));
    let mut stencils = Vec::with_capacity(vertices.capacity());
    let coarse = |i: usize, j: usize| j * (cols + 1) + i;
    for b in 0..=fr {
        for a in 0..=fc {
            let (u, v) = (a as f64 / s as f64, b as f64 / s as f64);
            vertices.push(p.grid.lattice_position(u, v));
            let ci = (a / s).min(cols - 1);
            let cj = (b / s).min(rows - 1);
            let fu = (a - ci * s) as f64 / s as f64;
            let fv = (b - cj * s) as f64 / s as f64;
            let st: Vec<(usize, f64)> = [
                (coarse(ci, cj), (1.0 - fu) * (1.0 - fv)),
                (coarse(ci + 1, cj), fu * (1.0 - fv)),
                (coarse(ci, cj + 1), (1.0 - fu) * fv),
                (coarse(ci + 1, cj + 1), fu * fv),
            ]
            .into_iter()
            .filter(|&(_, w)| w != 0.0)
            .collect();
            stencils.push(st);
        }
    }
    let mut faces = Vec::with_capacity(2 * fc * fr);
    for b in 0..fr {
        for a in 0..fc {
            let (v00, v10, v01, v11) = (id(a, b), id(a + 1, b), id(a, b + 1), id(a + 1, b + 1));
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    let coarse_to_fine = (0..p.vertices.len())
        .map(|v| {
            let (i, j) = (v % (cols + 1), v / (cols + 1));
            id(i * s, j * s)
        })
        .collect();
    FinePattern {
        vertices,
        faces,
        coarse_to_fine,
        subdivision: s,
        stencils,
    }
}

fn refine_triangulated(p: &SmockingPattern, s: usize) -> Result<FinePattern> {
    let coarse_faces = triangulate::delaunay_triangles(&p.vertices)?;
    let n = p.vertices.len();
    // Coarse vertices keep their indices.
    let mut vertices: Vec<Point2> = p.vertices.clone();
    let mut stencils: Vec<Vec<(usize, f64)>> = (0..n).map(|v| vec![(v, 1.0)]).collect();
    let mut index: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
    for v in 0..n {
        index.insert(vec![(v, s)], v);
    }
    let mut faces = Vec::with_capacity(coarse_faces.len() * s * s);
    for tri in &coarse_faces {
        let mut local = vec![vec![0usize; s + 1]; s + 1];
        for i in 0..=s {
            for j in 0..=s - i {
                let w = [s - i - j, i, j];
                let mut key: Vec<(usize, usize)> = (0..3).filter(|&k| w[k] > 0).map(|k| (tri[k], w[k])).collect();
                key.sort_unstable();
                let id = *index.entry(key).or_insert_with(|| {
                    let mut pos = [0.0; 2];
                    let mut st = Vec::new();
                    for k in 0..3 {
                        if w[k] > 0 {
                            let t = w[k] as f64 / s as f64;
                            pos[0] += t * p.vertices[tri[k]][0];
                            pos[1] += t * p.vertices[tri[k]][1];
                            st.push((tri[k], t));
                        }
                    }
                    vertices.push(pos);
                    stencils.push(st);
                    vertices.len() - 1
                });
                local[i][j] = id;
            }
        }
        for i in 0..s {
            for j in 0..s - i {
                faces.push([local[i][j], local[i + 1][j], local[i][j + 1]]);
                if i + j + 1 < s {
                    faces.push([local[i + 1][j], local[i + 1][j + 1], local[i][j + 1]]);
                }
            }
        }
    }
    Ok(FinePattern {
        vertices,
        faces,
        coarse_to_fine: (0..n).collect(),
        subdivision: s,
        stencils,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{build_grid, dist2, GridSpec};

    #[test]
    fn unit_subdivision_of_single_cell() {
        let p = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        let f = refine(&p, 1).unwrap();
        assert_eq!(f.vertices.len(), 4);
        assert_eq!(f.faces.len(), 2);
    }

    #[test]
    fn double_subdivision_of_single_cell() {
        let p = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        let f = refine(&p, 2).unwrap();
        assert_eq!(f.vertices.len(), 9);
        assert_eq!(f.faces.len(), 8);
    }

    #[test]
    fn coarse_vertices_keep_positions() {
        let p = build_grid(&GridSpec::square(3, 2, 0.7)).unwrap();
        for s in 1..5 {
            let f = refine(&p, s).unwrap();
            let mut seen = f.coarse_to_fine.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), p.vertices.len());
            for (v, &fv) in f.coarse_to_fine.iter().enumerate() {
                assert_eq!(f.vertices[fv], p.vertices[v]);
            }
        }
    }

    #[test]
    fn boundary_polygon_is_preserved() {
        let p = build_grid(&GridSpec::square(3, 2, 1.0)).unwrap();
        let f = refine(&p, 3).unwrap();
        let on_rect = |q: Point2| q[0] == 0.0 || q[0] == 3.0 || q[1] == 0.0 || q[1] == 2.0;
        let boundary = f.boundary_edges();
        assert_eq!(boundary.len(), 2 * (9 + 6));
        for [a, b] in boundary {
            assert!(on_rect(f.vertices[a]) && on_rect(f.vertices[b]));
        }
    }

    #[test]
    fn stencils_reproduce_positions_on_flat_grids() {
        let p = build_grid(&GridSpec::square(2, 3, 1.5)).unwrap();
        let f = refine(&p, 3).unwrap();
        for (v, st) in f.stencils.iter().enumerate() {
            let mut q = [0.0; 2];
            for &(c, w) in st {
                q[0] += w * p.vertices[c][0];
                q[1] += w * p.vertices[c][1];
            }
            assert!(dist2(q, f.vertices[v]) < 1e-12);
            assert!((st.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hexagonal_refinement_is_manifold() {
        let p = build_grid(&GridSpec::hexagonal(2, 2, 1.0)).unwrap();
        let f = refine(&p, 2).unwrap();
        let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for t in &f.faces {
            for [a, b] in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        assert!(count.values().all(|&c| c <= 2));
        assert_eq!(&f.coarse_to_fine[..], &(0..p.vertices.len()).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn zero_subdivision_rejected() {
        let p = build_grid(&GridSpec::square(1, 1, 1.0)).unwrap();
        assert!(refine(&p, 0).is_err());
    }
}
