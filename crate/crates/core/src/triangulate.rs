//! Delaunay triangulations backed by `spade`, plus the robust segment tests
//! the grid-free builder needs before handing constraints over.

use spade::handles::FixedVertexHandle;
use spade::{ConstrainedDelaunayTriangulation, DelaunayTriangulation, Point2 as SPoint, Triangulation};

use crate::error::{Error, Result};
use crate::pattern::Point2;

fn sp(p: Point2) -> SPoint<f64> {
    SPoint::new(p[0], p[1])
}

fn insert_all<T>(tri: &mut T, points: &[Point2]) -> Result<Vec<FixedVertexHandle>>
where
    T: Triangulation<Vertex = SPoint<f64>>,
{
    let mut handles = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        let h = tri
            .insert(sp(p))
            .map_err(|e| Error::DegenerateTriangulation(format!("point {i}: {e:?}")))?;
        if h.index() != i {
            return Err(Error::CoincidentPoint { index: i, x: p[0], y: p[1] });
        }
        handles.push(h);
    }
    Ok(handles)
}

fn edges_of<T>(tri: &T) -> Vec<[usize; 2]>
where
    T: Triangulation<Vertex = SPoint<f64>>,
{
    let mut edges: Vec<[usize; 2]> = tri
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices();
            let (a, b) = (a.fix().index(), b.fix().index());
            [a.min(b), a.max(b)]
        })
        .collect();
    edges.sort_unstable();
    edges
}

/// Counter-clockwise triangles of the Delaunay triangulation.
pub fn delaunay_triangles(points: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let mut tri = DelaunayTriangulation::<SPoint<f64>>::new();
    insert_all(&mut tri, points)?;
    let faces: Vec<[usize; 3]> = tri
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect();
    if faces.is_empty() {
        return Err(Error::DegenerateTriangulation(
            "fewer than three non-collinear points".into(),
        ));
    }
    Ok(faces)
}

/// Edges of the Delaunay triangulation. Two points give one edge; collinear
/// inputs give the chain along the line.
pub fn delaunay_edges(points: &[Point2]) -> Result<Vec<[usize; 2]>> {
    let mut tri = DelaunayTriangulation::<SPoint<f64>>::new();
    insert_all(&mut tri, points)?;
    Ok(edges_of(&tri))
}

/// Edges of the Delaunay triangulation conditioned on `constraints`.
/// Constraints must not cross; a constraint passing exactly through another
/// input point is split there.
pub fn constrained_delaunay_edges(points: &[Point2], constraints: &[[usize; 2]]) -> Result<Vec<[usize; 2]>> {
    let mut cdt = ConstrainedDelaunayTriangulation::<SPoint<f64>>::new();
    let handles = insert_all(&mut cdt, points)?;
    for &[a, b] in constraints {
        if !cdt.can_add_constraint(handles[a], handles[b]) {
            return Err(Error::DegenerateTriangulation(format!(
                "constraint ({a}, {b}) crosses an existing constraint"
            )));
        }
        cdt.add_constraint(handles[a], handles[b]);
    }
    Ok(edges_of(&cdt))
}

/// Sign of the orientation of (a, b, c): positive for counter-clockwise.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

/// True when segments ab and cd share a point other than a common endpoint.
pub fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let shared = [a, b].iter().any(|p| p == &c || p == &d);
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    if shared {
        // Touching at a shared endpoint only counts if the segments overlap.
        return o1 == 0.0 && o2 == 0.0 && collinear_overlap(a, b, c, d);
    }
    let on = |p: Point2, q: Point2, r: Point2| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (o1 == 0.0 && on(a, b, c)) || (o2 == 0.0 && on(a, b, d)) || (o3 == 0.0 && on(c, d, a)) || (o4 == 0.0 && on(c, d, b))
}

fn collinear_overlap(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let axis = if (b[0] - a[0]).abs() >= (b[1] - a[1]).abs() { 0 } else { 1 };
    let (lo1, hi1) = (a[axis].min(b[axis]), a[axis].max(b[axis]));
    let (lo2, hi2) = (c[axis].min(d[axis]), c[axis].max(d[axis]));
    lo1.max(lo2) < hi1.min(hi2)
}

pub fn all_collinear(points: &[Point2]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let a = points[0];
    let Some(&b) = points.iter().find(|p| **p != a) else {
        return true;
    };
    points.iter().all(|&c| orient(a, b, c) == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_five_edges() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(delaunay_edges(&pts).unwrap().len(), 5);
        assert_eq!(delaunay_triangles(&pts).unwrap().len(), 2);
    }

    #[test]
    fn constraint_forces_diagonal() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [2.1, 1.0], [0.0, 1.0]];
        let free = delaunay_edges(&pts).unwrap();
        let forced = constrained_delaunay_edges(&pts, &[[0, 2]]).unwrap();
        assert!(forced.contains(&[0, 2]));
        assert_eq!(free.len(), forced.len());
    }

    #[test]
    fn crossing_segments_detected() {
        assert!(segments_cross([0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]));
        assert!(!segments_cross([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
        assert!(!segments_cross([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 1.0]));
        assert!(segments_cross([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]));
    }

    #[test]
    fn collinear_input_has_no_triangles() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(all_collinear(&pts));
        assert!(delaunay_triangles(&pts).is_err());
    }

    #[test]
    fn duplicate_point_rejected() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(delaunay_edges(&pts), Err(Error::CoincidentPoint { index: 2, .. })));
    }
}
