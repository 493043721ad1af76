//! Grid-free pattern construction: underlay and pleat graphs built straight
//! from stitching-line geometry with Delaunay triangulations.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{bounding_box, dist2, Point2, SmockingPattern, StitchingLine};
use crate::triangulate::{all_collinear, constrained_delaunay_edges, delaunay_edges, segments_cross};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PleatSampling {
    /// One pleat node at the centroid of every stitching line.
    #[default]
    Midpoints,
    /// Dart throwing inside the bounding box with minimum spacing `radius`.
    Poisson {
        radius: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit { points: Vec<Point2> },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFreeInput {
    pub lines: Vec<Vec<Point2>>,
    #[serde(default)]
    pub pleat_sampling: PleatSampling,
}

/// Every constraint segment `(line, a, b)` in point indices.
fn segments(lines: &[Vec<Point2>]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut base = 0;
    for (k, l) in lines.iter().enumerate() {
        for i in 0..l.len().saturating_sub(1) {
            out.push((k, base + i, base + i + 1));
        }
        base += l.len();
    }
    out
}

fn validate(input: &GridFreeInput) -> Result<Vec<Point2>> {
    if input.lines.len() < 2 {
        return Err(Error::InvalidPattern("grid-free input needs at least two stitching lines".into()));
    }
    for (k, l) in input.lines.iter().enumerate() {
        if l.len() < 2 {
            return Err(Error::InvalidPattern(format!("stitching line {k} needs at least two points")));
        }
        if l.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPattern(format!("stitching line {k} has a non-finite point")));
        }
    }
    let points: Vec<Point2> = input.lines.iter().flatten().copied().collect();
    for i in 0..points.len() {
        if points[..i].contains(&points[i]) {
            return Err(Error::CoincidentPoint { index: i, x: points[i][0], y: points[i][1] });
        }
    }
    if all_collinear(&points) {
        return Err(Error::DegenerateTriangulation("all stitching points are collinear".into()));
    }
    let segs = segments(&input.lines);
    for (x, &(l1, a, b)) in segs.iter().enumerate() {
        for &(l2, c, d) in &segs[x + 1..] {
            if segments_cross(points[a], points[b], points[c], points[d]) {
                return Err(Error::CrossingSegments { first: l1, second: l2 });
            }
        }
    }
    Ok(points)
}

/// Pleat-node positions requested by `sampling`.
pub fn sample_pleats(lines: &[Vec<Point2>], sampling: &PleatSampling) -> Result<Vec<Point2>> {
    Ok(match sampling {
        PleatSampling::None => Vec::new(),
        PleatSampling::Explicit { points } => points.clone(),
        PleatSampling::Midpoints => lines
            .iter()
            .map(|l| {
                let n = l.len() as f64;
                let s = l.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
                [s[0] / n, s[1] / n]
            })
            .collect(),
        PleatSampling::Poisson { radius, seed } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidSpec("Poisson radius must be positive".into()));
            }
            let existing: Vec<Point2> = lines.iter().flatten().copied().collect();
            let (lo, hi) = bounding_box(&existing);
            let area = (hi[0] - lo[0]).max(*radius) * (hi[1] - lo[1]).max(*radius);
            let attempts = (30.0 * area / (radius * radius)).ceil() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out: Vec<Point2> = Vec::new();
            for _ in 0..attempts {
                let q = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
                if existing.iter().chain(&out).all(|&e| dist2(e, q) >= *radius) {
                    out.push(q);
                }
            }
            out
        }
    })
}

/// Edges from `v` (index `base.len()`) in the Delaunay triangulation of
/// `base` plus `v`, as pairs `(v, neighbour)`.
fn local_edges(base: &[Point2], v: Point2) -> Result<Vec<usize>> {
    let mut pts = base.to_vec();
    pts.push(v);
    let n = base.len();
    Ok(delaunay_edges(&pts)?
        .into_iter()
        .filter_map(|[a, b]| if b == n { Some(a) } else { None })
        .collect())
}

fn check_pleat_positions(existing: &[Point2], pleats: &[Point2]) -> Result<()> {
    let (lo, hi) = bounding_box(existing);
    for (i, &q) in pleats.iter().enumerate() {
        if !(q[0].is_finite() && q[1].is_finite()) || q[0] < lo[0] || q[0] > hi[0] || q[1] < lo[1] || q[1] > hi[1] {
            return Err(Error::OutsidePattern { index: i, x: q[0], y: q[1] });
        }
        if existing.iter().chain(&pleats[..i]).any(|&e| e == q) {
            return Err(Error::CoincidentPoint { index: i, x: q[0], y: q[1] });
        }
    }
    Ok(())
}

/// Builds an explicit pattern straight from stitching lines.
pub fn build_gridfree(input: &GridFreeInput) -> Result<SmockingPattern> {
    let points = validate(input)?;
    let n = points.len();
    let constraints: Vec<[usize; 2]> = segments(&input.lines).into_iter().map(|(_, a, b)| [a, b]).collect();
    let mut edges: BTreeSet<[usize; 2]> = constrained_delaunay_edges(&points, &constraints)?.into_iter().collect();

    let pleats = sample_pleats(&input.lines, &input.pleat_sampling)?;
    check_pleat_positions(&points, &pleats)?;
    for (k, &q) in pleats.iter().enumerate() {
        for a in local_edges(&points, q)? {
            edges.insert([a, n + k]);
        }
    }
    if pleats.len() >= 2 {
        for [a, b] in delaunay_edges(&pleats)? {
            edges.insert([n + a, n + b]);
        }
    }

    let mut vertices = points;
    vertices.extend(pleats);
    let mut base = 0;
    let lines = input
        .lines
        .iter()
        .map(|l| {
            let ids = (base..base + l.len()).collect();
            base += l.len();
            StitchingLine::new(ids)
        })
        .collect();
    SmockingPattern::explicit(vertices, edges.into_iter().collect(), lines)
}

/// Adds pleat vertices, each joined to its Delaunay neighbours among the
/// existing pattern vertices.
pub fn insert_pleat_nodes(p: &SmockingPattern, positions: &[Point2]) -> Result<SmockingPattern> {
    if positions.is_empty() {
        return Ok(p.clone());
    }
    check_pleat_positions(&p.vertices, positions)?;
    let n = p.vertices.len();
    let mut edges = p.edges.clone();
    for (k, &q) in positions.iter().enumerate() {
        for a in local_edges(&p.vertices, q)? {
            edges.push([a, n + k]);
        }
    }
    let mut vertices = p.vertices.clone();
    vertices.extend_from_slice(positions);
    let mut out = SmockingPattern::explicit(vertices, edges, p.lines.clone())?;
    out.unit_cell = None;
    Ok(out)
}
