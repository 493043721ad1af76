//! Smocking patterns: a fabric graph annotated with stitching lines.
//!
//! Square grids number their vertices row-major, `index = row * (cols + 1) + col`,
//! and carry both diagonals of every cell. Hexagonal grids use a brick-wall
//! lattice embedded as a honeycomb. Explicit patterns carry their own geometry.

mod edit;
mod grid;
mod refine;
mod tile;

pub use edit::{edit_pattern, Axis, EditOp, Margin};
pub use grid::build_grid;
pub use refine::{refine, FinePattern, DEFAULT_SUBDIVISION};
pub use tile::tile_unit;

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Square,
    Hexagonal,
    Explicit,
}

/// Bends the columns of a square grid around a center: column index maps to
/// angle, row index to radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialDeform {
    pub inner_radius: f64,
    pub angular_span: f64,
}

/// Smooth sinusoidal warp of a square grid:
/// `x' = x + ax sin(2 pi y / py)`, `y' = y + ay sin(2 pi x / px)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpField {
    pub amplitude: [f64; 2],
    pub period: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deformation {
    Radial(RadialDeform),
    Warp(WarpField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub cols: usize,
    pub rows: usize,
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deformation: Option<Deformation>,
}

impl GridSpec {
    pub fn square(cols: usize, rows: usize, spacing: f64) -> Self {
        GridSpec {
            kind: GridKind::Square,
            cols,
            rows,
            spacing,
            deformation: None,
        }
    }

    pub fn hexagonal(cols: usize, rows: usize, spacing: f64) -> Self {
        GridSpec {
            kind: GridKind::Hexagonal,
            ..GridSpec::square(cols, rows, spacing)
        }
    }

    /// Explicit patterns ignore cols/rows/spacing.
    pub fn explicit() -> Self {
        GridSpec {
            kind: GridKind::Explicit,
            ..GridSpec::square(1, 1, 1.0)
        }
    }

    pub fn with_deformation(mut self, deformation: Deformation) -> Self {
        self.deformation = Some(deformation);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == GridKind::Explicit {
            return Ok(());
        }
        if self.cols == 0 || self.rows == 0 {
            return Err(Error::InvalidSpec(format!(
                "grid must have at least one column and row, got {}x{}",
                self.cols, self.rows
            )));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        match (&self.deformation, self.kind) {
            (None, _) => Ok(()),
            (Some(_), GridKind::Hexagonal) => Err(Error::InvalidSpec(
                "deformations apply to square grids only".into(),
            )),
            (Some(Deformation::Radial(r)), _) => {
                if !(r.inner_radius.is_finite() && r.inner_radius > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "radial inner radius must be positive, got {}",
                        r.inner_radius
                    )));
                }
                if !(r.angular_span > 0.0 && r.angular_span <= 2.0 * PI) {
                    return Err(Error::InvalidSpec(format!(
                        "radial angular span must lie in (0, 2pi], got {}",
                        r.angular_span
                    )));
                }
                Ok(())
            }
            (Some(Deformation::Warp(w)), _) => {
                let finite = w.amplitude.iter().chain(&w.period).all(|v| v.is_finite());
                if !finite || w.period[0] <= 0.0 || w.period[1] <= 0.0 {
                    return Err(Error::InvalidSpec("warp periods must be positive".into()));
                }
                // Jacobian determinant stays positive, so the warp is injective.
                let kx = w.amplitude[0].abs() * 2.0 * PI / w.period[1];
                let ky = w.amplitude[1].abs() * 2.0 * PI / w.period[0];
                if kx * ky >= 1.0 {
                    return Err(Error::InvalidSpec("warp amplitude too large to stay injective".into()));
                }
                Ok(())
            }
        }
    }

    /// Position of the square-lattice point at fractional (col, row).
    pub fn lattice_position(&self, col: f64, row: f64) -> Point2 {
        let x = col * self.spacing;
        let y = row * self.spacing;
        match &self.deformation {
            None => [x, y],
            Some(Deformation::Radial(r)) => {
                // A full turn leaves one column step between the last and first column.
                let steps = if r.angular_span >= 2.0 * PI - 1e-12 {
                    self.cols as f64 + 1.0
                } else {
                    self.cols as f64
                };
                let theta = r.angular_span * col / steps;
                let radius = r.inner_radius + y;
                [radius * theta.cos(), radius * theta.sin()]
            }
            Some(Deformation::Warp(w)) => [
                x + w.amplitude[0] * (2.0 * PI * y / w.period[1]).sin(),
                y + w.amplitude[1] * (2.0 * PI * x / w.period[0]).sin(),
            ],
        }
    }
}

/// Vertices gathered and sewn to a single point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StitchingLine {
    pub vertex_ids: Vec<usize>,
}

impl StitchingLine {
    pub fn new(vertex_ids: Vec<usize>) -> Self {
        StitchingLine { vertex_ids }
    }
}

impl From<Vec<usize>> for StitchingLine {
    fn from(vertex_ids: Vec<usize>) -> Self {
        StitchingLine { vertex_ids }
    }
}

/// Cell-space box `[min, max)` of the unit pattern inside a square grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitCell {
    pub min: [usize; 2],
    pub max: [usize; 2],
}

impl UnitCell {
    pub fn period(&self) -> [usize; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmockingPattern {
    pub grid: GridSpec,
    pub vertices: Vec<Point2>,
    /// Unordered vertex pairs, stored `[min, max]`, sorted and unique.
    pub edges: Vec<[usize; 2]>,
    pub lines: Vec<StitchingLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_cell: Option<UnitCell>,
}

impl SmockingPattern {
    /// Builds an explicit-kind pattern and checks every invariant.
    pub fn explicit(vertices: Vec<Point2>, edges: Vec<[usize; 2]>, lines: Vec<StitchingLine>) -> Result<Self> {
        let p = SmockingPattern {
            grid: GridSpec::explicit(),
            vertices,
            edges: normalize_edges(edges),
            lines,
            unit_cell: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Line index owning each vertex, `None` for pleat vertices.
    pub fn line_of_vertex(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.vertices.len()];
        for (k, line) in self.lines.iter().enumerate() {
            for &v in &line.vertex_ids {
                if v < owner.len() {
                    owner[v] = Some(k);
                }
            }
        }
        owner
    }

    /// Square-grid vertex index at lattice (col, row).
    pub fn grid_vertex(&self, col: usize, row: usize) -> Option<usize> {
        if self.grid.kind != GridKind::Square || col > self.grid.cols || row > self.grid.rows {
            return None;
        }
        Some(row * (self.grid.cols + 1) + col)
    }

    /// Lattice (col, row) of a square-grid vertex.
    pub fn grid_coords(&self, v: usize) -> Option<(usize, usize)> {
        if self.grid.kind != GridKind::Square || v >= self.vertices.len() {
            return None;
        }
        let w = self.grid.cols + 1;
        Some((v % w, v / w))
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        bounding_box(&self.vertices)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.vertices.len();
        if n == 0 {
            return Err(Error::InvalidPattern("pattern has no vertices".into()));
        }
        if let Some(i) = self.vertices.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::InvalidPattern(format!("vertex {i} is not finite")));
        }
        for &[a, b] in &self.edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidPattern(format!("invalid edge ({a}, {b})")));
            }
        }
        validate_lines(&self.lines, n)?;
        if !is_connected(n, &self.edges) {
            return Err(Error::InvalidPattern("fabric graph is not connected".into()));
        }
        Ok(())
    }
}

/// Every line has at least two distinct existing vertices; no vertex is shared.
pub fn validate_lines(lines: &[StitchingLine], num_vertices: usize) -> Result<()> {
    let mut owner: Vec<Option<usize>> = vec![None; num_vertices];
    for (k, line) in lines.iter().enumerate() {
        if line.vertex_ids.len() < 2 {
            return Err(Error::InvalidPattern(format!(
                "stitching line {k} needs at least two vertices"
            )));
        }
        for (pos, &v) in line.vertex_ids.iter().enumerate() {
            if v >= num_vertices {
                return Err(Error::InvalidPattern(format!(
                    "stitching line {k} references missing vertex {v}"
                )));
            }
            if line.vertex_ids[..pos].contains(&v) {
                return Err(Error::InvalidPattern(format!(
                    "stitching line {k} repeats vertex {v}"
                )));
            }
            if let Some(first) = owner[v] {
                return Err(Error::LineConflict {
                    first,
                    second: k,
                    vertex: v,
                });
            }
            owner[v] = Some(k);
        }
    }
    Ok(())
}

pub(crate) fn normalize_edges(edges: Vec<[usize; 2]>) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = edges
        .into_iter()
        .filter(|e| e[0] != e[1])
        .map(|[a, b]| [a.min(b), a.max(b)])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn is_connected(n: usize, edges: &[[usize; 2]]) -> bool {
    component_count(n, edges) <= 1
}

/// Number of connected components among vertices `0..n`.
pub(crate) fn component_count(n: usize, edges: &[[usize; 2]]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &[a, b] in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

pub fn bounding_box(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

pub fn dist2(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
