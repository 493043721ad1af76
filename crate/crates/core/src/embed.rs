//! Distance-constrained embedding of the smocked graph.
//!
//! The underlay graph is embedded in the plane first, each underlay edge
//! pulled towards its bound. The pleat nodes then move in 3D with the underlay
//! held at height zero: pleat edges are stretched to their bounds, a small
//! spread term pushes nodes apart and a height-variance term evens out the
//! pleats.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::graph::{distance_bound, EdgeClass, NodeSource, SmockedGraph};
use crate::pattern::SmockingPattern;
use crate::solver::{solve_least_squares, Objective, SolveReport, SolverOptions, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub w_embed: f64,
    pub w_height: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub energy_tol: f64,
    pub pleat_init_height: f64,
    /// Stiffness of the one-sided penalty keeping every node pair within its
    /// distance bound; zero leaves only the edge terms.
    pub bound_weight: f64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            w_embed: 1e-3,
            w_height: 1e-3,
            max_iters: 1000,
            grad_tol: 1e-9,
            energy_tol: 1e-8,
            pleat_init_height: 1.0,
            bound_weight: 1e6,
        }
    }
}

impl EmbedParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.w_embed) || !ok(self.w_height) || !ok(self.bound_weight) {
            return Err(Error::InvalidSpec("regularizer weights must be finite and non-negative".into()));
        }
        if !(self.grad_tol > 0.0 && self.energy_tol > 0.0) {
            return Err(Error::InvalidSpec("tolerances must be positive".into()));
        }
        if !self.pleat_init_height.is_finite() {
            return Err(Error::InvalidSpec("pleat initial height must be finite".into()));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            energy_tol: self.energy_tol,
        }
    }

    /// Same parameters with both regularizers and the pair caps switched off.
    pub fn unregularized(mut self) -> Self {
        self.bound_weight = 0.0;
        self.w_embed = 0.0;
        self.w_height = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTraceRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

fn tag(stage: Stage, trace: &[TraceRecord]) -> Vec<StageTraceRecord> {
    trace
        .iter()
        .map(|r| StageTraceRecord {
            stage,
            iteration: r.iteration,
            energy: r.energy,
            grad_norm: r.grad_norm,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub underlay: usize,
    pub pleat: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub underlay: bool,
    pub pleat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSolution {
    /// Planar underlay coordinates, one per underlay node.
    pub underlay_xy: Vec<[f64; 2]>,
    /// Pleat coordinates in node order after the underlay nodes.
    pub pleat_xyz: Vec<[f64; 3]>,
    /// Sum of squared underlay-edge residuals.
    pub underlay_energy: f64,
    /// Full pleat objective including both regularizers.
    pub pleat_energy: f64,
    /// Sum of squared pleat-edge residuals alone.
    pub pleat_residual: f64,
    pub iterations: StageCounts,
    pub converged: StageFlags,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<StageTraceRecord>,
}

impl EmbeddingSolution {
    /// 3D position of every smocked-graph node; underlay nodes sit at z = 0.
    pub fn node_positions(&self) -> Vec<[f64; 3]> {
        self.underlay_xy
            .iter()
            .map(|p| [p[0], p[1], 0.0])
            .chain(self.pleat_xyz.iter().copied())
            .collect()
    }

    pub fn converged(&self) -> bool {
        self.converged.underlay && self.converged.pleat
    }

    /// Sum of squared residuals over every smocked-graph edge.
    pub fn total_residual(&self) -> f64 {
        self.underlay_energy + self.pleat_residual
    }
}

/// Springs, spread and height-variance terms over a coordinate vector with
/// `dim` entries per node, some of which are held fixed.
#[derive(Debug, Clone)]
pub struct SpringObjective {
    pub dim: usize,
    /// Full coordinate vector; entries not listed in `free` stay at these values.
    pub base: Vec<f64>,
    /// Full-vector indices of the optimization variables.
    pub free: Vec<usize>,
    /// `(a, b, rest)`: contributes `(|x_a - x_b| - rest)^2`.
    pub springs: Vec<(usize, usize, f64)>,
    /// `(a, b, bound)`: contributes `cap_weight * max(0, |x_a - x_b| - bound)^2`.
    pub caps: Vec<(usize, usize, f64)>,
    pub cap_weight: f64,
    /// Pairs contributing `-w_embed |x_a - x_b|`.
    pub spread: Vec<(usize, usize)>,
    pub w_embed: f64,
    /// Nodes whose last coordinate enters `w_height * Var[h]`.
    pub height_nodes: Vec<usize>,
    pub w_height: f64,
    var_of: Vec<Option<usize>>,
}

const COINCIDENT: f64 = 1e-12;

impl SpringObjective {
    pub fn new(dim: usize, base: Vec<f64>, free: Vec<usize>, springs: Vec<(usize, usize, f64)>) -> Self {
        let mut var_of = vec![None; base.len()];
        for (k, &i) in free.iter().enumerate() {
            var_of[i] = Some(k);
        }
        SpringObjective {
            dim,
            base,
            free,
            springs,
            caps: Vec::new(),
            cap_weight: 0.0,
            spread: Vec::new(),
            w_embed: 0.0,
            height_nodes: Vec::new(),
            w_height: 0.0,
            var_of,
        }
    }

    pub fn with_caps(mut self, caps: Vec<(usize, usize, f64)>, w: f64) -> Self {
        self.caps = caps;
        self.cap_weight = w;
        self
    }

    pub fn with_spread(mut self, pairs: Vec<(usize, usize)>, w: f64) -> Self {
        self.spread = pairs;
        self.w_embed = w;
        self
    }

    pub fn with_height(mut self, nodes: Vec<usize>, w: f64) -> Self {
        self.height_nodes = nodes;
        self.w_height = w;
        self
    }

    pub fn start(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.base[i]).collect()
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            f[i] = x[k];
        }
        f
    }

    fn diff(&self, f: &[f64], a: usize, b: usize) -> ([f64; 3], f64) {
        let mut d = [0.0; 3];
        for k in 0..self.dim {
            d[k] = f[a * self.dim + k] - f[b * self.dim + k];
        }
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        (d, r)
    }

    /// Sum of squared spring residuals at a full coordinate vector.
    pub fn spring_energy(&self, f: &[f64]) -> f64 {
        self.springs
            .iter()
            .map(|&(a, b, rest)| (self.diff(f, a, b).1 - rest).powi(2))
            .sum()
    }

    /// Penalty of all pairs beyond their bound.
    pub fn cap_energy(&self, f: &[f64]) -> f64 {
        if self.cap_weight == 0.0 {
            return 0.0;
        }
        self.cap_weight
            * self
                .caps
                .iter()
                .map(|&(a, b, bound)| (self.diff(f, a, b).1 - bound).max(0.0).powi(2))
                .sum::<f64>()
    }

    /// Objective value without the cap penalty.
    pub fn uncapped_value(&self, f: &[f64]) -> f64 {
        let mut e = self.spring_energy(f);
        if self.w_embed != 0.0 {
            let s: f64 = self.spread.iter().map(|&(a, b)| self.diff(f, a, b).1).sum();
            e -= self.w_embed * s;
        }
        if self.w_height != 0.0 && !self.height_nodes.is_empty() {
            e += self.w_height * self.height_variance(f);
        }
        e
    }

    fn full_value(&self, f: &[f64]) -> f64 {
        self.uncapped_value(f) + self.cap_energy(f)
    }

    fn heights<'f>(&'f self, f: &'f [f64]) -> impl Iterator<Item = f64> + 'f {
        self.height_nodes.iter().map(move |&n| f[n * self.dim + self.dim - 1])
    }

    /// Population variance of the last coordinate over `height_nodes`.
    pub fn height_variance(&self, f: &[f64]) -> f64 {
        let n = self.height_nodes.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.heights(f).sum::<f64>() / n;
        self.heights(f).map(|h| (h - mean).powi(2)).sum::<f64>() / n
    }

    fn add_pair_grad(&self, g: &mut [f64], a: usize, b: usize, d: &[f64; 3], scale: f64) {
        for k in 0..self.dim {
            g[a * self.dim + k] += scale * d[k];
            g[b * self.dim + k] -= scale * d[k];
        }
    }

    fn full_gradient(&self, f: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; f.len()];
        for &(a, b, rest) in &self.springs {
            let (d, r) = self.diff(f, a, b);
            if r < COINCIDENT {
                continue;
            }
            self.add_pair_grad(&mut g, a, b, &d, 2.0 * (r - rest) / r);
        }
        if self.cap_weight != 0.0 {
            for &(a, b, bound) in &self.caps {
                let (d, r) = self.diff(f, a, b);
                if r > bound {
                    self.add_pair_grad(&mut g, a, b, &d, 2.0 * self.cap_weight * (r - bound) / r);
                }
            }
        }
        if self.w_embed != 0.0 {
            for &(a, b) in &self.spread {
                let (d, r) = self.diff(f, a, b);
                if r < COINCIDENT {
                    continue;
                }
                self.add_pair_grad(&mut g, a, b, &d, -self.w_embed / r);
            }
        }
        let n = self.height_nodes.len();
        if self.w_height != 0.0 && n > 0 {
            let mean = self.heights(f).sum::<f64>() / n as f64;
            for &node in &self.height_nodes {
                let i = node * self.dim + self.dim - 1;
                g[i] += self.w_height * 2.0 * (f[i] - mean) / n as f64;
            }
        }
        g
    }
}

impl Objective for SpringObjective {
    fn num_vars(&self) -> usize {
        self.free.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.full_value(&self.expand(x))
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let g = self.full_gradient(&self.expand(x));
        for (k, &i) in self.free.iter().enumerate() {
            grad[k] = g[i];
        }
    }

    /// Exact Hessian; the solver clamps it to positive semidefinite. A spring
    /// contributes `2 u u^T + 2 (r - rest) / r (I - u u^T)`, an active cap the
    /// same scaled by its weight and a spread pair `-w_embed / r (I - u u^T)`.
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let f = self.expand(x);
        let m = self.free.len();
        let mut h = DMatrix::zeros(m, m);
        let dim = self.dim;
        let add_pair = |h: &mut DMatrix<f64>, a: usize, b: usize, block: &[[f64; 3]; 3]| {
            for p in 0..dim {
                for q in 0..dim {
                    let v = block[p][q];
                    if v == 0.0 {
                        continue;
                    }
                    for (s, t, sign) in [(a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)] {
                        if let (Some(i), Some(j)) = (self.var_of[s * dim + p], self.var_of[t * dim + q]) {
                            h[(i, j)] += sign * v;
                        }
                    }
                }
            }
        };
        let block = |d: &[f64; 3], r: f64, along: f64, across: f64| {
            let mut b = [[0.0; 3]; 3];
            for p in 0..dim {
                for q in 0..dim {
                    let uu = d[p] * d[q] / (r * r);
                    let id = if p == q { 1.0 } else { 0.0 };
                    b[p][q] = along * uu + across * (id - uu);
                }
            }
            b
        };
        for &(a, b, rest) in &self.springs {
            let (d, r) = self.diff(&f, a, b);
            if r < COINCIDENT {
                continue;
            }
            add_pair(&mut h, a, b, &block(&d, r, 2.0, 2.0 * (r - rest) / r));
        }
        if self.cap_weight != 0.0 {
            let k = self.cap_weight;
            for &(a, b, bound) in &self.caps {
                let (d, r) = self.diff(&f, a, b);
                if r > bound {
                    add_pair(&mut h, a, b, &block(&d, r, 2.0 * k, 2.0 * k * (r - bound) / r));
                }
            }
        }
        if self.w_embed != 0.0 {
            for &(a, b) in &self.spread {
                let (d, r) = self.diff(&f, a, b);
                if r < COINCIDENT {
                    continue;
                }
                add_pair(&mut h, a, b, &block(&d, r, 0.0, -self.w_embed / r));
            }
        }
        let n = self.height_nodes.len();
        if self.w_height != 0.0 && n > 0 {
            let nf = n as f64;
            for &s in &self.height_nodes {
                for &t in &self.height_nodes {
                    let (Some(i), Some(j)) = (self.var_of[s * dim + dim - 1], self.var_of[t * dim + dim - 1]) else {
                        continue;
                    };
                    let delta = if s == t { 1.0 } else { 0.0 };
                    h[(i, j)] += self.w_height * 2.0 / nf * (delta - 1.0 / nf);
                }
            }
        }
        h
    }

    fn is_sum_of_squares(&self) -> bool {
        self.w_embed == 0.0
    }
}

/// Cap stiffness of the first warm-start solve.
const CAP_START: f64 = 1e2;
const CAP_GROWTH: f64 = 100.0;

/// Solves with the cap stiffness raised geometrically up to its target, each
/// level warm-started from the previous one. The returned trace covers the
/// final level; the iteration count covers all of them.
fn solve_capped(obj: &mut SpringObjective, params: &EmbedParams) -> SolveReport {
    let target = obj.cap_weight;
    let mut k = if obj.caps.is_empty() { target } else { target.min(CAP_START) };
    let mut x = obj.start();
    let mut iterations = 0;
    loop {
        obj.cap_weight = k;
        let mut report = solve_least_squares(obj, &x, &params.solver());
        iterations += report.iterations;
        if k >= target {
            report.iterations = iterations;
            return report;
        }
        x = report.x;
        k = (k * CAP_GROWTH).min(target);
    }
}

/// Average flat position of every underlay node's stitching points.
pub fn underlay_init(p: &SmockingPattern, g: &SmockedGraph) -> Vec<[f64; 2]> {
    (0..g.num_underlay)
        .map(|n| {
            let NodeSource::Underlay { line } = g.nodes[n] else {
                unreachable!("underlay nodes come first")
            };
            let ids = &p.lines[line].vertex_ids;
            let k = ids.len() as f64;
            let mut c = [0.0; 2];
            for &v in ids {
                c[0] += p.vertices[v][0] / k;
                c[1] += p.vertices[v][1] / k;
            }
            c
        })
        .collect()
}

/// Free coordinates of a 2D gauge: node 0 fixed, one coordinate of the
/// first node away from node 0 fixed.
fn gauge_free(init: &[[f64; 2]], dim: usize, stride_nodes: usize) -> Vec<usize> {
    let mut fixed = vec![false; stride_nodes * dim];
    if init.is_empty() {
        return Vec::new();
    }
    fixed[0] = true;
    fixed[1] = true;
    if let Some(k) = (1..init.len()).find(|&k| init[k] != init[0]) {
        let (dx, dy) = (init[k][0] - init[0][0], init[k][1] - init[0][1]);
        // Fix the coordinate across the node-0 direction.
        let axis = if dx.abs() >= dy.abs() { 1 } else { 0 };
        fixed[k * dim + axis] = true;
    }
    (0..fixed.len()).filter(|&i| !fixed[i]).collect()
}

/// Rigid motion putting `pts[0]` at the origin and the first distinct point on +x.
fn anchor(pts: &mut [[f64; 2]]) {
    let Some(&o) = pts.first() else { return };
    let dir = pts
        .iter()
        .skip(1)
        .map(|p| [p[0] - o[0], p[1] - o[1]])
        .find(|d| d[0].hypot(d[1]) > COINCIDENT);
    let (c, s) = match dir {
        Some(d) => {
            let r = d[0].hypot(d[1]);
            (d[0] / r, d[1] / r)
        }
        None => (1.0, 0.0),
    };
    for p in pts.iter_mut() {
        let (x, y) = (p[0] - o[0], p[1] - o[1]);
        *p = [c * x + s * y, -s * x + c * y];
    }
    pts[0] = [0.0, 0.0];
}

fn underlay_springs(g: &SmockedGraph) -> Vec<(usize, usize, f64)> {
    g.underlay_edges().map(|e| (e.a, e.b, e.bound)).collect()
}

/// Eq. 4 energy: sum of squared underlay-edge residuals.
pub fn underlay_energy(g: &SmockedGraph, xy: &[[f64; 2]]) -> f64 {
    g.underlay_edges()
        .map(|e| {
            let d = ((xy[e.a][0] - xy[e.b][0]).powi(2) + (xy[e.a][1] - xy[e.b][1]).powi(2)).sqrt();
            (d - e.bound).powi(2)
        })
        .sum()
}

/// Sum of squared pleat-edge residuals.
pub fn pleat_residual(g: &SmockedGraph, xy: &[[f64; 2]], xyz: &[[f64; 3]]) -> f64 {
    let pos = |n: usize| -> [f64; 3] {
        if n < g.num_underlay {
            [xy[n][0], xy[n][1], 0.0]
        } else {
            xyz[n - g.num_underlay]
        }
    };
    g.pleat_edges()
        .map(|e| {
            let (a, b) = (pos(e.a), pos(e.b));
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            (d - e.bound).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnderlayResult {
    /// Anchored: node 0 at the origin, the next distinct node on +x.
    pub xy: Vec<[f64; 2]>,
    pub energy: f64,
    pub report: SolveReport,
}

fn check_underlay(g: &SmockedGraph) -> Result<()> {
    if g.num_underlay == 0 {
        return Err(Error::EmptyUnderlay);
    }
    let components = g.underlay_components();
    if components > 1 {
        return Err(Error::DisconnectedUnderlay { components });
    }
    Ok(())
}

/// Distance bound of every node pair, `(a, b, d_ab)` with `a < b`.
pub fn pair_caps(p: &SmockingPattern, g: &SmockedGraph) -> Vec<(usize, usize, f64)> {
    let n = g.num_nodes();
    let mut caps = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            caps.push((a, b, distance_bound(p, g, a, b)));
        }
    }
    caps
}

/// Embeds the underlay graph in the plane from the given start positions.
/// Only caps between two underlay nodes are used.
pub fn embed_underlay_from(
    g: &SmockedGraph,
    caps: &[(usize, usize, f64)],
    init: &[[f64; 2]],
    params: &EmbedParams,
) -> Result<UnderlayResult> {
    params.validate()?;
    check_underlay(g)?;
    let n = g.num_underlay;
    let base: Vec<f64> = init.iter().flat_map(|p| [p[0], p[1]]).collect();
    let free = gauge_free(init, 2, n);
    let caps = caps.iter().copied().filter(|c| c.0 < n && c.1 < n).collect();
    let mut obj = SpringObjective::new(2, base, free, underlay_springs(g)).with_caps(caps, params.bound_weight);
    let report = solve_capped(&mut obj, params);
    let full = obj.expand(&report.x);
    let mut xy: Vec<[f64; 2]> = full.chunks(2).map(|c| [c[0], c[1]]).collect();
    anchor(&mut xy);
    let energy = underlay_energy(g, &xy);
    if !report.converged() {
        log::warn!("underlay solve stopped without converging ({:?})", report.termination);
    }
    Ok(UnderlayResult { xy, energy, report })
}

/// Embeds the underlay graph starting from the averaged stitching points.
pub fn embed_underlay(p: &SmockingPattern, g: &SmockedGraph, params: &EmbedParams) -> Result<UnderlayResult> {
    embed_underlay_from(g, &pair_caps(p, g), &underlay_init(p, g), params)
}

/// Least-squares rigid motion taking `src` onto `dst` (2D Procrustes).
pub fn align_rigid(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = src.len() as f64;
    if src.is_empty() {
        return Vec::new();
    }
    let cs = src.iter().fold([0.0; 2], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let cd = dst.iter().fold([0.0; 2], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (ax, ay) = (s[0] - cs[0], s[1] - cs[1]);
        let (bx, by) = (d[0] - cd[0], d[1] - cd[1]);
        sxx += ax * bx + ay * by;
        sxy += ax * by - ay * bx;
    }
    let theta = sxy.atan2(sxx);
    let (c, s) = (theta.cos(), theta.sin());
    src.iter()
        .map(|p| {
            let (x, y) = (p[0] - cs[0], p[1] - cs[1]);
            [c * x - s * y + cd[0], s * x + c * y + cd[1]]
        })
        .collect()
}

fn check_pleats(g: &SmockedGraph) -> Result<()> {
    let mut has_edge = vec![false; g.num_nodes()];
    for e in g.pleat_edges() {
        has_edge[e.a] = true;
        has_edge[e.b] = true;
    }
    for n in g.num_underlay..g.num_nodes() {
        if !has_edge[n] {
            let vertex = g.pleat_vertex(n).unwrap_or(n);
            return Err(Error::IsolatedPleat { node: n, vertex });
        }
    }
    Ok(())
}

/// Pairs with at least one pleat endpoint.
fn spread_pairs(g: &SmockedGraph) -> Vec<(usize, usize)> {
    let n = g.num_nodes();
    let mut pairs = Vec::new();
    for b in g.num_underlay..n {
        for a in 0..b {
            pairs.push((a, b));
        }
    }
    pairs
}

fn pleat_init(p: &SmockingPattern, g: &SmockedGraph, height: f64) -> Vec<[f64; 3]> {
    (g.num_underlay..g.num_nodes())
        .map(|n| {
            let v = g.pleat_vertex(n).expect("pleat node");
            [p.vertices[v][0], p.vertices[v][1], height]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PleatResult {
    pub xyz: Vec<[f64; 3]>,
    pub energy: f64,
    pub residual: f64,
    pub report: SolveReport,
}

fn pleat_objective(
    g: &SmockedGraph,
    caps: Vec<(usize, usize, f64)>,
    base: Vec<f64>,
    free: Vec<usize>,
    params: &EmbedParams,
) -> SpringObjective {
    let springs = g.edges.iter().filter(|e| e.class == EdgeClass::Pleat).map(|e| (e.a, e.b, e.bound)).collect();
    SpringObjective::new(3, base, free, springs)
        .with_caps(caps, params.bound_weight)
        .with_spread(spread_pairs(g), params.w_embed)
        .with_height((g.num_underlay..g.num_nodes()).collect(), params.w_height)
}

/// Places the pleat nodes in 3D with the underlay fixed at `underlay_xy`.
/// Caps between two underlay nodes are ignored.
pub fn embed_pleats_from(
    g: &SmockedGraph,
    caps: &[(usize, usize, f64)],
    underlay_xy: &[[f64; 2]],
    init: &[[f64; 3]],
    params: &EmbedParams,
) -> Result<PleatResult> {
    params.validate()?;
    check_pleats(g)?;
    let nu = g.num_underlay;
    let base: Vec<f64> = underlay_xy
        .iter()
        .map(|p| [p[0], p[1], 0.0])
        .chain(init.iter().copied())
        .flatten()
        .collect();
    let free: Vec<usize> = (nu * 3..base.len()).collect();
    let caps = caps.iter().copied().filter(|c| c.1 >= nu).collect();
    let mut obj = pleat_objective(g, caps, base, free, params);
    let report = solve_capped(&mut obj, params);
    let xyz: Vec<[f64; 3]> = report.x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let residual = pleat_residual(g, underlay_xy, &xyz);
    if !report.converged() {
        log::warn!("pleat solve stopped without converging ({:?})", report.termination);
    }
    Ok(PleatResult {
        energy: obj.uncapped_value(&obj.expand(&report.x)),
        xyz,
        residual,
        report,
    })
}

/// Pleat stage with pleat nodes starting at their pattern positions, raised
/// to `pleat_init_height`.
pub fn embed_pleats(
    p: &SmockingPattern,
    g: &SmockedGraph,
    underlay_xy: &[[f64; 2]],
    params: &EmbedParams,
) -> Result<PleatResult> {
    embed_pleats_from(g, &pair_caps(p, g), underlay_xy, &pleat_init(p, g, params.pleat_init_height), params)
}

/// Finished underlay stage in the pattern frame, ready for the pleat stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderlayStage {
    pub xy: Vec<[f64; 2]>,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<StageTraceRecord>,
}

/// Underlay solve, rotated back onto the pattern frame.
pub fn underlay_stage(p: &SmockingPattern, g: &SmockedGraph, params: &EmbedParams) -> Result<UnderlayStage> {
    let init = underlay_init(p, g);
    let under = embed_underlay_from(g, &pair_caps(p, g), &init, params).map_err(|e| e.at_stage(Stage::Underlay))?;
    let xy = align_rigid(&under.xy, &init);
    Ok(UnderlayStage {
        energy: underlay_energy(g, &xy),
        xy,
        iterations: under.report.iterations,
        converged: under.report.converged(),
        trace: tag(Stage::Underlay, &under.report.trace),
    })
}

/// Pleat solve on top of a finished underlay stage.
pub fn pleat_stage(
    p: &SmockingPattern,
    g: &SmockedGraph,
    under: &UnderlayStage,
    params: &EmbedParams,
) -> Result<EmbeddingSolution> {
    if under.xy.len() != g.num_underlay {
        return Err(Error::InvalidPattern(format!(
            "underlay stage has {} nodes, graph has {}",
            under.xy.len(),
            g.num_underlay
        ))
        .at_stage(Stage::Pleat));
    }
    let pleat = embed_pleats_from(g, &pair_caps(p, g), &under.xy, &pleat_init(p, g, params.pleat_init_height), params)
        .map_err(|e| e.at_stage(Stage::Pleat))?;
    let mut trace = under.trace.clone();
    trace.extend(tag(Stage::Pleat, &pleat.report.trace));
    Ok(EmbeddingSolution {
        underlay_energy: under.energy,
        underlay_xy: under.xy.clone(),
        pleat_xyz: pleat.xyz,
        pleat_energy: pleat.energy,
        pleat_residual: pleat.residual,
        iterations: StageCounts {
            underlay: under.iterations,
            pleat: pleat.report.iterations,
        },
        converged: StageFlags {
            underlay: under.converged,
            pleat: pleat.report.converged(),
        },
        trace,
    })
}

/// Underlay stage, realignment to the pattern frame, then the pleat stage.
pub fn embed_two_stage(p: &SmockingPattern, g: &SmockedGraph, params: &EmbedParams) -> Result<EmbeddingSolution> {
    let under = underlay_stage(p, g, params)?;
    pleat_stage(p, g, &under, params)
}

/// Joint solve over underlay (planar) and pleat (3D) coordinates.
pub fn embed_simultaneous(p: &SmockingPattern, g: &SmockedGraph, params: &EmbedParams) -> Result<EmbeddingSolution> {
    params.validate()?;
    check_underlay(g)?;
    check_pleats(g)?;
    if g.num_pleat() == 0 {
        return embed_two_stage(p, g, params);
    }
    let nu = g.num_underlay;
    let init = underlay_init(p, g);
    let base: Vec<f64> = init
        .iter()
        .map(|q| [q[0], q[1], 0.0])
        .chain(pleat_init(p, g, params.pleat_init_height))
        .flatten()
        .collect();
    let gauge: Vec<usize> = gauge_free(&init, 3, nu);
    // Underlay z stays at zero; all pleat coordinates are free.
    let free: Vec<usize> = gauge
        .into_iter()
        .filter(|i| i % 3 != 2)
        .chain(nu * 3..base.len())
        .collect();
    let mut obj = pleat_objective(g, pair_caps(p, g), base, free, params);
    obj.springs = g.edges.iter().map(|e| (e.a, e.b, e.bound)).collect();
    let report = solve_capped(&mut obj, params);
    let full = obj.expand(&report.x);
    let total = obj.uncapped_value(&full);
    let xy: Vec<[f64; 2]> = full[..nu * 3].chunks(3).map(|c| [c[0], c[1]]).collect();
    let xyz: Vec<[f64; 3]> = full[nu * 3..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let underlay = underlay_energy(g, &xy);
    let converged = report.converged();
    Ok(EmbeddingSolution {
        underlay_energy: underlay,
        pleat_energy: total - underlay,
        pleat_residual: pleat_residual(g, &xy, &xyz),
        underlay_xy: xy,
        pleat_xyz: xyz,
        iterations: StageCounts {
            underlay: report.iterations,
            pleat: report.iterations,
        },
        converged: StageFlags {
            underlay: converged,
            pleat: converged,
        },
        trace: tag(Stage::Underlay, &report.trace),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrunedPair {
    pub a: usize,
    pub b: usize,
    /// Node whose two-hop path makes the constraint redundant.
    pub via: usize,
    /// `d_ab - (d_a,via + d_via,b)`, never negative.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedConstraints {
    pub retained: Vec<[usize; 2]>,
    pub pruned: Vec<PrunedPair>,
}

/// Drops every edge `(i, k)` whose bound can never bind because some node
/// `j` has `d_ij + d_jk <= d_ik`.
pub fn prune_constraints(bounds: &DMatrix<f64>, edges: &[[usize; 2]]) -> PrunedConstraints {
    let n = bounds.nrows();
    let mut out = PrunedConstraints { retained: Vec::new(), pruned: Vec::new() };
    for &[i, k] in edges {
        let d = bounds[(i, k)];
        let best = (0..n)
            .filter(|&j| j != i && j != k)
            .map(|j| (j, bounds[(i, j)] + bounds[(j, k)]))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((j, path)) if path <= d * (1.0 + 1e-12) => out.pruned.push(PrunedPair {
                a: i.min(k),
                b: i.max(k),
                via: j,
                slack: (d - path).max(0.0),
            }),
            _ => out.retained.push([i.min(k), i.max(k)]),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{extract, SmockedEdge};

    fn graph(n_under: usize, pleats: usize, edges: &[(usize, usize, f64)]) -> SmockedGraph {
        let mut nodes: Vec<NodeSource> = (0..n_under).map(|line| NodeSource::Underlay { line }).collect();
        nodes.extend((0..pleats).map(|vertex| NodeSource::Pleat { vertex }));
        SmockedGraph {
            nodes,
            edges: edges
                .iter()
                .map(|&(a, b, bound)| SmockedEdge {
                    a,
                    b,
                    class: if a < n_under && b < n_under { EdgeClass::Underlay } else { EdgeClass::Pleat },
                    bound,
                })
                .collect(),
            vertex_node: Vec::new(),
            num_underlay: n_under,
            warnings: Vec::new(),
        }
    }

    fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    #[test]
    fn right_triangle_has_zero_energy() {
        let g = graph(3, 0, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2f64.sqrt())]);
        let r = embed_underlay_from(&g, &[], &[[0.0, 0.0], [1.3, 0.2], [0.9, 1.4]], &EmbedParams::default()).unwrap();
        assert!(r.energy < 1e-8);
        assert!((dist(r.xy[0], r.xy[2]) - 2f64.sqrt()).abs() < 1e-4);
        assert_eq!(r.xy[0], [0.0, 0.0]);
        assert!(r.xy[1][1].abs() < 1e-12 && r.xy[1][0] > 0.0);
    }

    #[test]
    fn single_edge_reaches_its_bound() {
        let g = graph(2, 0, &[(0, 1, 2.0)]);
        let r = embed_underlay_from(&g, &[], &[[0.0, 0.0], [0.5, 0.0]], &EmbedParams::default()).unwrap();
        assert!(r.energy < 1e-8);
        assert!((dist(r.xy[0], r.xy[1]) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn unit_square_from_perturbed_start() {
        let s2 = 2f64.sqrt();
        let g = graph(4, 0, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0), (0, 2, s2), (1, 3, s2)]);
        let init = [[0.1, -0.1], [0.8, 0.2], [1.2, 1.1], [-0.1, 0.7]];
        let r = embed_underlay_from(&g, &[], &init, &EmbedParams::default()).unwrap();
        assert!(r.energy <= 1e-8, "energy {}", r.energy);
        // Oracle: every bound met by a unit square, so each pairwise distance matches.
        for e in &g.edges {
            assert!((dist(r.xy[e.a], r.xy[e.b]) - e.bound).abs() < 1e-4);
        }
    }

    #[test]
    fn disconnected_underlay_is_rejected() {
        let g = graph(4, 0, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let err = embed_underlay_from(&g, &[], &[[0.0; 2]; 4], &EmbedParams::default()).unwrap_err();
        assert!(matches!(err, Error::DisconnectedUnderlay { components: 2 }));
    }

    #[test]
    fn two_anchor_pleat_lands_on_sphere_intersection() {
        let g = graph(2, 1, &[(0, 1, 2.0), (0, 2, 1.5), (1, 2, 1.5)]);
        let params = EmbedParams { energy_tol: 1e-24, ..EmbedParams::default().unregularized() };
        let r = embed_pleats_from(&g, &[], &[[0.0, 0.0], [2.0, 0.0]], &[[0.7, 0.3, 1.0]], &params).unwrap();
        let x = r.xyz[0];
        // |x|^2 = 2.25 and |x - (2,0,0)|^2 = 2.25 give x = 1 and y^2 + z^2 = 1.25.
        assert!((x[0] - 1.0).abs() < 1e-6);
        assert!((x[1].hypot(x[2]) - 1.25f64.sqrt()).abs() < 1e-6);
        assert!(x[2] > 0.0);
    }

    #[test]
    fn isolated_pleat_is_rejected() {
        let g = graph(2, 1, &[(0, 1, 1.0)]);
        let err = embed_pleats_from(&g, &[], &[[0.0, 0.0], [1.0, 0.0]], &[[0.5, 0.5, 1.0]], &EmbedParams::default()).unwrap_err();
        assert!(matches!(err, Error::IsolatedPleat { node: 2, .. }));
    }

    #[test]
    fn simultaneous_without_pleats_matches_underlay() {
        let p = crate::pattern::build_grid(&crate::pattern::GridSpec::square(3, 1, 1.0)).unwrap();
        let mut p = p;
        p.lines = vec![vec![0, 1].into(), vec![2, 3].into(), vec![4, 5].into(), vec![6, 7].into()];
        let g = extract(&p).unwrap();
        let params = EmbedParams::default();
        let under = embed_underlay(&p, &g, &params).unwrap();
        let sim = embed_simultaneous(&p, &g, &params).unwrap();
        assert!(sim.pleat_xyz.is_empty());
        assert!((under.energy - sim.underlay_energy).abs() < 1e-15);
        assert_eq!(sim, embed_two_stage(&p, &g, &params).unwrap());
        assert_eq!(sim.pleat_energy, 0.0);
    }

    #[test]
    fn pruning_follows_triangle_inequality() {
        let s5 = 5f64.sqrt();
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, s5, 1.0, 0.0, 1.0, s5, 1.0, 0.0]);
        let pr = prune_constraints(&m, &[[0, 1], [1, 2], [0, 2]]);
        assert_eq!(pr.retained, vec![[0, 1], [1, 2]]);
        assert_eq!(pr.pruned.len(), 1);
        assert!((pr.pruned[0].slack - (s5 - 2.0)).abs() < 1e-15);

        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(prune_constraints(&m, &[[0, 1], [1, 2], [0, 2]]).pruned.is_empty());
    }

    #[test]
    fn align_recovers_rigid_motion() {
        let src = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let dst: Vec<[f64; 2]> = src.iter().map(|p| [c * p[0] - s * p[1] + 4.0, s * p[0] + c * p[1] - 1.0]).collect();
        let out = align_rigid(&src, &dst);
        for (a, b) in out.iter().zip(&dst) {
            assert!(dist(*a, *b) < 1e-12);
        }
    }
}
