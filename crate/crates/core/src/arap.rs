//! As-rigid-as-possible deformation of the fine fabric.
//!
//! Local steps fit one rotation per vertex to its one-ring; global steps solve
//! a sparse Laplacian system. Pins and stitched groups are eliminated from the
//! linear system, so they hold exactly.

use nalgebra::{DMatrix, Matrix3, Vector3};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{FinePattern, SmockingPattern};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[default]
    Cotangent,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArapConfig {
    pub max_outer_iters: usize,
    /// Relative energy change that ends the iteration.
    pub tol: f64,
    pub weight_scheme: WeightScheme,
    /// Stitch distances for the baseline, solved in order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<Vec<f64>>,
}

impl Default for ArapConfig {
    fn default() -> Self {
        ArapConfig {
            max_outer_iters: 500,
            tol: 1e-8,
            weight_scheme: WeightScheme::Cotangent,
            epsilon_schedule: None,
        }
    }
}

impl ArapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidSpec("ARAP tolerance must be positive".into()));
        }
        if let Some(s) = &self.epsilon_schedule {
            if s.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(Error::InvalidSpec("epsilon values must be finite and non-negative".into()));
            }
            if s.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidSpec("epsilon schedule must be non-increasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArapResult {
    pub positions: Vec<Point3>,
    pub energy: f64,
    /// Energy after every local-global iteration, starting with the initial guess.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric per-edge weights of a triangle mesh as one-ring lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    pub rings: Vec<Vec<(usize, f64)>>,
}

impl EdgeWeights {
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.rings[i].iter().find(|(k, _)| *k == j).map(|(_, w)| *w)
    }
}

fn sub3(a: Point3, b: Point3) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

fn lift(p: [f64; 2]) -> Point3 {
    [p[0], p[1], 0.0]
}

/// Cotangent (`(cot a + cot b) / 2`) or uniform weights on the rest mesh.
/// Edges of degenerate rest triangles fall back to unit weight.
pub fn edge_weights(rest: &[Point3], faces: &[[usize; 3]], scheme: WeightScheme) -> EdgeWeights {
    let mut acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    let mut fallback = std::collections::BTreeSet::new();
    for f in faces {
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let key = (i.min(j), i.max(j));
            let w = acc.entry(key).or_insert(0.0);
            if scheme == WeightScheme::Uniform {
                *w = 1.0;
                continue;
            }
            let (u, v) = (sub3(rest[i], rest[o]), sub3(rest[j], rest[o]));
            let cross = u.cross(&v).norm();
            if cross <= 1e-12 * u.norm() * v.norm() {
                fallback.insert(key);
                continue;
            }
            *w += 0.5 * u.dot(&v) / cross;
        }
    }
    if !fallback.is_empty() {
        log::warn!("{} edges of degenerate triangles use uniform weights", fallback.len());
    }
    let mut rings = vec![Vec::new(); rest.len()];
    for ((i, j), w) in acc {
        let w = if fallback.contains(&(i, j)) { 1.0 } else { w };
        rings[i].push((j, w));
        rings[j].push((i, w));
    }
    EdgeWeights { rings }
}

/// Where a vertex lives in the reduced system: `x = X[var] + offset`, or
/// `x = offset` when pinned.
#[derive(Debug, Clone, Copy)]
struct Slot {
    var: Option<usize>,
    offset: Vector3<f64>,
}

struct System {
    rest: Vec<Point3>,
    weights: EdgeWeights,
    slots: Vec<Slot>,
    num_vars: usize,
    /// Absent when every vertex is pinned.
    factor: Option<CscCholesky<f64>>,
}

impl System {
    fn new(rest: Vec<Point3>, weights: EdgeWeights, slots: Vec<Slot>) -> Result<Self> {
        let num_vars = slots.iter().filter_map(|s| s.var).map(|v| v + 1).max().unwrap_or(0);
        let mut coo = CooMatrix::new(num_vars, num_vars);
        for (i, ring) in weights.rings.iter().enumerate() {
            for &(j, w) in ring {
                if j < i {
                    continue;
                }
                let c = 2.0 * w;
                match (slots[i].var, slots[j].var) {
                    (Some(a), Some(b)) if a == b => {}
                    (Some(a), Some(b)) => {
                        coo.push(a, a, c);
                        coo.push(b, b, c);
                        coo.push(a, b, -c);
                        coo.push(b, a, -c);
                    }
                    (Some(a), None) | (None, Some(a)) => coo.push(a, a, c),
                    (None, None) => {}
                }
            }
        }
        let factor = if num_vars == 0 {
            None
        } else {
            let csc = CscMatrix::from(&coo);
            Some(
                CscCholesky::factor(&csc)
                    .map_err(|e| Error::LinearSolve(format!("ARAP system is not positive definite: {e}")))?,
            )
        };
        Ok(System { rest, weights, slots, num_vars, factor })
    }

    fn position(&self, x: &DMatrix<f64>, v: usize) -> Vector3<f64> {
        let s = &self.slots[v];
        match s.var {
            Some(k) => Vector3::new(x[(k, 0)], x[(k, 1)], x[(k, 2)]) + s.offset,
            None => s.offset,
        }
    }

    fn expand(&self, x: &DMatrix<f64>) -> Vec<Point3> {
        (0..self.slots.len()).map(|v| self.position(x, v).into()).collect()
    }

    /// Weighted squared rest edge length, the energy scale of the mesh.
    fn rest_scale(&self) -> f64 {
        let mut s = 0.0;
        for (i, ring) in self.weights.rings.iter().enumerate() {
            for &(j, w) in ring {
                s += w.abs() * sub3(self.rest[i], self.rest[j]).norm_squared();
            }
        }
        s
    }

    fn rotations(&self, pos: &[Point3]) -> Vec<Matrix3<f64>> {
        fit_rotations(&self.rest, &self.weights, pos)
    }

    fn energy_with(&self, pos: &[Point3], rot: &[Matrix3<f64>]) -> f64 {
        energy_with(&self.rest, &self.weights, pos, rot)
    }

    fn global_step(&self, rot: &[Matrix3<f64>]) -> DMatrix<f64> {
        let mut rhs = DMatrix::zeros(self.num_vars, 3);
        for (i, ring) in self.weights.rings.iter().enumerate() {
            for &(j, w) in ring {
                if j < i {
                    continue;
                }
                let (si, sj) = (self.slots[i], self.slots[j]);
                if si.var.is_some() && si.var == sj.var {
                    continue;
                }
                let target = 0.5 * (rot[i] + rot[j]) * sub3(self.rest[i], self.rest[j]) - si.offset + sj.offset;
                let c = 2.0 * w;
                for k in 0..3 {
                    if let Some(a) = si.var {
                        rhs[(a, k)] += c * target[k];
                    }
                    if let Some(b) = sj.var {
                        rhs[(b, k)] -= c * target[k];
                    }
                }
            }
        }
        match &self.factor {
            Some(f) => f.solve(&rhs),
            None => rhs,
        }
    }

    /// Local-global iterations from `init` (full positions). Offsets may be
    /// refreshed by `update` before each global step.
    fn run(&mut self, init: &[Point3], cfg: &ArapConfig, mut update: impl FnMut(&mut [Slot], &[Point3])) -> ArapResult {
        let mut pos = init.to_vec();
        let mut rot = self.rotations(&pos);
        let mut energy = self.energy_with(&pos, &rot);
        let mut energies = vec![energy];
        let mut converged = false;
        let mut iterations = 0;
        let floor = 1e-16 * self.rest_scale();
        while iterations < cfg.max_outer_iters {
            update(&mut self.slots, &pos);
            let x = self.global_step(&rot);
            pos = self.expand(&x);
            rot = self.rotations(&pos);
            let next = self.energy_with(&pos, &rot);
            iterations += 1;
            energies.push(next);
            let change = (energy - next).abs();
            energy = next;
            if change <= cfg.tol * energies[energies.len() - 2].max(floor).max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        ArapResult { positions: pos, energy, energies, iterations, converged }
    }
}

/// Rotation closest to the covariance `s = sum w (rest edge)(current edge)^T`.
pub fn best_rotation(s: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = s.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = vt.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let k = svd.singular_values.imin();
        let mut d = Matrix3::identity();
        d[(k, k)] = -1.0;
        r = vt.transpose() * d * u.transpose();
    }
    r
}

/// Rotation best carrying the rest positions of the pins onto their targets;
/// identity when the pins are collinear.
fn pin_rotation(rest: &[Point3], pinned: &[Option<Vector3<f64>>]) -> Matrix3<f64> {
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> =
        pinned.iter().zip(rest).filter_map(|(t, &r)| t.map(|t| (Vector3::from(r), t))).collect();
    if pairs.len() < 3 {
        return Matrix3::identity();
    }
    let k = pairs.len() as f64;
    let rc = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / k;
    let tc = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / k;
    let mut s = Matrix3::zeros();
    for (r, t) in &pairs {
        s += (r - rc) * (t - tc).transpose();
    }
    let sv = s.singular_values();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[1] > 1e-9 * sorted[0]) {
        return Matrix3::identity();
    }
    best_rotation(&s)
}

/// Best-fit rotation of every one-ring.
fn fit_rotations(rest: &[Point3], weights: &EdgeWeights, pos: &[Point3]) -> Vec<Matrix3<f64>> {
    weights
        .rings
        .iter()
        .enumerate()
        .map(|(i, ring)| {
            let mut s = Matrix3::zeros();
            for &(j, w) in ring {
                s += w * sub3(rest[i], rest[j]) * sub3(pos[i], pos[j]).transpose();
            }
            best_rotation(&s)
        })
        .collect()
}

fn energy_with(rest: &[Point3], weights: &EdgeWeights, pos: &[Point3], rot: &[Matrix3<f64>]) -> f64 {
    let mut e = 0.0;
    for (i, ring) in weights.rings.iter().enumerate() {
        for &(j, w) in ring {
            e += w * (sub3(pos[i], pos[j]) - rot[i] * sub3(rest[i], rest[j])).norm_squared();
        }
    }
    e
}

/// ARAP energy of `pos` against the flat rest mesh with optimal rotations.
pub fn arap_energy(fine: &FinePattern, pos: &[Point3], scheme: WeightScheme) -> f64 {
    let rest: Vec<Point3> = fine.vertices.iter().map(|&p| lift(p)).collect();
    let weights = edge_weights(&rest, &fine.faces, scheme);
    energy_with(&rest, &weights, pos, &fit_rotations(&rest, &weights, pos))
}

/// Deforms the fine mesh with the fine images of coarse vertices held at
/// `pins` (coarse vertex id, target). Without pins, fine vertex 0 is held at
/// its rest position.
pub fn arap_pinned(fine: &FinePattern, pins: &[(usize, Point3)], cfg: &ArapConfig) -> Result<ArapResult> {
    cfg.validate()?;
    let rest: Vec<Point3> = fine.vertices.iter().map(|&p| lift(p)).collect();
    let n = rest.len();
    let mut pinned: Vec<Option<Vector3<f64>>> = vec![None; n];
    for &(c, t) in pins {
        let &v = fine
            .coarse_to_fine
            .get(c)
            .ok_or_else(|| Error::InvalidPattern(format!("pin on unknown coarse vertex {c}")))?;
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPattern(format!("pin target of coarse vertex {c} is not finite")));
        }
        pinned[v] = Some(Vector3::from(t));
    }
    if pinned.iter().all(|p| p.is_none()) && n > 0 {
        pinned[0] = Some(Vector3::from(rest[0]));
    }
    let mut next = 0;
    let slots: Vec<Slot> = pinned
        .iter()
        .map(|p| match p {
            Some(t) => Slot { var: None, offset: *t },
            None => {
                next += 1;
                Slot { var: Some(next - 1), offset: Vector3::zeros() }
            }
        })
        .collect();
    let weights = edge_weights(&rest, &fine.faces, cfg.weight_scheme);
    let mut sys = System::new(rest.clone(), weights, slots)?;
    // Start from the pins interpolated under their best common rotation.
    let start = vec![pin_rotation(&rest, &pinned); n];
    let init = sys.expand(&sys.global_step(&start));
    Ok(sys.run(&init, cfg, |_, _| {}))
}

/// Default progressive schedule: half the mean initial stitching-line length
/// halved three times, then zero.
pub fn default_schedule(p: &SmockingPattern) -> Vec<f64> {
    let lens: Vec<f64> = p
        .lines
        .iter()
        .map(|l| {
            l.vertex_ids
                .windows(2)
                .map(|w| crate::pattern::dist2(p.vertices[w[0]], p.vertices[w[1]]))
                .sum::<f64>()
        })
        .collect();
    if lens.is_empty() {
        return vec![0.0];
    }
    let e0 = 0.5 * lens.iter().sum::<f64>() / lens.len() as f64;
    vec![e0, e0 / 2.0, e0 / 4.0, e0 / 8.0, 0.0]
}

/// Stitching-constrained ARAP: consecutive points of every stitching line are
/// held `eps` apart along their current direction, for each `eps` of the
/// schedule in turn. A schedule starting above zero starts from a slightly
/// domed fabric so it can leave the plane.
pub fn arap_stitch_baseline(fine: &FinePattern, p: &SmockingPattern, cfg: &ArapConfig) -> Result<ArapResult> {
    cfg.validate()?;
    let schedule = cfg.epsilon_schedule.clone().unwrap_or_else(|| vec![0.0]);
    let rest: Vec<Point3> = fine.vertices.iter().map(|&q| lift(q)).collect();
    let n = rest.len();
    let groups = fine.stitched_groups(p);
    if groups.is_empty() || schedule.is_empty() {
        return Ok(ArapResult { positions: rest, energy: 0.0, energies: vec![0.0], iterations: 0, converged: true });
    }

    // Each group shares its first vertex's variable; fine vertex 0's
    // variable is replaced by a pin unless it is stitched.
    let mut rep: Vec<Option<usize>> = vec![None; n];
    for g in &groups {
        for &v in &g[1..] {
            rep[v] = Some(g[0]);
        }
    }
    let anchor = (0..n).find(|&v| rep[v].is_none() && !groups.iter().any(|g| g[0] == v)).unwrap_or(groups[0][0]);
    let mut var = vec![None; n];
    let mut next = 0;
    for v in 0..n {
        if rep[v].is_none() && v != anchor {
            var[v] = Some(next);
            next += 1;
        }
    }
    let slots: Vec<Slot> = (0..n)
        .map(|v| match rep[v] {
            Some(r) => Slot { var: var[r], offset: if var[r].is_none() { Vector3::from(rest[r]) } else { Vector3::zeros() } },
            None => Slot { var: var[v], offset: if var[v].is_none() { Vector3::from(rest[v]) } else { Vector3::zeros() } },
        })
        .collect();
    let weights = edge_weights(&rest, &fine.faces, cfg.weight_scheme);
    let mut sys = System::new(rest.clone(), weights, slots)?;

    let mut pos = rest.clone();
    if schedule[0] > 0.0 {
        dome(&mut pos, 0.1 * schedule[0]);
    }
    let mut energies = Vec::new();
    let mut iterations = 0;
    let mut result = None;
    for &eps in &schedule {
        let r = sys.run(&pos, cfg, |slots, cur| {
            for g in &groups {
                let base = slots[g[0]].offset;
                let mut acc = Vector3::zeros();
                for w in g.windows(2) {
                    let d = sub3(cur[w[1]], cur[w[0]]);
                    let dir = if d.norm() > 1e-12 { d / d.norm() } else { Vector3::zeros() };
                    acc += eps * dir;
                    slots[w[1]].offset = base + acc;
                }
            }
        });
        pos = r.positions.clone();
        iterations += r.iterations;
        energies.extend(r.energies.iter().copied());
        result = Some(r);
    }
    let mut last = result.expect("schedule is nonempty");
    last.energies = energies;
    last.iterations = iterations;
    Ok(last)
}

fn dome(pos: &mut [Point3], height: f64) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pos.iter() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for p in pos.iter_mut() {
        let u = (p[0] - lo[0]) / (hi[0] - lo[0]).max(1e-12);
        let v = (p[1] - lo[1]) / (hi[1] - lo[1]).max(1e-12);
        p[2] = height * (std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).sin();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{build_grid, refine, GridSpec};

    fn grid(c: usize, r: usize, s: usize) -> (SmockingPattern, FinePattern) {
        let p = build_grid(&GridSpec::square(c, r, 1.0)).unwrap();
        let f = refine(&p, s).unwrap();
        (p, f)
    }

    #[test]
    fn no_pins_returns_rest_mesh() {
        let (_, f) = grid(2, 2, 2);
        let r = arap_pinned(&f, &[], &ArapConfig::default()).unwrap();
        assert!(r.energy < 1e-20);
        for (a, b) in r.positions.iter().zip(&f.vertices) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12 && a[2].abs() < 1e-12);
        }
    }

    #[test]
    fn cotangent_weights_of_square_grid() {
        let (_, f) = grid(1, 1, 1);
        let rest: Vec<Point3> = f.vertices.iter().map(|&p| lift(p)).collect();
        let w = edge_weights(&rest, &f.faces, WeightScheme::Cotangent);
        // Sides see one 45 degree angle, the diagonal two right angles.
        assert!((w.weight(0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(w.weight(0, 3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_falls_back_to_uniform() {
        let rest = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let w = edge_weights(&rest, &[[0, 1, 2]], WeightScheme::Cotangent);
        assert_eq!(w.weight(0, 1), Some(1.0));
    }

    #[test]
    fn rotation_fit_rejects_reflections() {
        let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let r = best_rotation(&s);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pins_are_exact() {
        let (_, f) = grid(2, 2, 2);
        let pins = [(0, [0.1, 0.2, 0.3]), (8, [1.7, 1.9, -0.2])];
        let r = arap_pinned(&f, &pins, &ArapConfig::default()).unwrap();
        for (c, t) in pins {
            assert_eq!(r.positions[f.coarse_to_fine[c]], t);
        }
    }

    #[test]
    fn rigidly_moved_pins_move_the_mesh_rigidly() {
        let (p, f) = grid(3, 3, 2);
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let map = |q: Point3| [c * q[0] - s * q[2] - 1.0, q[1] + 0.5, s * q[0] + c * q[2] + 2.0];
        let pins: Vec<(usize, Point3)> = [0, 3, 12, 15].iter().map(|&v| (v, map(lift(p.vertices[v])))).collect();
        let r = arap_pinned(&f, &pins, &ArapConfig::default()).unwrap();
        assert!(r.converged);
        for (q, x) in f.vertices.iter().zip(&r.positions) {
            let want = map(lift(*q));
            assert!((0..3).all(|k| (want[k] - x[k]).abs() < 1e-12), "{x:?} vs {want:?}");
        }
    }

    #[test]
    fn baseline_without_lines_is_identity() {
        let (p, f) = grid(2, 2, 1);
        let r = arap_stitch_baseline(&f, &p, &ArapConfig::default()).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.positions.len(), f.num_vertices());
    }
}
