//! Pattern diagnostics: constraint classification, residual distribution and
//! shrinkage.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::arap::{best_rotation, Point3};
use crate::design::{PipelineRun, SmockedDesign};
use crate::embed::{embed_underlay_from, pair_caps, prune_constraints, underlay_init, EmbedParams, EmbeddingSolution, PrunedPair};
use crate::error::{Result, Stage};
use crate::graph::{all_pair_bounds, extract, EdgeClass, SmockedGraph};
use crate::pattern::{FinePattern, SmockingPattern};

/// Residual separating zero-energy from over-constrained underlays.
pub const ZERO_RESIDUAL: f64 = 1e-8;
/// Relative singular-value threshold of the flex test.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Well,
    Under,
    Over,
    /// The underlay solve did not converge.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub classification: Classification,
    /// Underlay pairs whose bound can never bind, with their slack.
    pub slack_pairs: Vec<PrunedPair>,
    /// Underlay energy over the retained pairs.
    pub residual: f64,
    /// Internal degrees of freedom left by the retained pairs.
    pub flex_dofs: usize,
    pub dof_note: String,
}

/// Rank of the length Jacobian of `edges` at planar positions `xy`.
pub fn rigidity_rank(xy: &[[f64; 2]], edges: &[[usize; 2]]) -> usize {
    if edges.is_empty() {
        return 0;
    }
    let mut j = DMatrix::zeros(edges.len(), 2 * xy.len());
    for (r, &[a, b]) in edges.iter().enumerate() {
        let d = [xy[a][0] - xy[b][0], xy[a][1] - xy[b][1]];
        let len = d[0].hypot(d[1]);
        if len == 0.0 {
            continue;
        }
        for k in 0..2 {
            j[(r, 2 * a + k)] = d[k] / len;
            j[(r, 2 * b + k)] = -d[k] / len;
        }
    }
    let sv = j.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Solves the underlay over its non-redundant pairs and classifies it as
/// over-constrained (no zero-energy embedding), under-constrained (zero
/// energy but a continuous flex) or well-constrained.
pub fn classify_pattern(p: &SmockingPattern, params: &EmbedParams) -> Result<ConstraintReport> {
    let g = extract(p)?;
    let n = g.num_underlay;
    let bounds = all_pair_bounds(p, &g).view((0, 0), (n, n)).into_owned();
    let under_edges: Vec<[usize; 2]> = g.underlay_edges().map(|e| [e.a, e.b]).collect();
    let pruned = prune_constraints(&bounds, &under_edges);

    let mut reduced = g.clone();
    reduced.edges.retain(|e| e.class != EdgeClass::Underlay || pruned.retained.contains(&[e.a, e.b]));
    let sol = embed_underlay_from(&reduced, &pair_caps(p, &g), &underlay_init(p, &g), params)?;
    let rank = rigidity_rank(&sol.xy, &pruned.retained);
    let rigid_dofs = match n {
        0 | 1 => 0,
        _ => 2 * n - 3,
    };
    let flex = rigid_dofs.saturating_sub(rank);
    let classification = if !sol.report.converged() {
        Classification::Inconclusive
    } else if sol.energy > ZERO_RESIDUAL {
        Classification::Over
    } else if !pruned.pruned.is_empty() && flex > 0 {
        Classification::Under
    } else {
        Classification::Well
    };
    let dof_note = match flex {
        0 => "underlay is rigid up to rigid motion".to_string(),
        k => format!("underlay nodes keep {k} continuous degrees of freedom"),
    };
    Ok(ConstraintReport {
        classification,
        slack_pairs: pruned.pruned,
        residual: sol.energy,
        flex_dofs: flex,
        dof_note,
    })
}

/// Squared residual of every smocked-graph edge, split evenly between its
/// endpoints and spread over the pattern vertices of each node.
pub fn energy_distribution(p: &SmockingPattern, g: &SmockedGraph, solution: &EmbeddingSolution) -> Vec<f64> {
    let pos = solution.node_positions();
    let mut node = vec![0.0; g.num_nodes()];
    for e in g.edges.iter().filter(|e| e.class != EdgeClass::Degenerated) {
        let d = (0..3).map(|k| (pos[e.a][k] - pos[e.b][k]).powi(2)).sum::<f64>().sqrt();
        let r = (d - e.bound).powi(2);
        node[e.a] += r;
        node[e.b] += r;
    }
    let mut size = vec![0usize; g.num_nodes()];
    for &n in &g.vertex_node {
        size[n] += 1;
    }
    (0..p.vertices.len())
        .map(|v| {
            let n = g.vertex_node[v];
            node[n] / size[n] as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shrinkage {
    pub ratio_x: f64,
    pub ratio_y: f64,
    pub area_ratio: f64,
}

/// Bounding-box extents of the design over those of the flat fabric, after
/// rigidly aligning the design onto the fabric.
pub fn shrinkage(design: &SmockedDesign, fine: &FinePattern) -> Shrinkage {
    let rest: Vec<Point3> = fine.vertices.iter().map(|q| [q[0], q[1], 0.0]).collect();
    let aligned = align_to(&design.fine_positions, &rest);
    let extent = |pts: &[Point3], k: usize| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q[k]), hi.max(q[k])));
        hi - lo
    };
    let ratio = |k: usize| {
        let r = extent(&rest, k);
        if r > 0.0 {
            extent(&aligned, k) / r
        } else {
            1.0
        }
    };
    let (ratio_x, ratio_y) = (ratio(0), ratio(1));
    Shrinkage { ratio_x, ratio_y, area_ratio: ratio_x * ratio_y }
}

/// Rigid motion of `src` that best matches `dst` in the least-squares sense.
fn align_to(src: &[Point3], dst: &[Point3]) -> Vec<Point3> {
    let n = src.len().max(1) as f64;
    let centroid = |pts: &[Point3]| pts.iter().fold(Vector3::zeros(), |a, q| a + Vector3::from(*q)) / n;
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (Vector3::from(*s) - cs) * (Vector3::from(*d) - cd).transpose();
    }
    let r = best_rotation(&cov);
    src.iter().map(|s| (r * (Vector3::from(*s) - cs) + cd).into()).collect()
}

/// Interpolates a per-pattern-vertex field onto the fine mesh.
pub fn fine_field(fine: &FinePattern, coarse: &[f64]) -> Vec<f64> {
    fine.stencils.iter().map(|st| st.iter().map(|&(v, w)| w * coarse[v]).sum()).collect()
}

/// Residual energy per fine vertex, when the run has an embedding and a
/// fine mesh.
pub fn energy_field(p: &SmockingPattern, run: &PipelineRun) -> Result<Option<Vec<f64>>> {
    let (Some(sol), Some(fine)) = (&run.embedding, &run.fine) else { return Ok(None) };
    let g = extract(p)?;
    Ok(Some(fine_field(fine, &energy_distribution(p, &g, sol))))
}

/// Energies, convergence flags and shape statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage: Stage,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub underlay_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pleat_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pleat_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arap_energy: Option<f64>,
    pub warnings: Vec<String>,
    pub report: ConstraintReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrinkage: Option<Shrinkage>,
}

pub fn diagnostics(p: &SmockingPattern, run: &PipelineRun) -> Result<Diagnostics> {
    let (underlay_energy, pleat) = match (&run.embedding, &run.underlay) {
        (Some(e), _) => (Some(e.underlay_energy), Some((e.pleat_energy, e.pleat_residual))),
        (None, Some(u)) => (Some(u.energy), None),
        (None, None) => (None, None),
    };
    let shrinkage = match (&run.design, &run.fine) {
        (Some(d), Some(f)) => Some(shrinkage(d, f)),
        _ => None,
    };
    Ok(Diagnostics {
        stage: run.stage,
        converged: run.converged(),
        underlay_energy,
        pleat_energy: pleat.map(|x| x.0),
        pleat_residual: pleat.map(|x| x.1),
        arap_energy: run.design.as_ref().map(|d| d.arap_energy),
        warnings: run.warnings.clone(),
        report: classify_pattern(p, &run.params.embed)?,
        shrinkage,
    })
}
