//! The full pipeline from pattern to smocked design, with resumable stages.

use serde::{Deserialize, Serialize};

use crate::arap::{arap_pinned, ArapConfig, Point3};
use crate::embed::{embed_simultaneous, pleat_stage, underlay_stage, EmbedParams, EmbeddingSolution, UnderlayStage};
use crate::error::{Error, Result, Stage};
use crate::graph::{extract, SmockedGraph};
use crate::pattern::{refine, FinePattern, Point2, SmockingPattern, DEFAULT_SUBDIVISION};

/// Tolerance for stitched vertices to count as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    TwoStage,
    Simultaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub embed: EmbedParams,
    pub arap: ArapConfig,
    pub subdivision: usize,
    pub mode: SolverMode,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            embed: EmbedParams::default(),
            arap: ArapConfig::default(),
            subdivision: DEFAULT_SUBDIVISION,
            mode: SolverMode::TwoStage,
        }
    }
}

/// Non-manifold mesh with every stitched group fused into one vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    /// Merged index of every fine vertex.
    pub fine_to_merged: Vec<usize>,
    pub dropped_faces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmockedDesign {
    pub fine_positions: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    pub merged: MergedMesh,
    pub arap_energy: f64,
    pub arap_iterations: usize,
    pub arap_converged: bool,
    /// ARAP energy after every outer iteration, starting value first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arap_energies: Vec<f64>,
    /// Height of every fine vertex above the underlay plane.
    pub height_field: Vec<f64>,
}

/// Everything a pipeline run produced up to the stage it stopped at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub stage: Stage,
    pub params: PipelineParams,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub underlay: Option<UnderlayStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine: Option<FinePattern>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<SmockedDesign>,
}

impl PipelineRun {
    /// False when any solver that ran stopped without converging.
    pub fn converged(&self) -> bool {
        let under = self.underlay.as_ref().is_none_or(|u| u.converged);
        let embed = self.embedding.as_ref().is_none_or(|e| e.converged());
        let arap = self.design.as_ref().is_none_or(|d| d.arap_converged);
        under && embed && arap
    }
}

/// Fuses every stitched group into its first vertex and drops faces that
/// collapse.
pub fn merge_stitched(positions: &[Point3], faces: &[[usize; 3]], groups: &[Vec<usize>]) -> Result<MergedMesh> {
    let n = positions.len();
    let mut rep: Vec<usize> = (0..n).collect();
    for (line, g) in groups.iter().enumerate() {
        let Some(&first) = g.first() else { continue };
        let mut deviation: f64 = 0.0;
        for &v in g {
            let d = (0..3).map(|k| (positions[v][k] - positions[first][k]).powi(2)).sum::<f64>().sqrt();
            deviation = deviation.max(d);
            rep[v] = first;
        }
        if deviation > COINCIDENCE_TOL {
            return Err(Error::NotCoincident { line, deviation });
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut vertices = Vec::new();
    for v in 0..n {
        if rep[v] == v {
            index[v] = vertices.len();
            vertices.push(positions[v]);
        }
    }
    let fine_to_merged: Vec<usize> = (0..n).map(|v| index[rep[v]]).collect();
    let mut out = Vec::with_capacity(faces.len());
    for f in faces {
        let m = f.map(|v| fine_to_merged[v]);
        if m[0] != m[1] && m[1] != m[2] && m[0] != m[2] {
            out.push(m);
        }
    }
    Ok(MergedMesh { vertices, dropped_faces: faces.len() - out.len(), faces: out, fine_to_merged })
}

/// Height of every fine vertex above the mean height of the stitched ones.
pub fn height_map(positions: &[Point3], fine: &FinePattern, p: &SmockingPattern) -> Vec<f64> {
    let stitched: Vec<usize> = fine.stitched_groups(p).into_iter().flatten().collect();
    let base = if stitched.is_empty() {
        0.0
    } else {
        stitched.iter().map(|&v| positions[v][2]).sum::<f64>() / stitched.len() as f64
    };
    positions.iter().map(|q| q[2] - base).collect()
}

/// Rest position and height of every fine vertex, for 2D display.
pub fn height_samples(design: &SmockedDesign, fine: &FinePattern) -> Vec<(Point2, f64)> {
    fine.vertices.iter().copied().zip(design.height_field.iter().copied()).collect()
}

fn embed(p: &SmockingPattern, g: &SmockedGraph, params: &PipelineParams, run: &mut PipelineRun, until: Stage) -> Result<()> {
    if params.mode == SolverMode::Simultaneous {
        if run.embedding.is_none() {
            run.embedding = Some(embed_simultaneous(p, g, &params.embed).map_err(|e| e.at_stage(Stage::Underlay))?);
        }
        return Ok(());
    }
    if run.underlay.is_none() {
        run.underlay = Some(underlay_stage(p, g, &params.embed)?);
    }
    if until == Stage::Underlay {
        return Ok(());
    }
    if run.embedding.is_none() {
        let under = run.underlay.as_ref().expect("underlay stage ran");
        run.embedding = Some(pleat_stage(p, g, under, &params.embed)?);
    }
    Ok(())
}

/// Runs the pipeline up to and including `until`, reusing whatever stages
/// `resume` already holds.
pub fn run_pipeline(p: &SmockingPattern, params: &PipelineParams, until: Stage, resume: Option<PipelineRun>) -> Result<PipelineRun> {
    params.embed.validate()?;
    params.arap.validate()?;
    let g = extract(p).map_err(|e| e.at_stage(Stage::Extract))?;
    let mut run = resume.unwrap_or(PipelineRun {
        stage: Stage::Extract,
        params: params.clone(),
        warnings: Vec::new(),
        underlay: None,
        embedding: None,
        fine: None,
        design: None,
    });
    if run.params.embed != params.embed || run.params.mode != params.mode {
        run.underlay = None;
        run.embedding = None;
    }
    if let Some(u) = &run.underlay {
        if u.xy.len() != g.num_underlay {
            return Err(Error::InvalidPattern("resumed run does not match the pattern".into()).at_stage(Stage::Underlay));
        }
    }
    run.design = None;
    run.fine = None;
    run.params = params.clone();
    run.warnings = g.warnings.clone();
    if until == Stage::Extract {
        return Ok(run);
    }
    embed(p, &g, params, &mut run, until)?;
    run.stage = if run.embedding.is_some() { Stage::Pleat } else { Stage::Underlay };
    if matches!(until, Stage::Underlay | Stage::Pleat) {
        return Ok(run);
    }

    let embedding = run.embedding.as_ref().expect("embedding ran");
    let fine = refine(p, params.subdivision).map_err(|e| e.at_stage(Stage::Arap))?;
    let nodes = embedding.node_positions();
    let pins: Vec<(usize, Point3)> = (0..p.vertices.len()).map(|v| (v, nodes[g.vertex_node[v]])).collect();
    let arap = arap_pinned(&fine, &pins, &params.arap).map_err(|e| e.at_stage(Stage::Arap))?;
    if !arap.converged {
        log::warn!("ARAP stopped after {} iterations without converging", arap.iterations);
    }
    let merged = merge_stitched(&arap.positions, &fine.faces, &fine.stitched_groups(p)).map_err(|e| e.at_stage(Stage::Merge))?;
    let height_field = height_map(&arap.positions, &fine, p);
    run.design = Some(SmockedDesign {
        fine_positions: arap.positions,
        faces: fine.faces.clone(),
        merged,
        arap_energy: arap.energy,
        arap_iterations: arap.iterations,
        arap_converged: arap.converged,
        arap_energies: arap.energies,
        height_field,
    });
    run.fine = Some(fine);
    run.stage = Stage::Merge;
    Ok(run)
}

/// Complete run: extract, embed, refine, pinned ARAP and merge.
pub fn full_pipeline(p: &SmockingPattern, params: &PipelineParams) -> Result<PipelineRun> {
    run_pipeline(p, params, Stage::Merge, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_fuses_coincident_pair() {
        let pos = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let faces = [[0, 1, 3], [1, 2, 3]];
        let m = merge_stitched(&pos, &faces, &[vec![1, 2]]).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.dropped_faces, 1);
    }

    #[test]
    fn merge_without_groups_is_identity() {
        let pos = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let m = merge_stitched(&pos, &[[0, 1, 2]], &[]).unwrap();
        assert_eq!(m.vertices, pos.to_vec());
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn merge_rejects_separated_group() {
        let pos = [[0.0; 3], [1.0, 0.0, 0.0]];
        let err = merge_stitched(&pos, &[], &[vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::NotCoincident { line: 0, .. }));
    }
}
