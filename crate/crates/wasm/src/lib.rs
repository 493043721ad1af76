//! Browser bindings: load a fixture, tile it, classify it and simulate it.
//! Patterns cross the boundary as pattern-file JSON text; errors as strings.

use serde::Serialize;
use smocklab_core::analysis::classify_pattern;
use smocklab_core::design::full_pipeline;
use smocklab_core::fixtures;
use smocklab_core::io::{canonical_json, PatternFile};
use smocklab_core::pattern::tile_unit;
use wasm_bindgen::prelude::*;

const FIXTURES: [&str; 7] = ["arrow", "box", "braid", "p1", "p2", "p4", "basket"];

fn parse(json: &str) -> Result<PatternFile, String> {
    PatternFile::parse(json).map_err(|e| e.to_string())
}

/// Names accepted by [`fixture`], comma separated.
#[wasm_bindgen]
pub fn fixture_names() -> String {
    FIXTURES.join(",")
}

/// Pattern-file JSON of a built-in pattern; tileable ones come as a unit cell.
#[wasm_bindgen]
pub fn fixture(name: &str) -> Result<String, String> {
    let p = match name {
        "arrow" => fixtures::arrow_unit(),
        "box" => fixtures::box_unit(),
        "braid" => fixtures::braid_unit(),
        "p1" => fixtures::p1(),
        "p2" => fixtures::p2(),
        "p4" => fixtures::p4(),
        "basket" => fixtures::basket(),
        other => return Err(format!("unknown fixture `{other}`")),
    };
    Ok(PatternFile::from_pattern(&p).to_canonical())
}

/// Repeats the unit cell `x` by `y` times.
#[wasm_bindgen]
pub fn tile(json: &str, x: usize, y: usize, shift: i32) -> Result<String, String> {
    let mut file = parse(json)?;
    file.tiling = None;
    let unit = file.to_pattern().map_err(|e| e.to_string())?;
    let tiled = tile_unit(&unit, x, y, shift as i64).map_err(|e| e.to_string())?;
    let mut out = PatternFile::from_pattern(&tiled);
    out.params = file.params;
    Ok(out.to_canonical())
}

/// Constraint report JSON.
#[wasm_bindgen]
pub fn analyze(json: &str) -> Result<String, String> {
    let file = parse(json)?;
    let p = file.to_pattern().map_err(|e| e.to_string())?;
    let report = classify_pattern(&p, &file.params().embed).map_err(|e| e.to_string())?;
    Ok(canonical_json(&report))
}

#[derive(Serialize)]
struct MeshView {
    converged: bool,
    /// Flat xyz triples of the merged mesh.
    vertices: Vec<f64>,
    /// Flat vertex-index triples.
    faces: Vec<usize>,
    /// Height of every merged vertex.
    heights: Vec<f64>,
    /// Flat xy pairs of the pattern vertices, and index pairs of its lines.
    pattern_vertices: Vec<f64>,
    pattern_lines: Vec<Vec<usize>>,
}

/// Runs the full pipeline and returns the merged mesh as JSON.
#[wasm_bindgen]
pub fn simulate(json: &str) -> Result<String, String> {
    let file = parse(json)?;
    let p = file.to_pattern().map_err(|e| e.to_string())?;
    let run = full_pipeline(&p, &file.params()).map_err(|e| e.to_string())?;
    let design = run.design.as_ref().ok_or("pipeline stopped before the mesh")?;
    let m = &design.merged;
    let mut heights = vec![0.0; m.vertices.len()];
    for (v, &k) in m.fine_to_merged.iter().enumerate().rev() {
        heights[k] = design.height_field[v];
    }
    let view = MeshView {
        converged: run.converged(),
        vertices: m.vertices.iter().flatten().copied().collect(),
        faces: m.faces.iter().flatten().copied().collect(),
        heights,
        pattern_vertices: p.vertices.iter().flatten().copied().collect(),
        pattern_lines: p.lines.iter().map(|l| l.vertex_ids.clone()).collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}
