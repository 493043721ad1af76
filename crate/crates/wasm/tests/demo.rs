use smocklab_core::design::full_pipeline;
use smocklab_core::fixtures;
use smocklab_core::io::PatternFile;
use smocklab_wasm::{analyze, fixture, fixture_names, simulate, tile};

#[test]
fn every_fixture_loads() {
    for name in fixture_names().split(',') {
        let text = fixture(name).unwrap();
        PatternFile::parse(&text).unwrap();
    }
    assert!(fixture("nope").unwrap_err().contains("nope"));
}

#[test]
fn tiling_the_unit_matches_the_library_pattern() {
    let tiled = tile(&fixture("braid").unwrap(), 3, 3, 0).unwrap();
    assert_eq!(tiled, PatternFile::from_pattern(&fixtures::braid()).to_canonical());
}

#[test]
fn analyze_returns_report_json() {
    let report: serde_json::Value = serde_json::from_str(&analyze(&fixture("p2").unwrap()).unwrap()).unwrap();
    assert_eq!(report["classification"], "under");
    assert!(analyze("{}").unwrap_err().contains("/version"));
}

#[test]
fn simulate_returns_the_merged_mesh() {
    let view: serde_json::Value = serde_json::from_str(&simulate(&fixture("braid").unwrap()).unwrap()).unwrap();
    let run = full_pipeline(&fixtures::braid_unit(), &Default::default()).unwrap();
    let merged = &run.design.unwrap().merged;
    assert_eq!(view["converged"], true);
    assert_eq!(view["vertices"].as_array().unwrap().len(), 3 * merged.vertices.len());
    assert_eq!(view["faces"].as_array().unwrap().len(), 3 * merged.faces.len());
    assert_eq!(view["heights"].as_array().unwrap().len(), merged.vertices.len());
}
