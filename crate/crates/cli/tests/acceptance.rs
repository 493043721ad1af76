//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
//! Run with `cargo test -p smocklab-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smocklab_core::analysis::{classify_pattern, Classification};
use smocklab_core::arap::{arap_energy, arap_pinned, ArapConfig, Point3, WeightScheme};
use smocklab_core::design::{full_pipeline, PipelineRun};
use smocklab_core::embed::{embed_pleats_from, underlay_stage, EmbedParams, SpringObjective};
use smocklab_core::fixtures;
use smocklab_core::graph::{all_pair_bounds, extract, EdgeClass, NodeSource, SmockedEdge, SmockedGraph};
use smocklab_core::pattern::{build_grid, refine, GridSpec, SmockingPattern};
use smocklab_core::solver::Objective;
use smocklab_core::triangulate::delaunay_edges;
use smocklab_oracles as oracle;
use tower::ServiceExt;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn showcase() -> Vec<(&'static str, SmockingPattern)> {
    vec![("arrow", fixtures::arrow()), ("box", fixtures::box_pattern()), ("braid", fixtures::braid())]
}

fn showcase_runs() -> Vec<(&'static str, SmockingPattern, PipelineRun)> {
    showcase()
        .into_iter()
        .map(|(name, p)| {
            let run = full_pipeline(&p, &Default::default()).expect("showcase pipeline");
            (name, p, run)
        })
        .collect()
}

fn underlay_convergence() -> Check {
    let mut notes = Vec::new();
    for (name, p) in showcase() {
        let g = extract(&p).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let u = underlay_stage(&p, &g, &EmbedParams::default()).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        ensure(u.energy < 1e-8 && took < Duration::from_secs(30), || format!("{name}: energy {:e} in {took:?}", u.energy))?;
        notes.push(format!("{name} {:.1e} in {:.2}s", u.energy, took.as_secs_f64()));
    }
    Ok(notes.join(", "))
}

fn stitch_satisfaction(runs: &[(&str, SmockingPattern, PipelineRun)]) -> Check {
    for (name, p, run) in runs {
        let (design, fine) = (run.design.as_ref().unwrap(), run.fine.as_ref().unwrap());
        for group in fine.stitched_groups(p) {
            let first = design.fine_positions[group[0]];
            ensure(group.iter().all(|&v| design.fine_positions[v] == first), || format!("{name}: group {group:?} not coincident"))?;
        }
        let want = fine.num_vertices() - p.lines.iter().map(|l| l.vertex_ids.len() - 1).sum::<usize>();
        ensure(design.merged.vertices.len() == want, || format!("{name}: {} merged vertices, want {want}", design.merged.vertices.len()))?;
    }
    Ok("groups coincide bitwise, merged counts match".into())
}

fn distance_bounds(runs: &[(&str, SmockingPattern, PipelineRun)]) -> Check {
    let mut worst: f64 = 0.0;
    for (name, p, run) in runs {
        let g = extract(p).unwrap();
        let x = run.embedding.as_ref().unwrap().node_positions();
        for e in &g.edges {
            let d = dist3(x[e.a], x[e.b]);
            ensure(d <= e.bound * (1.0 + 1e-3), || format!("{name}: edge ({}, {}) length {d} over bound {}", e.a, e.b, e.bound))?;
            worst = worst.max(d / e.bound - 1.0);
        }
    }
    Ok(format!("worst relative excess {worst:.1e}"))
}

fn taxonomy() -> Check {
    let params = EmbedParams::default();
    let p1 = classify_pattern(&fixtures::p1(), &params).map_err(|e| e.to_string())?;
    ensure(p1.classification == Classification::Well, || format!("P1 is {:?}", p1.classification))?;
    let p2 = classify_pattern(&fixtures::p2(), &params).map_err(|e| e.to_string())?;
    ensure(p2.classification == Classification::Under, || format!("P2 is {:?}", p2.classification))?;
    ensure(p2.slack_pairs.len() == 1, || format!("P2 slack pairs {:?}", p2.slack_pairs))?;
    let pair = p2.slack_pairs[0];
    ensure((pair.a, pair.b) == (0, 2) && (pair.slack - (5f64.sqrt() - 2.0)).abs() < 1e-12, || format!("P2 pair {pair:?}"))?;
    let p4 = classify_pattern(&fixtures::p4(), &params).map_err(|e| e.to_string())?;
    ensure(p4.classification == Classification::Over && p4.residual > 1e-8, || format!("P4 is {:?} ({:e})", p4.classification, p4.residual))?;
    Ok(format!("P1 well, P2 under (slack {:.15}), P4 over ({:.2e})", pair.slack, p4.residual))
}

fn random_objective(rng: &mut ChaCha8Rng) -> (SpringObjective, Vec<f64>) {
    let n = rng.gen_range(3..7);
    let x: Vec<f64> = (0..3 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut springs = Vec::new();
    let mut caps = Vec::new();
    for &(a, b) in &all {
        if rng.gen_bool(0.5) {
            springs.push((a, b, rng.gen_range(0.3..2.0)));
        }
        if rng.gen_bool(0.5) {
            caps.push((a, b, rng.gen_range(0.2..1.5)));
        }
    }
    let obj = SpringObjective::new(3, x.clone(), (0..3 * n).collect(), springs)
        .with_caps(caps, rng.gen_range(1.0..100.0))
        .with_spread(all, rng.gen_range(0.0..0.1))
        .with_height((0..n).collect(), rng.gen_range(0.0..0.1));
    (obj, x)
}

fn solver_correctness(runs: &[(&str, SmockingPattern, PipelineRun)]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let (obj, x) = random_objective(&mut rng);
        let mut g = vec![0.0; x.len()];
        obj.gradient(&x, &mut g);
        let fd = oracle::fd_gradient(&|y| obj.value(y), &x);
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&err) / norm(&fd).max(1e-12);
        ensure(rel < 1e-5, || format!("instance {k}: gradient relative error {rel:e}"))?;
        worst = worst.max(rel);
    }

    for (name, _, run) in runs {
        let e = run.embedding.as_ref().unwrap();
        let mut traces: Vec<Vec<f64>> = Vec::new();
        for stage in [smocklab_core::Stage::Underlay, smocklab_core::Stage::Pleat] {
            traces.push(e.trace.iter().filter(|r| r.stage == stage).map(|r| r.energy).collect());
        }
        traces.push(run.design.as_ref().unwrap().arap_energies.clone());
        for (t, label) in traces.iter().zip(["underlay", "pleat", "ARAP"]) {
            let rise = t.windows(2).position(|w| w[1] > w[0] + 1e-12 * w[0].abs() + 1e-15);
            ensure(rise.is_none(), || format!("{name}: {label} energy rises at step {}: {:?}", rise.unwrap(), &t[rise.unwrap()..]))?;
        }
    }

    let p = build_grid(&GridSpec::square(3, 3, 1.0)).unwrap();
    let fine = refine(&p, 2).unwrap();
    let rest: Vec<Point3> = fine.vertices.iter().map(|q| [q[0], q[1], 0.0]).collect();
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let rigid = |q: Point3| [c * q[0] - s * q[2] + 0.5, q[1] - 2.0, s * q[0] + c * q[2] + 1.5];
    for (label, map) in [("identity", &(|q: Point3| q) as &dyn Fn(Point3) -> Point3), ("rigid motion", &rigid)] {
        let pins: Vec<(usize, Point3)> = [0usize, 3, 12, 15].iter().map(|&v| (v, map([p.vertices[v][0], p.vertices[v][1], 0.0]))).collect();
        let r = arap_pinned(&fine, &pins, &ArapConfig::default()).map_err(|e| e.to_string())?;
        let dev = rest.iter().zip(&r.positions).map(|(&q, &x)| dist3(map(q), x)).fold(0.0, f64::max);
        ensure(dev < 1e-10, || format!("ARAP {label}: deviation {dev:e}"))?;
    }
    Ok(format!("worst gradient error {worst:.1e} over 20 instances, traces monotone, ARAP rigid cases exact"))
}

fn oracle_equivalence() -> Check {
    let mut bound_checks = 0;
    for p in [fixtures::p1(), fixtures::p2(), fixtures::p4(), fixtures::single_line()] {
        if p.vertices.len() > 12 {
            continue;
        }
        let g = extract(&p).map_err(|e| e.to_string())?;
        let points = |n: usize| -> Vec<[f64; 2]> {
            match g.nodes[n] {
                NodeSource::Underlay { line } => p.lines[line].vertex_ids.iter().map(|&v| p.vertices[v]).collect(),
                NodeSource::Pleat { vertex } => vec![p.vertices[vertex]],
            }
        };
        let m = all_pair_bounds(&p, &g);
        for a in 0..g.num_nodes() {
            for b in 0..g.num_nodes() {
                let want = if a == b { 0.0 } else { oracle::min_pair_distance(&points(a), &points(b)) };
                ensure(m[(a, b)] == want, || format!("bound ({a}, {b}): {} vs {want}", m[(a, b)]))?;
                bound_checks += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut point_sets = 0;
    while point_sets < 30 {
        let n = rng.gen_range(4..=10);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        if !oracle::in_general_position(&pts, 1e-9) {
            continue;
        }
        let ours: BTreeSet<[usize; 2]> = delaunay_edges(&pts).map_err(|e| e.to_string())?.into_iter().collect();
        ensure(ours == oracle::delaunay_edges_bruteforce(&pts), || format!("triangulation differs on {pts:?}"))?;
        point_sets += 1;
    }

    let p = build_grid(&GridSpec::square(2, 2, 1.0)).unwrap();
    let fine = refine(&p, 1).unwrap();
    let mut worst: f64 = 0.0;
    for (scale, lift) in [(1.0, 0.0), (1.1, 0.2), (1.2, 0.35)] {
        let pins = [(0usize, [0.0, 0.0, 0.0]), (8usize, [2.0 * scale, 2.0 * scale, lift])];
        let cfg = ArapConfig { tol: 1e-14, max_outer_iters: 5000, ..ArapConfig::default() };
        let ours = arap_pinned(&fine, &pins, &cfg).map_err(|e| e.to_string())?.energy;
        let pinned: Vec<(usize, Point3)> = pins.iter().map(|&(v, q)| (fine.coarse_to_fine[v], q)).collect();
        let free: Vec<usize> = (0..fine.vertices.len()).filter(|v| pinned.iter().all(|(f, _)| f != v)).collect();
        let assemble = |x: &[f64]| -> Vec<Point3> {
            let mut pos: Vec<Point3> = fine.vertices.iter().map(|q| [q[0], q[1], 0.0]).collect();
            for &(v, q) in &pinned {
                pos[v] = q;
            }
            for (k, &v) in free.iter().enumerate() {
                pos[v] = [x[3 * k], x[3 * k + 1], x[3 * k + 2]];
            }
            pos
        };
        let energy = |x: &[f64]| arap_energy(&fine, &assemble(x), WeightScheme::Cotangent);
        let x0: Vec<f64> = free.iter().flat_map(|&v| [fine.vertices[v][0], fine.vertices[v][1], 0.0]).collect();
        ensure(x0.len() <= 30, || format!("{} variables", x0.len()))?;
        let fd = energy(&oracle::fd_descent(&energy, &x0, 2000, 1e-9));
        let diff = (ours - fd).abs();
        ensure(diff <= 1e-4 * fd.max(1e-8), || format!("ARAP {ours} vs descent {fd}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("{bound_checks} bounds, {point_sets} triangulations, ARAP within {worst:.1e} of descent"))
}

fn two_anchor_pleat() -> Check {
    let edge = |a, b, class, bound| SmockedEdge { a, b, class, bound };
    let g = SmockedGraph {
        nodes: vec![NodeSource::Underlay { line: 0 }, NodeSource::Underlay { line: 1 }, NodeSource::Pleat { vertex: 0 }],
        edges: vec![edge(0, 1, EdgeClass::Underlay, 2.0), edge(0, 2, EdgeClass::Pleat, 1.5), edge(1, 2, EdgeClass::Pleat, 1.5)],
        vertex_node: Vec::new(),
        num_underlay: 2,
        warnings: Vec::new(),
    };
    let params = EmbedParams { energy_tol: 1e-24, ..EmbedParams::default().unregularized() };
    let r = embed_pleats_from(&g, &[], &[[0.0, 0.0], [2.0, 0.0]], &[[0.7, 0.0, 1.0]], &params).map_err(|e| e.to_string())?;
    let x = r.xyz[0];
    let err = dist3(x, [1.0, 0.0, 1.25f64.sqrt()]);
    ensure(err < 1e-6, || format!("landed at {x:?}"))?;
    Ok(format!("landed within {err:.1e}"))
}

fn regularity(runs: &[(&str, SmockingPattern, PipelineRun)]) -> Check {
    let (_, p, run) = runs.iter().find(|(n, ..)| *n == "box").unwrap();
    let g = extract(p).unwrap();
    let x = run.embedding.as_ref().unwrap().node_positions();
    let period = p.unit_cell.map(|c| c.period()).unwrap_or([3, 3]);
    let mut centres: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
    for (n, source) in g.nodes.iter().enumerate() {
        if let NodeSource::Pleat { vertex } = *source {
            let (c, r) = p.grid_coords(vertex).unwrap();
            let (cell, local) = ((c / period[0], r / period[1]), (c % period[0], r % period[1]));
            if cell.0 < 3 && cell.1 < 3 && local == (period[0] / 2, period[1] / 2) {
                centres.insert(cell, x[n]);
            }
        }
    }
    ensure(centres.len() == 9, || format!("{} cell centres", centres.len()))?;
    let mut worst: f64 = 0.0;
    for step in [(1, 0), (0, 1)] {
        let ts: Vec<[f64; 3]> = centres
            .iter()
            .filter_map(|(&(i, j), &a)| centres.get(&(i + step.0, j + step.1)).map(|&b| [b[0] - a[0], b[1] - a[1], b[2] - a[2]]))
            .collect();
        let mean = [0, 1, 2].map(|k| ts.iter().map(|t| t[k]).sum::<f64>() / ts.len() as f64);
        let size = norm(&mean);
        for t in &ts {
            worst = worst.max(dist3(*t, mean) / size);
        }
    }
    ensure(worst < 0.05, || format!("translation deviation {:.1}% of the cell", 100.0 * worst))?;
    Ok(format!("translation deviation {:.2}% of the cell", 100.0 * worst))
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

async fn service_mesh(pattern: &str) -> Result<Vec<u8>, String> {
    let app = smocklab_service::router(smocklab_service::AppState::new(Default::default()).map_err(|e| e.to_string())?);
    let call = |method: &str, uri: String, body: String| {
        let app = app.clone();
        let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
        async move {
            let res = app.oneshot(req).await.unwrap();
            let status = res.status();
            (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
        }
    };
    let (status, body) = call("POST", "/sessions".into(), pattern.to_string()).await;
    ensure(status == StatusCode::CREATED, || format!("create: {status}"))?;
    let id = serde_json::from_slice::<serde_json::Value>(&body).unwrap()["id"].as_str().unwrap().to_string();
    let (status, _) = call("POST", format!("/sessions/{id}/simulate"), String::new()).await;
    ensure(status == StatusCode::OK, || format!("simulate: {status}"))?;
    let (status, mesh) = call("GET", format!("/sessions/{id}/result/mesh"), String::new()).await;
    ensure(status == StatusCode::OK, || format!("mesh: {status}"))?;
    Ok(mesh)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = fixture_path("braid.json");
    let mut meshes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("braid{k}.obj"));
        let status = Command::new(env!("CARGO_BIN_EXE_smocklab"))
            .arg("simulate")
            .arg(&input)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        ensure(status.success(), || format!("CLI exit {status}"))?;
        meshes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let pattern = std::fs::read_to_string(&input).map_err(|e| e.to_string())?;
    let served = tokio::runtime::Runtime::new().unwrap().block_on(service_mesh(&pattern))?;
    ensure(meshes[0] == meshes[1], || "two CLI runs differ".into())?;
    ensure(meshes[0] == served, || "CLI and service meshes differ".into())?;
    Ok(format!("{} identical OBJ bytes", served.len()))
}

fn main() {
    let runs = showcase_runs();
    let results: Vec<(&str, Check)> = vec![
        ("underlay convergence", underlay_convergence()),
        ("stitch satisfaction", stitch_satisfaction(&runs)),
        ("distance bounds", distance_bounds(&runs)),
        ("taxonomy", taxonomy()),
        ("solver correctness", solver_correctness(&runs)),
        ("oracle equivalence", oracle_equivalence()),
        ("two-anchor pleat", two_anchor_pleat()),
        ("regularity", regularity(&runs)),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(note) => println!("PASS {name}: {note}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
