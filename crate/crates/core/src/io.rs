//! Pattern files, mesh export and solver traces.
//!
//! A pattern file is a JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "grid": {"kind": "square", "cols": 6, "rows": 2, "spacing": 1.0},
//!   "lines": [[7, 15], [8, 2]],
//!   "unit_cell": {"min": [0, 0], "max": [6, 2]},
//!   "tiling": {"reps": [3, 2], "shift": 0}
//! }
//! ```
//!
//! Lines are vertex-index lists on grid patterns and coordinate lists on
//! grid-free ones (`"grid": {"kind": "explicit"}` without `vertices`).
//! Explicit patterns with index lines list their own `vertices` and `edges`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arap::Point3;
use crate::design::{PipelineParams, PipelineRun, SmockedDesign};
use crate::error::{Error, Result};
use crate::gridfree::{build_gridfree, GridFreeInput, PleatSampling};
use crate::pattern::{build_grid, tile_unit, Deformation, GridKind, GridSpec, Point2, SmockingPattern, StitchingLine, UnitCell};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub kind: GridKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deformation: Option<Deformation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinePoint {
    Index(usize),
    Coord(Point2),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tiling {
    pub reps: [usize; 2],
    #[serde(default)]
    pub shift: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternFile {
    pub version: u64,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    pub lines: Vec<Vec<LinePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_cell: Option<UnitCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiling: Option<Tiling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pleat_sampling: Option<PleatSampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PipelineParams>,
}

/// What a pattern file describes once resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternSource {
    Grid(SmockingPattern),
    GridFree(GridFreeInput),
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { pointer: pointer.into(), message: message.into() }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => write!(out, "/{index}").unwrap(),
            Segment::Map { key } => write!(out, "/{}", escape(key)).unwrap(),
            Segment::Enum { variant } => write!(out, "/{}", escape(variant)).unwrap(),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl PatternFile {
    pub fn parse(text: &str) -> Result<PatternFile> {
        let value: Value = serde_json::from_str(text).map_err(|e| schema("/", format!("not valid JSON: {e}")))?;
        PatternFile::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<PatternFile> {
        let Value::Object(map) = &value else {
            return Err(schema("/", "expected a JSON object"));
        };
        match map.get("version") {
            None => return Err(schema("/version", "missing field `version`")),
            Some(v) => match v.as_u64() {
                Some(FORMAT_VERSION) => {}
                Some(other) => return Err(Error::UnsupportedVersion(other)),
                None => return Err(schema("/version", "expected an unsigned integer")),
            },
        }
        let file: PatternFile =
            serde_path_to_error::deserialize(value).map_err(|e| schema(pointer_of(e.path()), e.inner().to_string()))?;
        file.source()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<PatternFile> {
        PatternFile::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: sorted keys, shortest round-trip floats, trailing newline.
    pub fn to_canonical(&self) -> String {
        canonical_json(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical())?;
        Ok(())
    }

    pub fn from_pattern(p: &SmockingPattern) -> PatternFile {
        let explicit = p.grid.kind == GridKind::Explicit;
        PatternFile {
            version: FORMAT_VERSION,
            grid: if explicit {
                GridSection { kind: GridKind::Explicit, cols: None, rows: None, spacing: None, deformation: None }
            } else {
                GridSection {
                    kind: p.grid.kind,
                    cols: Some(p.grid.cols),
                    rows: Some(p.grid.rows),
                    spacing: Some(p.grid.spacing),
                    deformation: p.grid.deformation,
                }
            },
            vertices: explicit.then(|| p.vertices.clone()),
            edges: explicit.then(|| p.edges.clone()),
            lines: p.lines.iter().map(|l| l.vertex_ids.iter().map(|&v| LinePoint::Index(v)).collect()).collect(),
            unit_cell: p.unit_cell,
            tiling: None,
            pleat_sampling: None,
            params: None,
        }
    }

    pub fn from_gridfree(input: &GridFreeInput) -> PatternFile {
        PatternFile {
            version: FORMAT_VERSION,
            grid: GridSection { kind: GridKind::Explicit, cols: None, rows: None, spacing: None, deformation: None },
            vertices: None,
            edges: None,
            lines: input.lines.iter().map(|l| l.iter().map(|&q| LinePoint::Coord(q)).collect()).collect(),
            unit_cell: None,
            tiling: None,
            pleat_sampling: Some(input.pleat_sampling.clone()),
            params: None,
        }
    }

    pub fn with_params(mut self, params: PipelineParams) -> Self {
        self.params = Some(params);
        self
    }

    fn coordinate_lines(&self) -> Result<bool> {
        let mut kind = None;
        for (k, line) in self.lines.iter().enumerate() {
            for (i, q) in line.iter().enumerate() {
                let coord = matches!(q, LinePoint::Coord(_));
                match kind {
                    None => kind = Some(coord),
                    Some(c) if c != coord => {
                        return Err(schema(format!("/lines/{k}/{i}"), "lines mix vertex indices and coordinates"))
                    }
                    _ => {}
                }
            }
        }
        Ok(kind.unwrap_or(false))
    }

    fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        if g.kind == GridKind::Explicit {
            return Ok(GridSpec::explicit());
        }
        let cols = g.cols.ok_or_else(|| schema("/grid", "missing field `cols`"))?;
        let rows = g.rows.ok_or_else(|| schema("/grid", "missing field `rows`"))?;
        let spacing = g.spacing.unwrap_or(1.0);
        let spec = GridSpec { kind: g.kind, cols, rows, spacing, deformation: g.deformation };
        spec.validate().map_err(|e| schema("/grid", e.to_string()))?;
        Ok(spec)
    }

    /// Resolves the file into a grid pattern or a grid-free input.
    pub fn source(&self) -> Result<PatternSource> {
        let spec = self.grid_spec()?;
        if self.coordinate_lines()? {
            if spec.kind != GridKind::Explicit {
                return Err(schema("/lines", "coordinate lines need an explicit grid"));
            }
            for (field, present) in [("vertices", self.vertices.is_some()), ("edges", self.edges.is_some()), ("tiling", self.tiling.is_some())] {
                if present {
                    return Err(schema(format!("/{field}"), "not allowed with coordinate lines"));
                }
            }
            let lines = self
                .lines
                .iter()
                .map(|l| l.iter().map(|q| if let LinePoint::Coord(c) = q { *c } else { unreachable!() }).collect())
                .collect();
            return Ok(PatternSource::GridFree(GridFreeInput {
                lines,
                pleat_sampling: self.pleat_sampling.clone().unwrap_or_default(),
            }));
        }
        if self.pleat_sampling.is_some() {
            return Err(schema("/pleat_sampling", "only grid-free files sample pleats"));
        }

        let mut p = if spec.kind == GridKind::Explicit {
            let vertices = self.vertices.clone().ok_or_else(|| schema("/vertices", "explicit grids list their vertices"))?;
            let edges = self.edges.clone().ok_or_else(|| schema("/edges", "explicit grids list their edges"))?;
            if vertices.is_empty() {
                return Err(schema("/vertices", "pattern has no vertices"));
            }
            for (i, [a, b]) in edges.iter().enumerate() {
                for (j, v) in [a, b].into_iter().enumerate() {
                    if *v >= vertices.len() {
                        return Err(schema(format!("/edges/{i}/{j}"), format!("vertex {v} out of range (pattern has {})", vertices.len())));
                    }
                }
            }
            SmockingPattern::explicit(vertices, edges, Vec::new()).map_err(|e| schema("/edges", e.to_string()))?
        } else {
            for field in ["vertices", "edges"] {
                let present = if field == "vertices" { self.vertices.is_some() } else { self.edges.is_some() };
                if present {
                    return Err(schema(format!("/{field}"), "only explicit grids list vertices and edges"));
                }
            }
            build_grid(&spec)?
        };

        let n = p.vertices.len();
        let mut lines = Vec::with_capacity(self.lines.len());
        for (k, line) in self.lines.iter().enumerate() {
            let mut ids = Vec::with_capacity(line.len());
            for (i, q) in line.iter().enumerate() {
                let LinePoint::Index(v) = *q else { unreachable!() };
                if v >= n {
                    return Err(schema(format!("/lines/{k}/{i}"), format!("vertex {v} out of range (pattern has {n})")));
                }
                ids.push(v);
            }
            lines.push(StitchingLine::new(ids));
        }
        p.lines = lines;
        p.unit_cell = self.unit_cell;
        p.validate()?;

        if let Some(t) = self.tiling {
            if self.unit_cell.is_none() {
                return Err(schema("/tiling", "tiling needs a unit_cell"));
            }
            p = tile_unit(&p, t.reps[0], t.reps[1], t.shift)?;
        }
        Ok(PatternSource::Grid(p))
    }

    /// The pattern the pipeline runs on; grid-free files are built here.
    pub fn to_pattern(&self) -> Result<SmockingPattern> {
        match self.source()? {
            PatternSource::Grid(p) => Ok(p),
            PatternSource::GridFree(input) => build_gridfree(&input),
        }
    }

    pub fn params(&self) -> PipelineParams {
        self.params.clone().unwrap_or_default()
    }
}

/// Pretty JSON with keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&sort_keys(v)).expect("serializable value");
    s.push('\n');
    s
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeshVariant {
    Fine,
    #[default]
    Merged,
}

impl std::str::FromStr for MeshVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(MeshVariant::Fine),
            "merged" => Ok(MeshVariant::Merged),
            other => Err(Error::InvalidSpec(format!("unknown mesh variant `{other}`"))),
        }
    }
}

/// Linear blue-to-red ramp over the range of `values`.
pub fn field_colors(values: &[f64]) -> Vec<[f64; 3]> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            [t, 0.0, 1.0 - t]
        })
        .collect()
}

/// Wavefront OBJ text, 1-indexed faces, optional per-vertex RGB.
pub fn obj_string(vertices: &[Point3], faces: &[[usize; 3]], colors: Option<&[[f64; 3]]>) -> String {
    let mut out = String::with_capacity(32 * (vertices.len() + faces.len()));
    for (i, v) in vertices.iter().enumerate() {
        write!(out, "v {} {} {}", v[0], v[1], v[2]).unwrap();
        if let Some(c) = colors {
            write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]).unwrap();
        }
        out.push('\n');
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

/// OBJ of a design; `field` holds one scalar per fine vertex and is shown as
/// vertex colour.
pub fn design_obj(design: &SmockedDesign, variant: MeshVariant, field: Option<&[f64]>) -> String {
    match variant {
        MeshVariant::Fine => {
            let colors = field.map(field_colors);
            obj_string(&design.fine_positions, &design.faces, colors.as_deref())
        }
        MeshVariant::Merged => {
            let m = &design.merged;
            let colors = field.map(|f| {
                let mut per = vec![0.0; m.vertices.len()];
                let mut seen = vec![false; m.vertices.len()];
                for (v, &k) in m.fine_to_merged.iter().enumerate() {
                    if !seen[k] {
                        seen[k] = true;
                        per[k] = f[v];
                    }
                }
                field_colors(&per)
            });
            obj_string(&m.vertices, &m.faces, colors.as_deref())
        }
    }
}

pub fn export_obj(design: &SmockedDesign, path: &Path, variant: MeshVariant, field: Option<&[f64]>) -> Result<()> {
    std::fs::write(path, design_obj(design, variant, field))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColorField {
    #[default]
    None,
    Height,
    Energy,
}

impl std::str::FromStr for ColorField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ColorField::None),
            "height" => Ok(ColorField::Height),
            "energy" => Ok(ColorField::Energy),
            other => Err(Error::InvalidSpec(format!("unknown colour field `{other}`"))),
        }
    }
}

/// OBJ text of a finished run, or `None` when the run stopped before ARAP.
pub fn run_obj(p: &SmockingPattern, run: &PipelineRun, variant: MeshVariant, color: ColorField) -> Result<Option<String>> {
    let Some(design) = &run.design else { return Ok(None) };
    let field = match color {
        ColorField::None => None,
        ColorField::Height => Some(design.height_field.clone()),
        ColorField::Energy => crate::analysis::energy_field(p, run)?,
    };
    Ok(Some(design_obj(design, variant, field.as_deref())))
}

/// A pipeline run bundled with the pattern file it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub pattern: PatternFile,
    pub run: PipelineRun,
}

impl RunArtifact {
    pub fn load(path: &Path) -> Result<RunArtifact> {
        let text = std::fs::read_to_string(path)?;
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| schema(pointer_of(e.path()), e.inner().to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, canonical_json(self))?;
        Ok(())
    }
}

/// One JSON object per solver iteration, embedding stages first, then ARAP.
pub fn trace_jsonl(run: &PipelineRun) -> String {
    let mut out = String::new();
    let records = match (&run.embedding, &run.underlay) {
        (Some(e), _) => e.trace.as_slice(),
        (None, Some(u)) => u.trace.as_slice(),
        (None, None) => &[],
    };
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    if let Some(d) = &run.design {
        for (iteration, energy) in d.arap_energies.iter().enumerate() {
            let line = serde_json::json!({"stage": "arap", "iteration": iteration, "energy": energy});
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    out
}
