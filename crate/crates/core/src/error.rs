use std::fmt;

/// Pipeline stage, used to tag errors raised inside `full_pipeline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Underlay,
    Pleat,
    Arap,
    Merge,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Extract => "extract",
            Stage::Underlay => "underlay",
            Stage::Pleat => "pleat",
            Stage::Arap => "arap",
            Stage::Merge => "merge",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("stitching lines {first} and {second} share vertex {vertex}")]
    LineConflict {
        first: usize,
        second: usize,
        vertex: usize,
    },

    #[error("stitching line {0} not found")]
    LineNotFound(usize),

    #[error(
        "underlay graph has no edges: pattern too fine or underlay disconnected; \
         coarsen the pattern or build its graph with the grid-free builder"
    )]
    EmptyUnderlay,

    #[error("underlay graph is disconnected ({components} components)")]
    DisconnectedUnderlay { components: usize },

    #[error(
        "pleat node {node} (pattern vertex {vertex}) has no incident pleat edge; \
         insert pleat edges with the grid-free builder"
    )]
    IsolatedPleat { node: usize, vertex: usize },

    #[error("degenerate triangulation: {0}")]
    DegenerateTriangulation(String),

    #[error("constraint segments of stitching lines {first} and {second} cross")]
    CrossingSegments { first: usize, second: usize },

    #[error("point {index} at ({x}, {y}) coincides with an existing vertex")]
    CoincidentPoint { index: usize, x: f64, y: f64 },

    #[error("point {index} at ({x}, {y}) lies outside the pattern bounding box")]
    OutsidePattern { index: usize, x: f64, y: f64 },

    #[error("stitched group of line {line} is not coincident (max deviation {deviation:e})")]
    NotCoincident { line: usize, deviation: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("unsupported pattern file version {0}")]
    UnsupportedVersion(u64),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_stage(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with any stage tag stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the user's input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self.root(), Error::Io(_) | Error::LinearSolve(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
