//! `smocklab`: build, edit, simulate and analyze smocking patterns.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad input, 3 a solver did not
//! converge (outputs are still written).

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use smocklab_core::analysis::{classify_pattern, diagnostics, Classification};
use smocklab_core::design::{run_pipeline, SolverMode};
use smocklab_core::fixtures::line_midpoints;
use smocklab_core::gridfree::insert_pleat_nodes;
use smocklab_core::io::{canonical_json, run_obj, trace_jsonl, ColorField, MeshVariant, PatternFile, RunArtifact};
use smocklab_core::pattern::{build_grid, edit_pattern, tile_unit, Axis, EditOp, GridSpec, Margin, Point2};
use smocklab_core::{Error, Stage};
use smocklab_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "smocklab", version, about = "Smocking pattern design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an empty grid pattern.
    Grid {
        #[arg(long, value_enum, default_value_t = Kind::Square)]
        kind: Kind,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the unit cell of a pattern.
    Tile {
        unit: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"])]
        reps: Vec<usize>,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        shift: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one edit to a pattern.
    Edit {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(subcommand)]
        op: EditCmd,
    },
    /// Run the pipeline and write the mesh, run artifact and optional trace.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        subdivision: Option<usize>,
        #[arg(long)]
        w_embed: Option<f64>,
        #[arg(long)]
        w_height: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Last stage to run.
        #[arg(long, value_enum, default_value_t = StageArg::Arap)]
        stage: StageArg,
        /// Continue from a run artifact of the same pattern.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Run artifact path; defaults to `<out>.run.json`.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Write per-iteration energies to `<out>.trace.jsonl`.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = "merged")]
        variant: MeshVariant,
        #[arg(long, default_value = "none")]
        color: ColorField,
    },
    /// Print the constraint report of a pattern.
    Analyze { input: PathBuf },
    /// Write the mesh of a run artifact.
    Export {
        artifact: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "merged")]
        variant: MeshVariant,
        #[arg(long, default_value = "none")]
        color: ColorField,
    },
    /// Start the HTTP design service.
    Serve {
        #[arg(long, env = "SMOCKLAB_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "SMOCKLAB_BIND", default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Session store directory; sessions live in memory without it.
        #[arg(long, env = "SMOCKLAB_DATA")]
        data: Option<PathBuf>,
        /// Largest node count simulated within the request.
        #[arg(long, env = "SMOCKLAB_SYNC_THRESHOLD", default_value_t = 200)]
        sync_threshold: usize,
        #[arg(long, env = "SMOCKLAB_CORS_ORIGIN")]
        cors_origin: Option<String>,
    },
}

#[derive(Subcommand)]
enum EditCmd {
    /// Stitch the given vertices together.
    AddLine {
        #[arg(required = true, num_args = 2..)]
        vertices: Vec<usize>,
    },
    DeleteLine { index: usize },
    /// Add plain cells around a square grid.
    Margin {
        #[arg(long)]
        all: Option<usize>,
        #[arg(long, default_value_t = 0)]
        left: usize,
        #[arg(long, default_value_t = 0)]
        right: usize,
        #[arg(long, default_value_t = 0)]
        bottom: usize,
        #[arg(long, default_value_t = 0)]
        top: usize,
    },
    /// Place another pattern beside this one.
    Combine {
        other: PathBuf,
        #[arg(long, value_enum, default_value_t = AxisArg::X)]
        axis: AxisArg,
        #[arg(long, default_value_t = 0)]
        gap: usize,
    },
    /// Add pleat vertices at `x,y` points or at every line midpoint.
    InsertPleats {
        #[arg(long = "at", value_parser = parse_point)]
        at: Vec<Point2>,
        #[arg(long)]
        midpoints: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Square,
    Hexagonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    TwoStage,
    Simultaneous,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Underlay,
    Pleat,
    Arap,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected `x,y`")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([p(x)?, p(y)?])
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Io(_) => 1,
            Error::LinearSolve(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    fn input(message: impl fmt::Display) -> Self {
        Failure { code: 2, message: message.to_string() }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SMOCKLAB_LOG", "warn")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Grid { kind, cols, rows, spacing, out } => {
            let spec = match kind {
                Kind::Square => GridSpec::square(cols, rows, spacing),
                Kind::Hexagonal => GridSpec::hexagonal(cols, rows, spacing),
            };
            PatternFile::from_pattern(&build_grid(&spec)?).save(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Tile { unit, reps, shift, out } => {
            let mut file = PatternFile::load(&unit)?;
            file.tiling = None;
            let tiled = tile_unit(&file.to_pattern()?, reps[0], reps[1], shift)?;
            save_like(&file, &tiled, &out)
        }
        Command::Edit { input, out, op } => {
            let file = PatternFile::load(&input)?;
            let p = file.to_pattern()?;
            let edited = match op {
                EditCmd::AddLine { vertices } => edit_pattern(&p, &EditOp::AddLine(vertices))?,
                EditCmd::DeleteLine { index } => edit_pattern(&p, &EditOp::DeleteLine(index))?,
                EditCmd::Margin { all, left, right, bottom, top } => {
                    let m = all.map(Margin::uniform).unwrap_or(Margin { left, right, bottom, top });
                    edit_pattern(&p, &EditOp::AddMargin(m))?
                }
                EditCmd::Combine { other, axis, gap } => {
                    let other = Box::new(PatternFile::load(&other)?.to_pattern()?);
                    let axis = match axis {
                        AxisArg::X => Axis::X,
                        AxisArg::Y => Axis::Y,
                    };
                    edit_pattern(&p, &EditOp::Combine { other, axis, gap })?
                }
                EditCmd::InsertPleats { mut at, midpoints } => {
                    if midpoints {
                        at.extend(line_midpoints(&p));
                    }
                    if at.is_empty() {
                        return Err(Failure::input("insert-pleats needs --at or --midpoints"));
                    }
                    insert_pleat_nodes(&p, &at)?
                }
            };
            save_like(&file, &edited, &out)
        }
        Command::Simulate { input, out, subdivision, w_embed, w_height, mode, stage, resume, artifact, trace, variant, color } => {
            let file = PatternFile::load(&input)?;
            let p = file.to_pattern()?;
            let mut params = file.params();
            if let Some(s) = subdivision {
                params.subdivision = s;
            }
            if let Some(w) = w_embed {
                params.embed.w_embed = w;
            }
            if let Some(w) = w_height {
                params.embed.w_height = w;
            }
            if let Some(m) = mode {
                params.mode = match m {
                    Mode::TwoStage => SolverMode::TwoStage,
                    Mode::Simultaneous => SolverMode::Simultaneous,
                };
            }
            let previous = match &resume {
                Some(path) => {
                    let a = RunArtifact::load(path)?;
                    if without_params(&a.pattern) != without_params(&file) {
                        return Err(Failure::input(format!("{} was computed from a different pattern", path.display())));
                    }
                    Some(a.run)
                }
                None => None,
            };
            let until = match stage {
                StageArg::Underlay => Stage::Underlay,
                StageArg::Pleat => Stage::Pleat,
                StageArg::Arap => Stage::Merge,
            };
            let run = run_pipeline(&p, &params, until, previous)?;

            let artifact = artifact.unwrap_or_else(|| sibling(&out, "run.json"));
            RunArtifact { pattern: file.clone(), run: run.clone() }.save(&artifact)?;
            if trace {
                write(&sibling(&out, "trace.jsonl"), &trace_jsonl(&run))?;
            }
            if let Some(obj) = run_obj(&p, &run, variant, color)? {
                write(&out, &obj)?;
            }
            print!("{}", canonical_json(&diagnostics(&p, &run)?));
            Ok(if run.converged() { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Analyze { input } => {
            let file = PatternFile::load(&input)?;
            let report = classify_pattern(&file.to_pattern()?, &file.params().embed)?;
            print!("{}", canonical_json(&report));
            Ok(if report.classification == Classification::Inconclusive { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Export { artifact, out, variant, color } => {
            let a = RunArtifact::load(&artifact)?;
            let p = a.pattern.to_pattern()?;
            let obj = run_obj(&p, &a.run, variant, color)?
                .ok_or_else(|| Failure::input(format!("{} stopped before the mesh stage", artifact.display())))?;
            write(&out, &obj)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, bind, data, sync_threshold, cors_origin } => {
            let config = ServiceConfig { data_dir: data, sync_node_limit: sync_threshold, cors_origin };
            let runtime = tokio::runtime::Runtime::new().map_err(Error::from)?;
            runtime.block_on(smocklab_service::serve(config, SocketAddr::new(bind, port))).map_err(Error::from)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Saves `p` keeping the parameters of the file it came from.
fn save_like(source: &PatternFile, p: &smocklab_core::pattern::SmockingPattern, out: &Path) -> Outcome {
    let mut file = PatternFile::from_pattern(p);
    file.params = source.params.clone();
    file.save(out)?;
    Ok(ExitCode::SUCCESS)
}

fn without_params(f: &PatternFile) -> String {
    let mut f = f.clone();
    f.params = None;
    f.to_canonical()
}

/// `out.obj` becomes `out.<ext>`.
fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::from(Error::from(e)))
}
