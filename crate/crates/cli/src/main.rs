use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use biunitary::cells::{solve_cells, SolveOptions, SolveReport};
use biunitary::connection::ConnectionDocument;
use biunitary::flatness::FlatnessContext;
use biunitary::fusion::{verify_axioms, AxiomReport};
use biunitary::graph::parse_diagram;
use biunitary::linalg::RankTolerances;
use biunitary::{catalog, ghj_cells, InductionTower, Locality, QSystemSpec, Sign, ZMatrix};

mod cache;
mod report;

use cache::{key_for, Cache, CACHE_ENV};
use report::{build_report, golden_mismatch, report_specs, VerdictRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] biunitary::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(name = "biunitary", version, about = "Bi-unitary connections, alpha-induction and flatness verdicts over SU(2)_k")]
struct Cli {
    /// Directory for cached results (content-hash keyed).
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct RankArgs {
    /// Singular values below this count as zero.
    #[arg(long, default_value_t = biunitary::linalg::ZERO_TOL)]
    zero_tol: f64,
    /// The smallest nonzero singular value must exceed this.
    #[arg(long, default_value_t = biunitary::linalg::GAP_TOL)]
    gap_tol: f64,
}

impl RankArgs {
    fn tolerances(self) -> Result<RankTolerances, CliError> {
        Ok(RankTolerances::new(self.zero_tol, self.gap_tol)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the catalog entries.
    Catalog,
    /// Residuals of the category axioms at one level.
    FusionCheck {
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Fundamental cell system of a diagram.
    Cells {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        level: Option<u32>,
        /// Solve numerically instead of using the closed form.
        #[arg(long)]
        solve: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-11)]
        solve_tol: f64,
        #[arg(long, default_value_t = 200)]
        max_attempts: usize,
    },
    /// Alpha-induced connection of one label.
    Induce {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        lambda: u32,
        #[arg(long, value_parser = parse_sign, allow_hyphen_values = true)]
        sign: Sign,
    },
    /// Flatness verdict of one induced connection.
    Flatness {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        lambda: u32,
        #[arg(long, value_parser = parse_sign, allow_hyphen_values = true)]
        sign: Sign,
        /// Largest power checked; defaults to twice the diameter.
        #[arg(long)]
        depth: Option<usize>,
        /// Also run parallel transport on grids up to this size.
        #[arg(long)]
        transport_grid: Option<usize>,
        #[command(flatten)]
        rank: RankArgs,
    },
    /// Intertwiner dimensions between the two inductions of every label.
    Zmatrix {
        #[arg(long)]
        graph: String,
        #[command(flatten)]
        rank: RankArgs,
    },
    /// Verdict table over the catalog.
    Report {
        /// The full catalog; otherwise only the graphs given by --graph.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        graph: Vec<String>,
        /// Expected verdict table; a mismatch exits with status 2.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the verdict table in golden form to this file.
        #[arg(long)]
        write_golden: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        rank: RankArgs,
    },
}

fn parse_sign(s: &str) -> Result<Sign, String> {
    Sign::parse(s).ok_or_else(|| format!("sign must be +, -, plus or minus, got {s:?}"))
}

fn lookup(graph: &str, level: Option<u32>) -> Result<QSystemSpec, CliError> {
    let (series, index) = parse_diagram(graph)?;
    let spec = QSystemSpec::of(series, index)?;
    if let Some(k) = level {
        if k != spec.level {
            return Err(CliError::Usage(format!("{graph} lives at level {}, not {k}", spec.level)));
        }
    }
    Ok(spec)
}

#[derive(Serialize)]
struct CatalogEntry {
    name: String,
    level: u32,
    theta: Vec<u32>,
    locality: Locality,
    vertices: usize,
    star: String,
}

#[derive(Serialize)]
struct FusionCheckOutput {
    passes: bool,
    tol: f64,
    report: AxiomReport,
}

#[derive(Serialize, serde::Deserialize)]
struct CellsOutput {
    spec: String,
    level: u32,
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<SolveReport>,
    residual: f64,
    connection: ConnectionDocument,
}

/// What a successful command produced.
enum Outcome {
    Json(serde_json::Value),
    /// Report written; the verdict table differs from the golden one.
    GoldenMismatch(serde_json::Value, String),
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cache = Cache::new(cli.cache_dir.clone())?;
    let value = match &cli.command {
        Command::Catalog => {
            let entries: Vec<CatalogEntry> = catalog()
                .into_iter()
                .map(|s| CatalogEntry {
                    star: s.graph.labels()[s.graph.star()].clone(),
                    vertices: s.graph.len(),
                    name: s.name,
                    level: s.level,
                    theta: s.theta,
                    locality: s.locality,
                })
                .collect();
            serde_json::to_value(entries)?
        }
        Command::FusionCheck { level, tol } => {
            let cat = biunitary::FusionCategory::su2(*level)?;
            let report = verify_axioms(&cat);
            let out = FusionCheckOutput { passes: report.passes(*tol), tol: *tol, report };
            if !out.passes {
                return Err(CliError::Usage(format!("level {level} fails the axioms: {}", serde_json::to_string(&out)?)));
            }
            serde_json::to_value(out)?
        }
        Command::Cells { graph, level, solve, seed, solve_tol, max_attempts } => {
            let spec = lookup(graph, *level)?;
            let out = if *solve {
                let opts = SolveOptions { seed: *seed, max_attempts: *max_attempts, tol: *solve_tol, ..SolveOptions::default() };
                log::info!("solving {} cells with seed {seed}", spec.name);
                let key = key_for("cells", &(&spec, seed, max_attempts, opts.max_iterations, solve_tol))?;
                cache.get_or_compute(&key, || {
                    let (w, rep) = solve_cells(&spec, &opts)?;
                    Ok(CellsOutput {
                        spec: spec.name.clone(),
                        level: spec.level,
                        method: "solved".into(),
                        residual: w.check_biunitarity()?.max(),
                        solve: Some(rep),
                        connection: w.to_document(),
                    })
                })?
            } else {
                let w = ghj_cells(&spec)?;
                CellsOutput {
                    spec: spec.name.clone(),
                    level: spec.level,
                    method: "closed_form".into(),
                    residual: w.check_biunitarity()?.max(),
                    solve: None,
                    connection: w.to_document(),
                }
            };
            serde_json::to_value(out)?
        }
        Command::Induce { graph, lambda, sign } => {
            let spec = lookup(graph, None)?;
            let w = InductionTower::new(&spec, *lambda)?.induce(*lambda, *sign)?;
            serde_json::to_value(w.to_document())?
        }
        Command::Flatness { graph, lambda, sign, depth, transport_grid, rank } => {
            let spec = lookup(graph, None)?;
            let ctx = FlatnessContext::with_tolerances(&spec, rank.tolerances()?)?;
            let mut v = serde_json::to_value(ctx.check(*lambda, *sign, *depth)?)?;
            if let Some(n) = transport_grid {
                v["transport"] = serde_json::to_value(ctx.check_by_transport(*lambda, *sign, *n, *n)?)?;
            }
            v
        }
        Command::Zmatrix { graph, rank } => {
            let spec = lookup(graph, None)?;
            let ctx = FlatnessContext::with_tolerances(&spec, rank.tolerances()?)?;
            let z: &ZMatrix = &ctx.z;
            let (ds, dt) = z.modular_defects(&spec.category()?);
            let mut v = serde_json::to_value(z)?;
            v["commutator_s"] = ds.into();
            v["commutator_t"] = dt.into();
            v["theta_plus"] = serde_json::to_value(ctx.theta_plus())?;
            v
        }
        Command::Report { all, graph, golden, write_golden, depth, rank } => {
            let mut specs = report_specs();
            if !*all {
                if graph.is_empty() {
                    return Err(CliError::Usage("report needs --all or at least one --graph".into()));
                }
                for g in graph {
                    if !specs.iter().any(|(s, _)| &s.name == g) {
                        return Err(CliError::Usage(format!("{g} is not in the catalog")));
                    }
                }
                specs.retain(|(s, _)| graph.contains(&s.name));
            }
            let doc = build_report(&specs, *depth, rank.tolerances()?, &cache)?;
            if let Some(path) = write_golden {
                fs::write(path, serde_json::to_string_pretty(&doc.verdicts)? + "\n")?;
            }
            let value = serde_json::to_value(&doc)?;
            if let Some(path) = golden {
                let want: Vec<VerdictRow> = serde_json::from_str(&fs::read_to_string(path)?)?;
                if let Some(diff) = golden_mismatch(&doc.verdicts, &want)? {
                    return Ok(Outcome::GoldenMismatch(value, diff));
                }
            }
            value
        }
    };
    Ok(Outcome::Json(value))
}

fn emit(cli: &Cli, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let result = run(&cli).and_then(|outcome| match outcome {
        Outcome::Json(v) => emit(&cli, &v).map(|()| ExitCode::SUCCESS),
        Outcome::GoldenMismatch(v, diff) => {
            emit(&cli, &v)?;
            eprintln!("verdict table differs from the golden file: {diff}");
            Ok(ExitCode::from(2))
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
