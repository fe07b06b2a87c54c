use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use slipflow::io::{cmd_check, cmd_ladder, cmd_solve, exit_code, parse_config, RunConfig, EXIT_OK};
use slipflow::mms::{run_mms, MmsCase, MmsGeometry};
use slipflow::{Result, SolverError};

/// Steady compressible slip-wall flow: solves, ε-ladders and verification studies.
///
/// Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 i/o error.
/// Log verbosity follows RUST_LOG.
#[derive(Parser)]
#[command(name = "slipflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at the configured ε and export fields plus a report.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ε-ladder with per-rung snapshots.
    Ladder {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study of an elliptic kernel.
    Mms {
        #[arg(long)]
        case: MmsCase,
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        grids: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Geometry::Rectangle)]
        geometry: Geometry,
    },
    /// Recompute diagnostics on an exported field file.
    Check {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Regularization used for the diagnostics instead of the configured one.
        #[arg(long)]
        eps: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Geometry {
    Rectangle,
    Annulus,
}

fn load(path: &Path) -> Result<(RunConfig, PathBuf)> {
    let cfg = parse_config(path).map_err(|e| match e {
        SolverError::Io(io) => SolverError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn out_dir(cli: Option<PathBuf>, cfg: &RunConfig, base: &Path) -> Result<PathBuf> {
    cli.or_else(|| cfg.output.as_ref().map(|p| base.join(p)))
        .ok_or_else(|| SolverError::Config("no output directory: pass --out or set `output` in the config".into()))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { config, out } => {
            let (cfg, base) = load(&config)?;
            let out = out_dir(out, &cfg, &base)?;
            let report = cmd_solve(&cfg, &base, &out)?;
            if let Some(f) = &report.failure {
                error!("{f}");
            }
            Ok(report.exit_code())
        }
        Command::Ladder { config, out } => {
            let (cfg, base) = load(&config)?;
            let out = out_dir(out, &cfg, &base)?;
            let report = cmd_ladder(&cfg, &base, &out)?;
            if let Some(f) = &report.failure {
                error!("{f}");
            }
            Ok(report.exit_code())
        }
        Command::Mms { case, grids, geometry } => {
            let geo = match geometry {
                Geometry::Rectangle => MmsGeometry::Rectangle,
                Geometry::Annulus => MmsGeometry::Annulus,
            };
            let study = run_mms(case, geo, &grids)?;
            println!("{}", serde_json::to_string_pretty(&study).expect("study serializes"));
            Ok(EXIT_OK)
        }
        Command::Check { state, config, eps } => {
            let (cfg, base) = load(&config)?;
            let report = cmd_check(&cfg, &base, &state, eps)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = run(cli).unwrap_or_else(|e| {
        error!("{e}");
        eprintln!("slipflow: {e}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
