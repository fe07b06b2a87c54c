use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{CutoffConfig, RunConfig};
use super::fields::{export_fields, read_fields, write_series};
use crate::approx::{solve_approx_system, ApproxParams, FlowState};
use crate::continuation::{run_ladder, vacuum_measure, vacuum_window, LadderReport};
use crate::diagnostics::{diagnose, effective_flux, vorticity_check, DiagnosticsOptions, DiagnosticsReport, FluxMode};
use crate::error::{Result, SolverError};
use crate::geometry::{build_grid, vector_norm, Grid, NormKind};
use crate::pressure::CutoffSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const REPORT_FILE: &str = "report.json";
pub const LOCK_FILE: &str = ".slipflow.lock";

pub fn exit_code(err: &SolverError) -> i32 {
    match err {
        SolverError::Config(_) => EXIT_CONFIG,
        SolverError::Io(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                SolverError::Io(std::io::Error::new(
                    e.kind(),
                    format!("{} is locked by another run ({} exists)", dir.display(), path.display()),
                ))
            } else {
                SolverError::Io(e)
            }
        })?;
        Ok(Self { path, _file: file })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CutoffSource {
    Manual,
    /// `presolve_g_inf` is `‖G‖∞` of the coarse solve.
    Auto { presolve_resolution: usize, presolve_g_inf: f64 },
}

/// A grid and fully resolved parameters at the configured ε.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub params: ApproxParams,
    pub cutoff_source: CutoffSource,
}

fn params_on(cfg: &RunConfig, grid: &Grid, cutoff: CutoffSpec, base_dir: &Path) -> Result<ApproxParams> {
    let f = &cfg.flow;
    ApproxParams::new(
        f.eps,
        f.lame(),
        f.h,
        cfg.law.law(),
        cutoff,
        f.fr.evaluate(grid, base_dir)?,
        f.force.evaluate(grid, base_dir)?,
    )
}

/// Resolves the cutoff (running the coarse sizing solve when it is automatic)
/// and evaluates the forces on the configured grid. Relative force-file
/// paths are taken from `base_dir`.
pub fn build_problem(cfg: &RunConfig, base_dir: &Path) -> Result<Problem> {
    cfg.validate()?;
    let law = cfg.law.law();
    let h = cfg.flow.h;
    let grid = build_grid(cfg.domain.spec())?;
    let (cutoff, cutoff_source) = match cfg.cutoff {
        CutoffConfig::Manual { .. } => (cfg.manual_cutoff()?.expect("manual cutoff"), CutoffSource::Manual),
        CutoffConfig::Auto {
            presolve_resolution,
            factor,
        } => {
            let coarse = build_grid(cfg.domain.coarse_spec(presolve_resolution))?;
            let provisional = CutoffSpec::balanced(&law, 4.0 * h, h)?;
            let params = params_on(cfg, &coarse, provisional, base_dir)?;
            let state = solve_approx_system(&coarse, &params, &FlowState::initial(&coarse, h), &cfg.solver)?;
            let g_inf = effective_flux(&coarse, &params, &state, FluxMode::Regularized)?.linf;
            let m2 = law.pi_inverse(factor * g_inf)?.max(2.5 * h);
            info!("cutoff sizing: coarse ‖G‖∞ = {g_inf:e}, m2 = {m2:e}");
            (
                CutoffSpec::balanced(&law, m2, h)?,
                CutoffSource::Auto {
                    presolve_resolution,
                    presolve_g_inf: g_inf,
                },
            )
        }
    };
    let params = params_on(cfg, &grid, cutoff, base_dir)?;
    Ok(Problem {
        grid,
        params,
        cutoff_source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub eps: f64,
    pub iterations: usize,
    pub homotopy_steps: usize,
    pub within_bounds: bool,
    pub bound_excess: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `|mean ρ − h| / h`
    pub mean_defect: f64,
    pub v_w12: f64,
    /// Window `π⁻¹(∓‖G‖∞)` for the vacuum fraction.
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub vacuum_fraction: f64,
    pub history: Vec<f64>,
}

/// Everything a run produced, minus wall-clock timing (kept in `timing.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Resolved configuration; feeding it back reproduces this report.
    pub config: RunConfig,
    pub cutoff: CutoffSpec,
    pub cutoff_source: CutoffSource,
    pub corner_treatment: Option<String>,
    pub converged: bool,
    pub partial: bool,
    pub failure: Option<String>,
    pub solve: Option<SolveSummary>,
    pub ladder: Option<LadderReport>,
    pub diagnostics: Option<DiagnosticsReport>,
}

impl RunReport {
    fn new(command: &str, cfg: &RunConfig, problem: &Problem) -> Self {
        let corner_treatment = (!problem.grid.is_annulus())
            .then(|| "velocity set to zero at the four corner nodes".to_string());
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            cutoff: problem.params.cutoff,
            cutoff_source: problem.cutoff_source.clone(),
            corner_treatment,
            converged: false,
            partial: false,
            failure: None,
            solve: None,
            ladder: None,
            diagnostics: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.converged && !self.partial {
            EXIT_OK
        } else {
            EXIT_SOLVER
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn write(&self, out: &Path) -> Result<()> {
        std::fs::write(out.join(REPORT_FILE), self.to_json() + "\n")?;
        Ok(())
    }
}

fn diag_opts(cfg: &RunConfig) -> DiagnosticsOptions {
    DiagnosticsOptions {
        bank_size: cfg.diagnostics.bank_size,
        seed: cfg.seed,
    }
}

fn write_timing(out: &Path, seconds: f64) -> Result<()> {
    std::fs::write(out.join("timing.json"), format!("{{\"wall_seconds\": {seconds}}}\n"))?;
    Ok(())
}

fn summarize(grid: &Grid, params: &ApproxParams, state: &FlowState, g_inf: f64) -> Result<SolveSummary> {
    let (rho_lo, rho_hi) = vacuum_window(&params.law, g_inf)?;
    Ok(SolveSummary {
        eps: params.eps,
        iterations: state.iterations,
        homotopy_steps: state.homotopy_steps,
        within_bounds: state.within_bounds,
        bound_excess: state.bound_excess,
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        mean_defect: (grid.mean(&state.rho) - params.h).abs() / params.h,
        v_w12: vector_norm(grid, &state.v, NormKind::W12)?,
        rho_lo,
        rho_hi,
        vacuum_fraction: vacuum_measure(grid, &state.rho, rho_lo, rho_hi)?,
        history: state.history.clone(),
    })
}

/// Solves at the configured ε and writes `report.json` and `fields.txt`
/// into `out`. Solver failures are recorded in the returned report.
pub fn cmd_solve(cfg: &RunConfig, base_dir: &Path, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(out)?;
    let clock = std::time::Instant::now();
    let problem = build_problem(cfg, base_dir)?;
    let (grid, params) = (&problem.grid, &problem.params);
    let mut report = RunReport::new("solve", cfg, &problem);
    match solve_approx_system(grid, params, &FlowState::initial(grid, params.h), &cfg.solver) {
        Ok(state) => {
            report.converged = state.converged;
            let diag = diagnose(grid, params, &state, &diag_opts(cfg));
            match diag {
                Ok(d) => {
                    report.solve = Some(summarize(grid, params, &state, d.g_inf)?);
                    export_fields(grid, &state, &d.g, &d.omega, &out.join("fields.txt"))?;
                    report.diagnostics = Some(d);
                }
                Err(e) => {
                    report.failure = Some(format!("diagnostics: {e}"));
                    report.partial = true;
                }
            }
        }
        Err(e @ SolverError::Convergence { .. }) => report.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    report.write(out)?;
    write_timing(out, clock.elapsed().as_secs_f64())?;
    Ok(report)
}

/// Runs the ε-ladder and writes the report, the flat table, per-quantity
/// series, a field file per completed rung and `fields.txt` for the last one.
pub fn cmd_ladder(cfg: &RunConfig, base_dir: &Path, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(out)?;
    let clock = std::time::Instant::now();
    let problem = build_problem(cfg, base_dir)?;
    let (grid, params) = (&problem.grid, &problem.params);
    let mut report = RunReport::new("ladder", cfg, &problem);
    let run = match run_ladder(grid, params, &cfg.ladder_spec()) {
        Ok(run) => run,
        Err(e @ SolverError::Convergence { .. }) => {
            report.partial = true;
            report.failure = Some(e.to_string());
            report.write(out)?;
            write_timing(out, clock.elapsed().as_secs_f64())?;
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    std::fs::write(out.join("ladder.txt"), run.report.to_table())?;
    let series = out.join("series");
    std::fs::create_dir_all(&series)?;
    for name in LadderReport::SERIES {
        let rows = run.report.series(name).expect("known column");
        write_series(&series.join(format!("{name}.txt")), name, &rows)?;
    }
    for (k, (state, rung)) in run.states.iter().zip(&run.report.rungs).enumerate() {
        let p = params.with_eps(rung.eps)?;
        let g = effective_flux(grid, &p, state, FluxMode::Regularized)?;
        let w = vorticity_check(grid, &p, state)?;
        export_fields(grid, state, &g.field, &w.omega, &out.join(format!("fields_rung{k}.txt")))?;
    }
    let last = run.states.last().expect("nonempty ladder");
    let last_params = params.with_eps(run.report.rungs.last().expect("nonempty ladder").eps)?;
    match diagnose(grid, &last_params, last, &diag_opts(cfg)) {
        Ok(d) => {
            report.solve = Some(summarize(grid, &last_params, last, d.g_inf)?);
            export_fields(grid, last, &d.g, &d.omega, &out.join("fields.txt"))?;
            report.diagnostics = Some(d);
        }
        Err(e) => report.failure = Some(format!("diagnostics: {e}")),
    }
    report.converged = !run.report.partial && report.failure.is_none();
    report.partial = run.report.partial;
    if report.failure.is_none() {
        report.failure = run.report.failure.clone();
    }
    report.ladder = Some(run.report);
    report.write(out)?;
    write_timing(out, clock.elapsed().as_secs_f64())?;
    Ok(report)
}

/// Recomputes the diagnostics of an exported state; `eps` replaces the
/// configured regularization.
pub fn cmd_check(cfg: &RunConfig, base_dir: &Path, state_path: &Path, eps: Option<f64>) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let problem = build_problem(cfg, base_dir)?;
    let params = match eps {
        Some(e) => problem.params.with_eps(e)?,
        None => problem.params,
    };
    let state = read_fields(state_path)?.to_state(&problem.grid)?;
    diagnose(&problem.grid, &params, &state, &diag_opts(cfg))
}
