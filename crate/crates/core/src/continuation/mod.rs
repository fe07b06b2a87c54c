//! The ε → 0 ladder: warm-started solves over decreasing regularization,
//! estimate tracking, and density bounds predicted from the effective
//! viscous flux.

mod hydrostatic;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::approx::{solve_approx_system, ApproxParams, FlowState, SolveOptions};
use crate::diagnostics::{effective_flux, FluxMode};
use crate::error::{check_len, Result, SolverError};
use crate::geometry::{grad_l2, vector_norm, Grid, NormKind};
use crate::pressure::PressureLaw;

pub use hydrostatic::{hydrostatic_oracle, HydrostaticProfile};

/// Regularization values of the default ladder.
pub const DEFAULT_LADDER: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

const INVERSE_SLACK: f64 = 1e-9;

/// Source of the density window used for the vacuum fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VacuumThresholds {
    /// `π⁻¹(∓‖G‖∞)` with `G` from the smallest-ε rung.
    FromG,
    Manual { rho_lo: f64, rho_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub eps: Vec<f64>,
    /// Per-rung solver options; missing entries use `base`.
    pub overrides: Vec<Option<SolveOptions>>,
    pub base: SolveOptions,
    pub thresholds: VacuumThresholds,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self {
            eps: DEFAULT_LADDER.to_vec(),
            overrides: Vec::new(),
            base: SolveOptions::default(),
            thresholds: VacuumThresholds::FromG,
        }
    }
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eps.len() < 3 {
            return Err(SolverError::config("a ladder needs at least 3 rungs"));
        }
        if !self.eps.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(SolverError::config("ladder eps values must be positive"));
        }
        if !self.eps.windows(2).all(|w| w[1] < w[0]) {
            return Err(SolverError::config("ladder eps values must be strictly decreasing"));
        }
        if let VacuumThresholds::Manual { rho_lo, rho_hi } = self.thresholds {
            if !(rho_lo > 0.0 && rho_lo <= rho_hi) {
                return Err(SolverError::config("manual thresholds need 0 < rho_lo <= rho_hi"));
            }
        }
        self.base.validate()?;
        for o in self.overrides.iter().flatten() {
            o.validate()?;
        }
        Ok(())
    }

    fn options(&self, k: usize) -> &SolveOptions {
        self.overrides.get(k).and_then(Option::as_ref).unwrap_or(&self.base)
    }
}

/// Tracked quantities of one converged rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub eps: f64,
    pub v_w12: f64,
    pub p_plus_l2: f64,
    pub p_minus_l2: f64,
    pub g_l2: f64,
    pub g_inf: f64,
    /// `√ε ‖∇ρ‖₂`
    pub sqrt_eps_grad_rho: f64,
    pub vacuum_fraction: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `‖G_ε − G_prev‖₂`; absent on the first rung.
    pub g_change_l2: Option<f64>,
    /// `∫ρ div v`
    pub rho_div_v: f64,
    /// `∫ρ div v / (‖ρ‖₂ ‖∇v‖₂)`
    pub rho_div_v_normalized: f64,
    pub iterations: usize,
    pub within_bounds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub rungs: Vec<RungReport>,
    /// Density window `[ρ_lo, ρ_hi]` used for the vacuum fractions.
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// True when a rung failed and the report stops early.
    pub partial: bool,
    pub failure: Option<String>,
}

impl LadderReport {
    /// Flat per-rung table: a header line, then one row per rung.
    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "eps v_w12 p_plus_l2 p_minus_l2 g_l2 g_inf sqrt_eps_grad_rho vacuum_fraction rho_min rho_max g_change_l2 rho_div_v\n",
        );
        for r in &self.rungs {
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {} {:e}\n",
                r.eps,
                r.v_w12,
                r.p_plus_l2,
                r.p_minus_l2,
                r.g_l2,
                r.g_inf,
                r.sqrt_eps_grad_rho,
                r.vacuum_fraction,
                r.rho_min,
                r.rho_max,
                r.g_change_l2.map_or("nan".to_string(), |v| format!("{v:e}")),
                r.rho_div_v
            ));
        }
        s
    }

    /// Two-column series `eps value` for one named column of the table.
    pub fn series(&self, column: &str) -> Option<Vec<(f64, f64)>> {
        let pick: fn(&RungReport) -> f64 = match column {
            "v_w12" => |r| r.v_w12,
            "p_plus_l2" => |r| r.p_plus_l2,
            "p_minus_l2" => |r| r.p_minus_l2,
            "g_l2" => |r| r.g_l2,
            "g_inf" => |r| r.g_inf,
            "sqrt_eps_grad_rho" => |r| r.sqrt_eps_grad_rho,
            "vacuum_fraction" => |r| r.vacuum_fraction,
            "rho_min" => |r| r.rho_min,
            "rho_max" => |r| r.rho_max,
            "g_change_l2" => |r| r.g_change_l2.unwrap_or(f64::NAN),
            "rho_div_v" => |r| r.rho_div_v,
            _ => return None,
        };
        Some(self.rungs.iter().map(|r| (r.eps, pick(r))).collect())
    }

    pub const SERIES: [&'static str; 11] = [
        "v_w12",
        "p_plus_l2",
        "p_minus_l2",
        "g_l2",
        "g_inf",
        "sqrt_eps_grad_rho",
        "vacuum_fraction",
        "rho_min",
        "rho_max",
        "g_change_l2",
        "rho_div_v",
    ];
}

/// Report plus the converged state of every completed rung.
#[derive(Clone, Debug)]
pub struct LadderRun {
    pub report: LadderReport,
    pub states: Vec<FlowState>,
}

/// `(π⁻¹(−G∞), π⁻¹(G∞))`. The lower bound is zero when the law stays above
/// `−G∞` all the way to vacuum.
pub fn predicted_bounds(law: &PressureLaw, g_inf: f64) -> Result<(f64, f64)> {
    if !(g_inf >= 0.0) {
        return Err(SolverError::domain(format!("G_inf >= 0 required, got {g_inf}")));
    }
    let lo = if -g_inf <= law.vacuum_limit() { 0.0 } else { law.pi_inverse(-g_inf)? };
    Ok((lo, law.pi_inverse(g_inf)?))
}

/// Predicted bounds widened by the round-off of `π⁻¹`, so a state sitting
/// exactly on a bound counts as inside.
pub fn vacuum_window(law: &PressureLaw, g_inf: f64) -> Result<(f64, f64)> {
    let (lo, hi) = predicted_bounds(law, g_inf)?;
    Ok((lo * (1.0 - INVERSE_SLACK), hi * (1.0 + INVERSE_SLACK)))
}

/// Area fraction of `{ρ < ρ_lo} ∪ {ρ > ρ_hi}`.
pub fn vacuum_measure(grid: &Grid, rho: &[f64], rho_lo: f64, rho_hi: f64) -> Result<f64> {
    check_len(grid.len(), rho.len())?;
    if rho_lo > rho_hi {
        return Err(SolverError::domain("rho_lo <= rho_hi required"));
    }
    let out: f64 = grid
        .weights()
        .iter()
        .zip(rho)
        .filter(|(_, r)| **r < rho_lo || **r > rho_hi)
        .fold(0.0, |acc, (w, _)| acc + w);
    Ok(out / grid.area())
}

/// Solves every rung, warm-starting each from the previous converged state.
pub fn run_ladder(grid: &Grid, base: &ApproxParams, spec: &LadderSpec) -> Result<LadderRun> {
    spec.validate()?;
    base.validate()?;
    let mut states: Vec<FlowState> = Vec::new();
    let mut fluxes: Vec<Vec<f64>> = Vec::new();
    let mut rungs: Vec<RungReport> = Vec::new();
    let mut failure = None;
    for (k, &eps) in spec.eps.iter().enumerate() {
        let params = base.with_eps(eps)?;
        let init = states.last().cloned().unwrap_or_else(|| FlowState::initial(grid, base.h));
        let state = match solve_approx_system(grid, &params, &init, spec.options(k)) {
            Ok(s) => s,
            Err(e @ SolverError::Convergence { .. }) => {
                warn!("ladder rung eps = {eps:e} failed: {e}");
                failure = Some(format!("rung eps = {eps:e}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        info!("ladder rung eps = {eps:e}: {} iterations", state.iterations - init.iterations);
        let g = effective_flux(grid, &params, &state, FluxMode::Regularized)?;
        let rung = measure_rung(grid, &params, &state, &g.field, fluxes.last().map(Vec::as_slice), state.iterations - init.iterations)?;
        rungs.push(rung);
        fluxes.push(g.field.0);
        states.push(state);
    }
    if rungs.is_empty() {
        return Err(SolverError::Convergence {
            message: failure.unwrap_or_else(|| "no rung converged".into()),
            history: Vec::new(),
        });
    }
    let (rho_lo, rho_hi) = match spec.thresholds {
        VacuumThresholds::FromG => vacuum_window(&base.law, rungs.last().expect("nonempty").g_inf)?,
        VacuumThresholds::Manual { rho_lo, rho_hi } => (rho_lo, rho_hi),
    };
    for (r, s) in rungs.iter_mut().zip(&states) {
        r.vacuum_fraction = vacuum_measure(grid, &s.rho, rho_lo, rho_hi)?;
    }
    Ok(LadderRun {
        report: LadderReport {
            rungs,
            rho_lo,
            rho_hi,
            partial: failure.is_some(),
            failure,
        },
        states,
    })
}

fn measure_rung(
    grid: &Grid,
    params: &ApproxParams,
    state: &FlowState,
    g: &[f64],
    prev_g: Option<&[f64]>,
    iterations: usize,
) -> Result<RungReport> {
    let table = &params.table;
    let p_plus: Vec<f64> = state.rho.iter().map(|&r| table.p_plus(r)).collect();
    let p_minus: Vec<f64> = state.rho.iter().map(|&r| table.p_minus(r)).collect();
    let [gx, gy] = grid.grad(&state.rho);
    let grad_rho = grid.l2(&gx).hypot(grid.l2(&gy));
    let div = grid.div(&state.v.x, &state.v.y);
    let rho_div_v = grid.dot(&state.rho, &div);
    let denom = grid.l2(&state.rho) * grad_l2(grid, &state.v);
    Ok(RungReport {
        eps: params.eps,
        v_w12: vector_norm(grid, &state.v, NormKind::W12)?,
        p_plus_l2: grid.l2(&p_plus),
        p_minus_l2: grid.l2(&p_minus),
        g_l2: grid.l2(g),
        g_inf: g.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        sqrt_eps_grad_rho: params.eps.sqrt() * grad_rho,
        vacuum_fraction: 0.0,
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        g_change_l2: prev_g.map(|p| grid.l2(&g.iter().zip(p).map(|(a, b)| a - b).collect::<Vec<_>>())),
        rho_div_v,
        rho_div_v_normalized: if denom > 0.0 { rho_div_v / denom } else { 0.0 },
        iterations,
        within_bounds: state.within_bounds,
    })
}
