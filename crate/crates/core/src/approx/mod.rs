//! The ε-regularized approximate system: the density map `S`, the momentum
//! right-hand side, and the homotopy-driven coupled solve.

mod system;

use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::elliptic::{LameHandle, LameParams};
use crate::error::{check_len, Result, SolverError};
use crate::geometry::{vector_norm, Grid, NormKind, ScalarField, VectorField};
use crate::pressure::{CutoffSpec, PressureLaw, RegularizedPressureTable, DEFAULT_TABLE_SAMPLES};
use crate::sparse::{BorderedLu, SparseLu};

pub use system::CoupledSystem;

/// Physical and regularization constants of one approximate problem.
#[derive(Clone, Debug)]
pub struct ApproxParams {
    pub eps: f64,
    pub lame: LameParams,
    /// Prescribed mean density.
    pub h: f64,
    /// Body force per unit mass.
    pub fr: VectorField,
    /// Body force per unit volume.
    pub force: VectorField,
    pub law: PressureLaw,
    pub cutoff: CutoffSpec,
    pub table: Arc<RegularizedPressureTable>,
}

impl ApproxParams {
    pub fn new(
        eps: f64,
        lame: LameParams,
        h: f64,
        law: PressureLaw,
        cutoff: CutoffSpec,
        fr: VectorField,
        force: VectorField,
    ) -> Result<Self> {
        law.validate()?;
        let table = Arc::new(RegularizedPressureTable::build(&law, &cutoff, DEFAULT_TABLE_SAMPLES)?);
        let p = Self {
            eps,
            lame,
            h,
            fr,
            force,
            law,
            cutoff,
            table,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with both body forces identically zero.
    pub fn zero_forcing(
        grid: &Grid,
        eps: f64,
        lame: LameParams,
        h: f64,
        law: PressureLaw,
        cutoff: CutoffSpec,
    ) -> Result<Self> {
        let z = VectorField::zeros(grid.len());
        Self::new(eps, lame, h, law, cutoff, z.clone(), z)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SolverError::config(format!("eps > 0 required, got {}", self.eps)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SolverError::config(format!("h > 0 required, got {}", self.h)));
        }
        self.lame.validate()?;
        self.law.validate()?;
        self.law.validate_mean(self.h)?;
        if (self.cutoff.h - self.h).abs() > 1e-12 * self.h {
            return Err(SolverError::config(format!(
                "cutoff spacing h = {} differs from the mean density {}",
                self.cutoff.h, self.h
            )));
        }
        self.cutoff.validate(&self.law)?;
        check_len(self.fr.len(), self.force.len())?;
        if !self.fr.is_finite() || !self.force.is_finite() {
            return Err(SolverError::config("body forces must be finite"));
        }
        Ok(())
    }

    /// Same problem at a different regularization.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let p = Self { eps, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_len(grid.len(), self.fr.len())?;
        check_len(grid.len(), self.force.len())
    }
}

/// Density, velocity and solver bookkeeping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowState {
    pub rho: ScalarField,
    pub v: VectorField,
    pub t_homotopy: f64,
    /// Nonlinear iterations over all homotopy steps.
    pub iterations: usize,
    pub homotopy_steps: usize,
    /// Relative `W¹²` update of `v` in the last iteration.
    pub update_v: f64,
    /// Relative `L²` update of `ρ` in the last iteration.
    pub update_rho: f64,
    pub converged: bool,
    /// Largest excursion of `ρ` outside `[1/n₂, m₂]` (zero inside).
    pub bound_excess: f64,
    pub within_bounds: bool,
    pub rotation_multiplier: f64,
    /// Residual (Newton) or update (Picard) norm after every iteration.
    pub history: Vec<f64>,
}

impl FlowState {
    /// `ρ ≡ h`, `v = 0`, `t = 0`.
    pub fn initial(grid: &Grid, h: f64) -> Self {
        Self {
            rho: ScalarField::constant(grid.len(), h),
            v: VectorField::zeros(grid.len()),
            t_homotopy: 0.0,
            iterations: 0,
            homotopy_steps: 0,
            update_v: 0.0,
            update_rho: 0.0,
            converged: false,
            bound_excess: 0.0,
            within_bounds: true,
            rotation_multiplier: 0.0,
            history: Vec::new(),
        }
    }

    /// Largest excursion of `rho` outside `[1/n₂, m₂]`.
    pub fn measure_bounds(&mut self, cutoff: &CutoffSpec) {
        let (lo, hi) = cutoff.support();
        self.bound_excess = (lo - self.rho.min()).max(self.rho.max() - hi).max(0.0);
        self.within_bounds = self.bound_excess <= bound_tolerance(cutoff);
    }
}

/// Allowed excursion outside `[1/n₂, m₂]`.
pub fn bound_tolerance(cutoff: &CutoffSpec) -> f64 {
    1e-6 * cutoff.m2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full Newton on the coupled system at each homotopy step.
    Newton,
    /// Damped fixed point `v ← (1−r)v + r·Lamé⁻¹(f_t(S(v), v))`.
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub method: Method,
    /// Number of uniform homotopy steps from `t = 0` to `t = 1`.
    pub homotopy_steps: usize,
    /// Initial Picard damping.
    pub relax: f64,
    /// Outer tolerance on the relative updates of `v` and `ρ`.
    pub tol: f64,
    /// Tolerance of the density map `S`.
    pub inner_tol: f64,
    /// Iteration cap per homotopy step.
    pub max_iterations: usize,
    /// Picard sweeps without improvement before the damping is halved.
    pub stagnation_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            homotopy_steps: 8,
            relax: 0.5,
            tol: 1e-8,
            inner_tol: 1e-10,
            max_iterations: 40,
            stagnation_window: 50,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.homotopy_steps == 0 {
            return Err(SolverError::config("homotopy_steps >= 1 required"));
        }
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return Err(SolverError::config(format!("relax in (0, 1] required, got {}", self.relax)));
        }
        if !(self.tol > 0.0 && self.inner_tol > 0.0) {
            return Err(SolverError::config("tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::config("max_iterations >= 1 required"));
        }
        Ok(())
    }
}

fn rel_update(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den.max(1e-12)
    }
}

fn w12(grid: &Grid, x: &[f64], y: &[f64]) -> f64 {
    let v = VectorField::new(ScalarField(x.to_vec()), ScalarField(y.to_vec()));
    vector_norm(grid, &v, NormKind::W12).unwrap_or(f64::INFINITY)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Outcome of the density map.
#[derive(Clone, Debug)]
pub struct DensitySolve {
    pub rho: ScalarField,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub bound_excess: f64,
}

/// The density map `S`: solves `div(K(ρ)ρv) − εΔρ + ε(ρ − h) = 0`,
/// `∂ρ/∂n = 0`, for fixed `v` by damped Newton from `rho_init`.
pub fn apply_s(
    grid: &Grid,
    params: &ApproxParams,
    v: &VectorField,
    rho_init: &ScalarField,
    tol: f64,
) -> Result<DensitySolve> {
    params.check_grid(grid)?;
    check_len(grid.len(), v.len())?;
    check_len(grid.len(), rho_init.len())?;
    let sys = CoupledSystem::new(grid, params);
    let mut rho = rho_init.to_vec();
    let mut res = sys.continuity(&rho, &v.x, &v.y);
    let mut history = Vec::new();
    let mut lu: Option<SparseLu> = None;
    for it in 1..=60 {
        let rn = norm2(&res);
        if rn == 0.0 {
            return Ok(finish_density(grid, params, rho, it - 1, history));
        }
        let jac = sys.continuity_rho_jacobian(&rho, &v.x, &v.y);
        match lu.as_mut() {
            Some(f) => f.refactor(jac)?,
            None => lu = Some(SparseLu::new(jac)?),
        }
        let (step, _) = lu.as_ref().expect("factored").solve(&res)?;
        let (trial, trial_res) = line_search(rn, |a| {
            let r: Vec<f64> = rho.iter().zip(&step).map(|(x, d)| x - a * d).collect();
            let c = sys.continuity(&r, &v.x, &v.y);
            (r, c)
        });
        let upd = rel_update(
            grid.l2(&trial.iter().zip(&rho).map(|(a, b)| a - b).collect::<Vec<_>>()),
            grid.l2(&trial),
        );
        rho = trial;
        res = trial_res;
        history.push(upd);
        if upd < tol {
            return Ok(finish_density(grid, params, rho, it, history));
        }
    }
    Err(SolverError::Convergence {
        message: "density map did not converge in 60 Newton iterations; try a larger eps".into(),
        history,
    })
}

fn finish_density(grid: &Grid, params: &ApproxParams, mut rho: Vec<f64>, iterations: usize, history: Vec<f64>) -> DensitySolve {
    let drift = params.h - grid.mean(&rho);
    rho.iter_mut().for_each(|r| *r += drift);
    let rho = ScalarField(rho);
    let (lo, hi) = params.cutoff.support();
    let bound_excess = (lo - rho.min()).max(rho.max() - hi).max(0.0);
    DensitySolve {
        rho,
        iterations,
        history,
        bound_excess,
    }
}

/// Backtracking on the Euclidean residual norm; returns the first trial
/// that decreases it, or the smallest step tried.
fn line_search<F>(rn: f64, mut trial: F) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64) -> (Vec<f64>, Vec<f64>),
{
    let mut a = 1.0;
    loop {
        let (x, r) = trial(a);
        let ok = r.iter().all(|v| v.is_finite()) && norm2(&r) <= (1.0 - 1e-4 * a) * rn;
        if ok || a < 1.0 / 64.0 {
            return (x, r);
        }
        a *= 0.5;
    }
}

/// `t·[−½div(K(ρ)ρ v⊗v) − ½K(ρ)ρ v·∇v − ∇P(ρ) + K(ρ)ρ fr + F]` at every node.
pub fn momentum_rhs(grid: &Grid, params: &ApproxParams, rho: &ScalarField, v: &VectorField, t: f64) -> Result<VectorField> {
    params.check_grid(grid)?;
    check_len(grid.len(), rho.len())?;
    check_len(grid.len(), v.len())?;
    let sys = CoupledSystem::new(grid, params);
    let [a, b] = sys.momentum_terms(rho, &v.x, &v.y);
    Ok(VectorField::new(
        ScalarField(a.into_iter().map(|x| -t * x).collect()),
        ScalarField(b.into_iter().map(|x| -t * x).collect()),
    ))
}

/// Strong-form residual norms at `t = 1`, with the largest individual
/// term of each equation as its natural scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub momentum: f64,
    pub continuity: f64,
    pub momentum_scale: f64,
    pub continuity_scale: f64,
}

impl Residuals {
    pub fn momentum_relative(&self) -> f64 {
        rel_update(self.momentum, self.momentum_scale)
    }

    pub fn continuity_relative(&self) -> f64 {
        rel_update(self.continuity, self.continuity_scale)
    }
}

/// Residual norms of both equations over interior nodes (momentum) and
/// all control volumes (continuity).
pub fn residuals(grid: &Grid, params: &ApproxParams, state: &FlowState) -> Result<Residuals> {
    params.check_grid(grid)?;
    check_len(grid.len(), state.rho.len())?;
    check_len(grid.len(), state.v.len())?;
    let n = grid.len();
    let sys = CoupledSystem::new(grid, params);
    let x = sys.pack(&state.rho, &state.v, state.rotation_multiplier);
    let r = sys.residual(&x, 1.0);
    let interior = grid.interior();
    let mask = |f: &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; n];
        for &k in interior {
            m[k] = f[k];
        }
        m
    };
    let mom = (grid.l2(&mask(&r[n..2 * n])).powi(2) + grid.l2(&mask(&r[2 * n..3 * n])).powi(2)).sqrt();
    let cont = grid.l2(&r[..n]);

    let ops = grid.ops();
    let (mu, lam) = (params.lame.mu, params.lame.mu + params.lame.nu);
    let div = grid.div(&state.v.x, &state.v.y);
    let [gdx, gdy] = grid.grad(&div);
    let lap = [grid.laplacian(&state.v.x), grid.laplacian(&state.v.y)];
    let visc = (grid.l2(&mask(&lap[0].iter().zip(&gdx).map(|(a, b)| mu * a + lam * b).collect::<Vec<_>>())).powi(2)
        + grid.l2(&mask(&lap[1].iter().zip(&gdy).map(|(a, b)| mu * a + lam * b).collect::<Vec<_>>())).powi(2))
    .sqrt();
    let dp: Vec<f64> = state.rho.iter().map(|&r| params.table.p_prime(r)).collect();
    let [rx, ry] = [ops.dx.mul_vec(&state.rho), ops.dy.mul_vec(&state.rho)];
    let press = (grid.l2(&mask(&rx.iter().zip(&dp).map(|(a, b)| a * b).collect::<Vec<_>>())).powi(2)
        + grid.l2(&mask(&ry.iter().zip(&dp).map(|(a, b)| a * b).collect::<Vec<_>>())).powi(2))
    .sqrt();
    let q: Vec<f64> = state.rho.iter().map(|&r| params.cutoff.k(r) * r).collect();
    let body = |c: usize| -> Vec<f64> {
        let (fr, f) = if c == 0 { (&params.fr.x, &params.force.x) } else { (&params.fr.y, &params.force.y) };
        (0..n).map(|k| q[k] * fr[k] + f[k]).collect()
    };
    let forcing = (grid.l2(&mask(&body(0))).powi(2) + grid.l2(&mask(&body(1))).powi(2)).sqrt();
    let transport = grid.l2(&sys.transport(&state.rho, &state.v.x, &state.v.y));
    let eps = params.eps;
    let diffusion = eps * grid.l2(&control_lap(grid, &state.rho));
    let relaxation = eps * grid.l2(&state.rho.iter().map(|r| r - params.h).collect::<Vec<_>>());
    Ok(Residuals {
        momentum: mom,
        continuity: cont,
        momentum_scale: visc.max(press).max(forcing),
        continuity_scale: transport.max(diffusion).max(relaxation),
    })
}

fn control_lap(grid: &Grid, f: &[f64]) -> Vec<f64> {
    crate::elliptic::control_volume_laplacian(grid).mul_vec(f)
}

/// Continuation in `t` from the initial state to `t = 1`.
pub fn solve_approx_system(grid: &Grid, params: &ApproxParams, init: &FlowState, opts: &SolveOptions) -> Result<FlowState> {
    params.validate()?;
    params.check_grid(grid)?;
    opts.validate()?;
    check_len(grid.len(), init.rho.len())?;
    check_len(grid.len(), init.v.len())?;
    let mut state = init.clone();
    state.converged = false;
    let t0 = if init.t_homotopy >= 1.0 { 1.0 } else { 0.0 };
    let steps: Vec<f64> = if t0 >= 1.0 {
        vec![1.0]
    } else {
        (1..=opts.homotopy_steps).map(|k| k as f64 / opts.homotopy_steps as f64).collect()
    };
    let mut t_prev = t0;
    let mut queue: Vec<f64> = steps.into_iter().rev().collect();
    let mut refinements = 0;
    while let Some(t) = queue.pop() {
        let attempt = match opts.method {
            Method::Newton => newton_step(grid, params, &state, t, opts),
            Method::Picard => picard_step(grid, params, &state, t, opts),
        };
        match attempt {
            Ok(next) => {
                debug!("homotopy t = {t:.4}: {} iterations", next.iterations - state.iterations);
                state = next;
                state.t_homotopy = t;
                state.homotopy_steps += 1;
                t_prev = t;
            }
            Err(SolverError::Convergence { message, history }) => {
                if opts.method == Method::Newton && refinements < 8 && t - t_prev > 1e-3 {
                    refinements += 1;
                    info!("homotopy step to t = {t:.4} failed ({message}); halving the step");
                    queue.push(t);
                    queue.push(0.5 * (t + t_prev));
                    continue;
                }
                let mut hist = state.history.clone();
                hist.extend(history);
                return Err(SolverError::Convergence {
                    message: format!("homotopy stalled at t = {t:.4}: {message}"),
                    history: hist,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let drift = params.h - grid.mean(&state.rho);
    state.rho.iter_mut().for_each(|r| *r += drift);
    state.measure_bounds(&params.cutoff);
    state.converged = true;
    Ok(state)
}

fn newton_step(grid: &Grid, params: &ApproxParams, state: &FlowState, t: f64, opts: &SolveOptions) -> Result<FlowState> {
    let n = grid.len();
    let sys = CoupledSystem::new(grid, params);
    let mut x = sys.pack(&state.rho, &state.v, state.rotation_multiplier);
    let mut res = sys.residual(&x, t);
    let mut out = state.clone();
    let mut local = Vec::new();
    for _ in 0..opts.max_iterations {
        let rn = norm2(&res);
        if rn == 0.0 {
            out.update_v = 0.0;
            out.update_rho = 0.0;
            return Ok(unpack_into(out, &x, n));
        }
        let (core, cols, rows) = sys.jacobian(&x, t);
        let corner = vec![0.0; cols.len() * cols.len()];
        let lu = BorderedLu::new(core, cols, rows, corner)?;
        let (step, _) = lu.solve(&res)?;
        let (trial, trial_res) = line_search(rn, |a| {
            let y: Vec<f64> = x.iter().zip(&step).map(|(xi, d)| xi - a * d).collect();
            let r = sys.residual(&y, t);
            (y, r)
        });
        let dx: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let upd_rho = rel_update(grid.l2(&dx[..n]), grid.l2(&trial[..n]));
        let upd_v = rel_update(w12(grid, &dx[n..2 * n], &dx[2 * n..3 * n]), w12(grid, &trial[n..2 * n], &trial[2 * n..3 * n]));
        x = trial;
        res = trial_res;
        let rn_new = norm2(&res);
        out.iterations += 1;
        out.history.push(rn_new);
        local.push(rn_new);
        out.update_rho = upd_rho;
        out.update_v = upd_v;
        if !rn_new.is_finite() {
            break;
        }
        let scale = 1.0 + norm2(&x);
        let at_roundoff = (rn_new >= 0.9 * rn && rn < 1e-9 * scale) || rn_new <= 1e-12 * scale;
        if (upd_rho < opts.tol && upd_v < opts.tol) || at_roundoff {
            return Ok(unpack_into(out, &x, n));
        }
    }
    Err(SolverError::Convergence {
        message: format!("Newton did not converge in {} iterations", opts.max_iterations),
        history: local,
    })
}

fn unpack_into(mut s: FlowState, x: &[f64], n: usize) -> FlowState {
    s.rho = ScalarField(x[..n].to_vec());
    s.v = VectorField::new(ScalarField(x[n..2 * n].to_vec()), ScalarField(x[2 * n..3 * n].to_vec()));
    s.rotation_multiplier = x.get(3 * n).copied().unwrap_or(0.0);
    s
}

fn picard_step(grid: &Grid, params: &ApproxParams, state: &FlowState, t: f64, opts: &SolveOptions) -> Result<FlowState> {
    let lame = LameHandle::new(grid, params.lame)?;
    let mut out = state.clone();
    let mut relax = opts.relax;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut local = Vec::new();
    for _ in 0..opts.max_iterations {
        let dens = match apply_s(grid, params, &out.v, &out.rho, opts.inner_tol) {
            Ok(d) => d,
            Err(SolverError::Convergence { .. }) if relax > 1.0 / 256.0 => {
                relax *= 0.5;
                info!("density map failed during Picard at t = {t:.4}; restarting with damping {relax}");
                out = FlowState {
                    iterations: out.iterations,
                    history: out.history,
                    ..state.clone()
                };
                best = f64::INFINITY;
                since_best = 0;
                continue;
            }
            Err(e) => return Err(e),
        };
        let rhs = momentum_rhs(grid, params, &dens.rho, &out.v, t)?;
        let sol = lame.solve(&rhs, None)?;
        let mut v_new = out.v.scaled(1.0 - relax);
        v_new.axpy(relax, &sol.field);
        let dv = VectorField::new(
            v_new.x.zip_map(&out.v.x, |a, b| a - b),
            v_new.y.zip_map(&out.v.y, |a, b| a - b),
        );
        let upd_v = rel_update(vector_norm(grid, &dv, NormKind::W12)?, vector_norm(grid, &v_new, NormKind::W12)?);
        let drho: Vec<f64> = dens.rho.iter().zip(out.rho.iter()).map(|(a, b)| a - b).collect();
        let upd_rho = rel_update(grid.l2(&drho), grid.l2(&dens.rho));
        out.v = v_new;
        out.rho = dens.rho;
        out.rotation_multiplier = sol.rotation_multiplier;
        out.iterations += 1;
        out.update_v = upd_v;
        out.update_rho = upd_rho;
        let upd = upd_v.max(upd_rho);
        out.history.push(upd);
        local.push(upd);
        if !upd.is_finite() {
            break;
        }
        if upd_v < opts.tol && upd_rho < opts.tol {
            return Ok(out);
        }
        if upd < best {
            best = upd;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stagnation_window {
                relax *= 0.5;
                since_best = 0;
                best = f64::INFINITY;
                info!("Picard stagnating at t = {t:.4}; damping reduced to {relax}");
                if relax < 1.0 / 256.0 {
                    break;
                }
            }
        }
    }
    Err(SolverError::Convergence {
        message: "Picard iteration stagnated; use a smaller relax or a larger eps".into(),
        history: local,
    })
}

#[cfg(test)]
mod tests;
