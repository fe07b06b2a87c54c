//! Post-processing of converged states: effective viscous flux, vorticity
//! and its wall condition, the flux-gradient identity, the energy ledger,
//! weak-form residuals, the Lions regularity block and the divergence-lift
//! stability check.

mod weak;

use serde::{Deserialize, Serialize};

use crate::approx::{ApproxParams, CoupledSystem, FlowState};
use crate::elliptic::divergence_lift;
use crate::error::{check_len, Result, SolverError};
use crate::geometry::{grad_l2, Grid, ScalarField};
use crate::numerics::minimize_scalar;
use crate::pressure::PressureLaw;

pub use weak::{weak_residual, WeakForm, WeakResiduals};

/// Pressure used inside `G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxMode {
    /// The regularized pressure `P` of the approximate system.
    Regularized,
    /// The physical law `π`.
    Limit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveFlux {
    pub field: ScalarField,
    pub l2: f64,
    pub linf: f64,
}

/// `G = −(2μ+ν) div_h v + P(ρ)` or `+ π(ρ)`.
pub fn effective_flux(grid: &Grid, params: &ApproxParams, state: &FlowState, mode: FluxMode) -> Result<EffectiveFlux> {
    check_state(grid, state)?;
    let div = grid.div(&state.v.x, &state.v.y);
    let c = 2.0 * params.lame.mu + params.lame.nu;
    let field = state
        .rho
        .iter()
        .zip(&div)
        .map(|(&r, d)| Ok(-c * d + pressure(params, mode, r)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EffectiveFlux {
        l2: grid.l2(&field),
        linf: field.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        field: ScalarField(field),
    })
}

pub(crate) fn pressure(params: &ApproxParams, mode: FluxMode, rho: f64) -> Result<f64> {
    match mode {
        FluxMode::Regularized => Ok(params.table.p(rho)),
        FluxMode::Limit => params.law.pi(rho),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VorticityCheck {
    pub omega: ScalarField,
    /// `max |ω − (2χ − f/μ) v·τ|` over boundary nodes that are not corners.
    pub bc_residual: f64,
}

pub fn vorticity_check(grid: &Grid, params: &ApproxParams, state: &FlowState) -> Result<VorticityCheck> {
    check_state(grid, state)?;
    let omega = grid.curl(&state.v.x, &state.v.y);
    let lame = &params.lame;
    let bc_residual = grid
        .boundary()
        .iter()
        .filter(|b| !b.is_corner())
        .map(|b| {
            let k = b.index;
            let vt = state.v.x[k] * b.tangent[0] + state.v.y[k] * b.tangent[1];
            (omega[k] - (2.0 * b.curvature - lame.friction / lame.mu) * vt).abs()
        })
        .fold(0.0_f64, f64::max);
    Ok(VorticityCheck {
        omega: ScalarField(omega),
        bc_residual,
    })
}

/// Relative interior `L2` norm of `∇G − μ∇⊥ω + K(ρ)ρ v·∇v − K(ρ)ρ fr − F`,
/// with `∇⊥ = (−∂₂, ∂₁)` and the convective term in the skew form used by
/// the solver.
pub fn flux_gradient_residual(grid: &Grid, params: &ApproxParams, state: &FlowState) -> Result<FluxGradient> {
    check_state(grid, state)?;
    let n = grid.len();
    let mu = params.lame.mu;
    let g = effective_flux(grid, params, state, FluxMode::Regularized)?;
    let [gx, gy] = grid.grad(&g.field);
    let omega = grid.curl(&state.v.x, &state.v.y);
    let [ox, oy] = grid.grad(&omega);
    let [rx, ry] = grid.grad(&state.rho);
    let sys = CoupledSystem::new(grid, params);
    let nl = sys.momentum_terms(&state.rho, &state.v.x, &state.v.y);
    let mut forcing = [vec![0.0; n], vec![0.0; n]];
    let mut conv = [vec![0.0; n], vec![0.0; n]];
    let mut res = [vec![0.0; n], vec![0.0; n]];
    let grad_g = [&gx, &gy];
    let perp = [oy.iter().map(|v| -mu * v).collect::<Vec<_>>(), ox.iter().map(|v| mu * v).collect()];
    let grad_rho = [&rx, &ry];
    let fr = [&params.fr.x, &params.fr.y];
    let force = [&params.force.x, &params.force.y];
    let mask: Vec<f64> = (0..n).map(|k| if grid.is_boundary(k) { 0.0 } else { 1.0 }).collect();
    for k in 0..n {
        let r = state.rho[k];
        let q = params.cutoff.k(r) * r;
        let dp = params.table.p_prime(r);
        for i in 0..2 {
            forcing[i][k] = mask[k] * (q * fr[i][k] + force[i][k]);
            conv[i][k] = mask[k] * (nl[i][k] - dp * grad_rho[i][k] + forcing[i][k]);
            res[i][k] = mask[k] * (grad_g[i][k] - perp[i][k]) + conv[i][k] - forcing[i][k];
        }
    }
    let norm = |f: &[Vec<f64>; 2]| grid.l2(&f[0]).hypot(grid.l2(&f[1]));
    let masked = |f: [&Vec<f64>; 2]| -> [Vec<f64>; 2] {
        [
            f[0].iter().zip(&mask).map(|(a, m)| a * m).collect(),
            f[1].iter().zip(&mask).map(|(a, m)| a * m).collect(),
        ]
    };
    let scale = [
        norm(&masked(grad_g)),
        norm(&masked([&perp[0], &perp[1]])),
        norm(&conv),
        norm(&forcing),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);
    let absolute = norm(&res);
    Ok(FluxGradient {
        absolute,
        relative: if scale > 0.0 { absolute / scale } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxGradient {
    pub absolute: f64,
    /// `absolute` over the largest of the four term norms.
    pub relative: f64,
}

/// Every term of the energy identity obtained by testing the momentum
/// equation with `v` and eliminating the pressure work through the
/// continuity equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// `2μ ∫|D(v)|²`
    pub shear: f64,
    /// `ν ∫(div v)²`
    pub bulk: f64,
    /// `∮ f (v·τ)²`
    pub friction: f64,
    /// `ε ∫ (π'(ρ)/ρ) |∇ρ|²`
    pub density_diffusion: f64,
    /// `−ε ∫ (ρ − h) e(ρ)`
    pub relaxation: f64,
    /// `∫ (K(ρ)ρ fr + F)·v`
    pub work: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub imbalance: f64,
    /// `|imbalance| / max(|lhs|, |rhs|)`, zero when both sides vanish.
    pub relative_imbalance: f64,
    /// `∫ρ div v`
    pub rho_div_v: f64,
}

pub fn energy_report(grid: &Grid, params: &ApproxParams, state: &FlowState) -> Result<EnergyLedger> {
    check_state(grid, state)?;
    let lame = &params.lame;
    let (vx, vy) = (&state.v.x, &state.v.y);
    let [ux, uy] = grid.grad(vx);
    let [wx, wy] = grid.grad(vy);
    let div: Vec<f64> = ux.iter().zip(&wy).map(|(a, b)| a + b).collect();
    let d2: Vec<f64> = (0..grid.len())
        .map(|k| ux[k].powi(2) + wy[k].powi(2) + 0.5 * (uy[k] + wx[k]).powi(2))
        .collect();
    let shear = 2.0 * lame.mu * grid.quad(&d2);
    let bulk = lame.nu * grid.dot(&div, &div);
    let mut tang = vec![0.0; grid.len()];
    for b in grid.boundary() {
        let k = b.index;
        tang[k] = (vx[k] * b.tangent[0] + vy[k] * b.tangent[1]).powi(2);
    }
    let friction = lame.friction * grid.boundary_quad(&tang);
    let [rx, ry] = grid.grad(&state.rho);
    let mut diff = Vec::with_capacity(grid.len());
    let mut relax = Vec::with_capacity(grid.len());
    let mut work = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let r = state.rho[k];
        if r <= 0.0 {
            return Err(SolverError::domain(format!("energy ledger needs rho > 0, got {r} at node {k}")));
        }
        diff.push(params.law.derivative(r) / r * (rx[k].powi(2) + ry[k].powi(2)));
        relax.push((r - params.h) * params.law.energy_primitive(r)?);
        let q = params.cutoff.k(r) * r;
        work.push((q * params.fr.x[k] + params.force.x[k]) * vx[k] + (q * params.fr.y[k] + params.force.y[k]) * vy[k]);
    }
    let density_diffusion = params.eps * grid.quad(&diff);
    let relaxation = -params.eps * grid.quad(&relax);
    let work = grid.quad(&work);
    let lhs = shear + bulk + friction + density_diffusion;
    let rhs = relaxation + work;
    let imbalance = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs());
    Ok(EnergyLedger {
        shear,
        bulk,
        friction,
        density_diffusion,
        relaxation,
        work,
        lhs,
        rhs,
        imbalance,
        relative_imbalance: if scale > 0.0 { imbalance.abs() / scale } else { 0.0 },
        rho_div_v: grid.dot(&state.rho, &div),
    })
}

/// Regularity class predicted from the density range and `‖∇v‖∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LionsBlock {
    pub alpha: f64,
    /// Point of `[ρ_min, ρ_max]` where `π'(t)t` is smallest.
    pub alpha_at: f64,
    pub kappa: f64,
    pub k: u64,
    /// `κ − k`
    pub fraction: f64,
    pub predicted: String,
}

/// `α`, `κ = α / ((2μ+ν) g)`, its integer and fractional parts, and the
/// predicted Hölder class, with `g = ‖∇v‖∞`.
pub fn lions_block(law: &PressureLaw, mu: f64, nu: f64, rho_min: f64, rho_max: f64, grad_v_inf: f64) -> Result<LionsBlock> {
    if !(rho_min > 0.0) {
        return Err(SolverError::domain(format!("regularity prediction needs min rho > 0, got {rho_min}")));
    }
    if rho_max < rho_min {
        return Err(SolverError::domain("rho_max >= rho_min required"));
    }
    let (alpha_at, alpha) = minimize_scalar(|t| law.derivative(t) * t, rho_min, rho_max, 1e-12 * rho_max);
    let (kappa, k, fraction, predicted) = classify(alpha, mu, nu, grad_v_inf);
    Ok(LionsBlock {
        alpha,
        alpha_at,
        kappa,
        k,
        fraction,
        predicted,
    })
}

/// `κ`, `k = ⌊κ⌋`, `κ − k` and the predicted class for a given `α`.
pub fn classify(alpha: f64, mu: f64, nu: f64, grad_v_inf: f64) -> (f64, u64, f64, String) {
    if !(grad_v_inf > 0.0) {
        return (f64::INFINITY, u64::MAX, 0.0, "rho, v, omega, G smooth (grad v vanishes)".into());
    }
    let kappa = alpha / ((2.0 * mu + nu) * grad_v_inf);
    let k = kappa.floor();
    let fraction = kappa - k;
    let ku = k as u64;
    let predicted = if fraction > 0.0 {
        format!("rho in C^{{{ku},{fraction}}}; v, omega, G in C^{{{},{fraction}}}", ku + 1)
    } else if ku >= 1 {
        format!("rho in C^{{{},eta}}; v, omega, G in C^{{{ku},eta}} for every eta < 1", ku - 1)
    } else {
        "rho in C^0; v in C^1".into()
    };
    (kappa, ku, fraction, predicted)
}

/// Pointwise largest Frobenius norm of `∇v`.
pub fn grad_v_inf(grid: &Grid, state: &FlowState) -> f64 {
    let [ux, uy] = grid.grad(&state.v.x);
    let [wx, wy] = grid.grad(&state.v.y);
    (0..grid.len())
        .map(|k| (ux[k].powi(2) + uy[k].powi(2) + wx[k].powi(2) + wy[k].powi(2)).sqrt())
        .fold(0.0, f64::max)
}

pub fn lions_report(grid: &Grid, params: &ApproxParams, state: &FlowState) -> Result<LionsBlock> {
    check_state(grid, state)?;
    lions_block(
        &params.law,
        params.lame.mu,
        params.lame.nu,
        state.rho.min(),
        state.rho.max(),
        grad_v_inf(grid, state),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BogovskiiCheck {
    /// `‖div_h ψ − f‖₂ / ‖f‖₂` after removing the mean of `f`.
    pub div_residual: f64,
    /// `‖ψ‖_{W12} / ‖f‖₂`
    pub stability_ratio: f64,
}

pub fn bogovskii_check(grid: &Grid, f: &ScalarField) -> Result<BogovskiiCheck> {
    let l = divergence_lift(grid, f)?;
    Ok(BogovskiiCheck {
        div_residual: l.div_residual,
        stability_ratio: l.stability_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub bank_size: usize,
    pub seed: u64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self { bank_size: 32, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(skip)]
    pub g: ScalarField,
    #[serde(skip)]
    pub omega: ScalarField,
    pub g_l2: f64,
    pub g_inf: f64,
    /// `‖G‖∞` with `π` in place of `P`; absent when `ρ ≤ 0` somewhere.
    pub g_limit_inf: Option<f64>,
    pub omega_bc_residual: f64,
    pub flux_gradient: FluxGradient,
    pub energy: EnergyLedger,
    /// Limit identities with `P`.
    pub weak_regularized: WeakResiduals,
    /// Limit identities with `π`.
    pub weak_limit: Option<WeakResiduals>,
    /// Identities of the regularized system itself.
    pub weak_approximate: WeakResiduals,
    pub rho_div_v: f64,
    /// `∫ρ div v / (‖ρ‖₂ ‖∇v‖₂)`
    pub rho_div_v_normalized: f64,
    pub lions: Option<LionsBlock>,
    /// Lift of `P(ρ)` minus its mean.
    pub bogovskii: BogovskiiCheck,
}

/// Runs every diagnostic on one state.
pub fn diagnose(grid: &Grid, params: &ApproxParams, state: &FlowState, opts: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    check_state(grid, state)?;
    let g = effective_flux(grid, params, state, FluxMode::Regularized)?;
    let positive = state.rho.min() > 0.0;
    let g_limit_inf = if positive {
        Some(effective_flux(grid, params, state, FluxMode::Limit)?.linf)
    } else {
        None
    };
    let vort = vorticity_check(grid, params, state)?;
    let energy = energy_report(grid, params, state)?;
    let weak_regularized = weak_residual(grid, params, state, opts.bank_size, opts.seed, WeakForm::Limit(FluxMode::Regularized))?;
    let weak_limit = if positive {
        Some(weak_residual(grid, params, state, opts.bank_size, opts.seed, WeakForm::Limit(FluxMode::Limit))?)
    } else {
        None
    };
    let weak_approximate = weak_residual(grid, params, state, opts.bank_size, opts.seed, WeakForm::Approximate)?;
    let denom = grid.l2(&state.rho) * grad_l2(grid, &state.v);
    let p = ScalarField(state.rho.iter().map(|&r| params.table.p(r)).collect());
    Ok(DiagnosticsReport {
        g_l2: g.l2,
        g_inf: g.linf,
        g: g.field,
        g_limit_inf,
        omega_bc_residual: vort.bc_residual,
        omega: vort.omega,
        flux_gradient: flux_gradient_residual(grid, params, state)?,
        rho_div_v: energy.rho_div_v,
        rho_div_v_normalized: if denom > 0.0 { energy.rho_div_v / denom } else { 0.0 },
        energy,
        weak_regularized,
        weak_limit,
        weak_approximate,
        lions: if positive { Some(lions_report(grid, params, state)?) } else { None },
        bogovskii: bogovskii_check(grid, &p)?,
    })
}

fn check_state(grid: &Grid, state: &FlowState) -> Result<()> {
    check_len(grid.len(), state.rho.len())?;
    check_len(grid.len(), state.v.len())
}
