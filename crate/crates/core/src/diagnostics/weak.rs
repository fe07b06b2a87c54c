//! Weak-form residuals against a seeded bank of smooth test functions.
//!
//! Scalar tests are quadratic polynomials plus one trigonometric mode in
//! coordinates scaled to the domain. Vector tests multiply two such scalars
//! by a frame in which the normal component carries a factor vanishing on
//! the wall, so `φ·n = 0` holds exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pressure, FluxMode};
use crate::approx::{ApproxParams, FlowState};
use crate::error::{Result, SolverError};
use crate::geometry::{Grid, Shape};
use crate::mms::Jet;

/// Which pair of integral identities is tested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakForm {
    /// Identities of the limit problem with the chosen pressure.
    Limit(FluxMode),
    /// Identities of the regularized system, including the `ε` terms and
    /// the cutoff, with `P`.
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakResiduals {
    pub form: WeakForm,
    /// Worst `|Σ terms| / max_term ∫|integrand|` over the bank.
    pub momentum: f64,
    pub continuity: f64,
    /// Worst `|Σ terms|` over the bank.
    pub momentum_abs: f64,
    pub continuity_abs: f64,
    pub bank_size: usize,
    pub seed: u64,
}

/// Quadratic polynomial plus one product of trigonometric modes.
#[derive(Clone, Copy, Debug)]
struct SmoothScalar {
    c: [f64; 6],
    amp: f64,
    k: [f64; 2],
    phase: [f64; 2],
}

impl SmoothScalar {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut c = [0.0; 6];
        for v in &mut c {
            *v = rng.random_range(-1.0..1.0);
        }
        Self {
            c,
            amp: rng.random_range(-1.0..1.0),
            k: [rng.random_range(1..=3) as f64, rng.random_range(1..=3) as f64],
            phase: [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)],
        }
    }

    fn eval(&self, x: Jet, y: Jet) -> Jet {
        let c = &self.c;
        let pi = std::f64::consts::PI;
        let poly = x * c[1] + y * c[2] + x * y * c[3] + x * x * c[4] + y * y * c[5] + c[0];
        let trig = (x * (self.k[0] * pi) + self.phase[0]).sin() * (y * (self.k[1] * pi) + self.phase[1]).cos();
        poly + trig * self.amp
    }
}

/// Maps physical coordinates to the scaled ones and builds the wall frame.
struct Frame {
    shape: Shape,
}

impl Frame {
    fn scaled(&self, x: f64, y: f64) -> (Jet, Jet) {
        match self.shape {
            Shape::Rectangle { width, height } => (Jet::x(x) * (2.0 / width) - 1.0, Jet::y(y) * (2.0 / height) - 1.0),
            Shape::Annulus { r_out, .. } => (Jet::x(x) * (1.0 / r_out), Jet::y(y) * (1.0 / r_out)),
        }
    }

    fn scalar(&self, s: &SmoothScalar, x: f64, y: f64) -> Jet {
        let (a, b) = self.scaled(x, y);
        s.eval(a, b)
    }

    fn vector(&self, s: &[SmoothScalar; 2], x: f64, y: f64) -> [Jet; 2] {
        let (a, b) = self.scaled(x, y);
        let (f, g) = (s[0].eval(a, b), s[1].eval(a, b));
        match self.shape {
            Shape::Rectangle { .. } => [f * ((a * a) * -1.0 + 1.0), g * ((b * b) * -1.0 + 1.0)],
            Shape::Annulus { r_in, r_out } => {
                let (px, py) = (Jet::x(x), Jet::y(y));
                let r = (px * px + py * py).sqrt();
                let bump = (r - r_in) * (r * -1.0 + r_out) * (4.0 / (r_out - r_in).powi(2));
                let inv = r.recip();
                let (ex, ey) = (px * inv, py * inv);
                let normal = f * bump;
                [normal * ex - g * ey, normal * ey + g * ex]
            }
        }
    }
}

/// Value and `∫|integrand|` of one integral.
#[derive(Clone, Copy, Debug, Default)]
struct Term {
    value: f64,
    size: f64,
}

fn term(grid: &Grid, f: &[f64]) -> Term {
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    Term {
        value: grid.quad(f),
        size: grid.quad(&abs),
    }
}

fn boundary_term(grid: &Grid, f: &[f64]) -> Term {
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    Term {
        value: grid.boundary_quad(f),
        size: grid.boundary_quad(&abs),
    }
}

/// `(|Σ|, |Σ| / largest term size)`.
fn residual(terms: &[Term]) -> (f64, f64) {
    let sum = terms.iter().map(|t| t.value).sum::<f64>().abs();
    let scale = terms.iter().map(|t| t.size).fold(0.0, f64::max);
    (sum, if scale > 0.0 { sum / scale } else { 0.0 })
}

struct Evaluator<'a> {
    grid: &'a Grid,
    params: &'a ApproxParams,
    state: &'a FlowState,
    form: WeakForm,
    grad_rho: [Vec<f64>; 2],
    grad_v: [[Vec<f64>; 2]; 2],
    q: Vec<f64>,
    p_shifted: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(grid: &'a Grid, params: &'a ApproxParams, state: &'a FlowState, form: WeakForm) -> Result<Self> {
        let mode = match form {
            WeakForm::Limit(m) => m,
            WeakForm::Approximate => FluxMode::Regularized,
        };
        let reference = pressure(params, mode, params.h)?;
        let p_shifted = state
            .rho
            .iter()
            .map(|&r| Ok(pressure(params, mode, r)? - reference))
            .collect::<Result<Vec<f64>>>()?;
        let q = state
            .rho
            .iter()
            .map(|&r| match form {
                WeakForm::Limit(_) => r,
                WeakForm::Approximate => params.cutoff.k(r) * r,
            })
            .collect();
        Ok(Self {
            grid,
            params,
            state,
            form,
            grad_rho: grid.grad(&state.rho),
            grad_v: [grid.grad(&state.v.x), grid.grad(&state.v.y)],
            q,
            p_shifted,
        })
    }

    fn continuity(&self, eta: &[Jet]) -> Vec<Term> {
        let g = self.grid;
        let n = g.len();
        let (v, rho) = (&self.state.v, &self.state.rho);
        let flux: Vec<f64> = (0..n)
            .map(|k| self.q[k] * (v.x[k] * eta[k].g[0] + v.y[k] * eta[k].g[1]))
            .collect();
        match self.form {
            WeakForm::Limit(_) => vec![term(g, &flux)],
            WeakForm::Approximate => {
                let eps = self.params.eps;
                let neg: Vec<f64> = flux.iter().map(|f| -f).collect();
                let diff: Vec<f64> = (0..n)
                    .map(|k| eps * (self.grad_rho[0][k] * eta[k].g[0] + self.grad_rho[1][k] * eta[k].g[1]))
                    .collect();
                let mass: Vec<f64> = (0..n).map(|k| eps * rho[k] * eta[k].v).collect();
                let target: Vec<f64> = (0..n).map(|k| -eps * self.params.h * eta[k].v).collect();
                vec![term(g, &neg), term(g, &diff), term(g, &mass), term(g, &target)]
            }
        }
    }

    fn momentum(&self, phi: &[[Jet; 2]]) -> Vec<Term> {
        let g = self.grid;
        let n = g.len();
        let p = self.params;
        let lame = &p.lame;
        let v = [&self.state.v.x, &self.state.v.y];
        let gv = &self.grad_v;
        let fr = [&p.fr.x, &p.fr.y];
        let force = [&p.force.x, &p.force.y];
        let mut conv = vec![0.0; n];
        let mut shear = vec![0.0; n];
        let mut bulk = vec![0.0; n];
        let mut pres = vec![0.0; n];
        let mut forcing = vec![0.0; n];
        let skew = matches!(self.form, WeakForm::Approximate);
        for k in 0..n {
            let f = &phi[k];
            let mut vv_grad = 0.0;
            let mut adv = 0.0;
            let mut dd = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    vv_grad += v[i][k] * v[j][k] * f[i].g[j];
                    adv += v[j][k] * gv[i][j][k] * f[i].v;
                    let dv = 0.5 * (gv[i][j][k] + gv[j][i][k]);
                    let dphi = 0.5 * (f[i].g[j] + f[j].g[i]);
                    dd += dv * dphi;
                }
            }
            let q = self.q[k];
            conv[k] = if skew {
                0.5 * q * (adv - vv_grad)
            } else {
                -q * vv_grad
            };
            shear[k] = 2.0 * lame.mu * dd;
            let div_v = gv[0][0][k] + gv[1][1][k];
            let div_phi = f[0].g[0] + f[1].g[1];
            bulk[k] = lame.nu * div_v * div_phi;
            pres[k] = -self.p_shifted[k] * div_phi;
            forcing[k] = -((q * fr[0][k] + force[0][k]) * f[0].v + (q * fr[1][k] + force[1][k]) * f[1].v);
        }
        let mut wall = vec![0.0; n];
        for b in g.boundary() {
            let k = b.index;
            let vt = v[0][k] * b.tangent[0] + v[1][k] * b.tangent[1];
            let pt = phi[k][0].v * b.tangent[0] + phi[k][1].v * b.tangent[1];
            wall[k] = lame.friction * vt * pt;
        }
        vec![
            term(g, &conv),
            term(g, &shear),
            term(g, &bulk),
            boundary_term(g, &wall),
            term(g, &pres),
            term(g, &forcing),
        ]
    }
}

/// Worst relative residual of both identities over `bank_size` seeded test
/// functions of each kind.
pub fn weak_residual(
    grid: &Grid,
    params: &ApproxParams,
    state: &FlowState,
    bank_size: usize,
    seed: u64,
    form: WeakForm,
) -> Result<WeakResiduals> {
    if bank_size < 10 {
        return Err(SolverError::config(format!("test bank needs at least 10 functions, got {bank_size}")));
    }
    super::check_state(grid, state)?;
    let ev = Evaluator::new(grid, params, state, form)?;
    let frame = Frame { shape: grid.shape() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mom, mut cont) = ((0.0_f64, 0.0_f64), (0.0_f64, 0.0_f64));
    for _ in 0..bank_size {
        let s = SmoothScalar::random(&mut rng);
        let pair = [SmoothScalar::random(&mut rng), SmoothScalar::random(&mut rng)];
        let eta: Vec<Jet> = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.point(k);
                frame.scalar(&s, x, y)
            })
            .collect();
        let phi: Vec<[Jet; 2]> = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.point(k);
                frame.vector(&pair, x, y)
            })
            .collect();
        let (c_abs, c_rel) = residual(&ev.continuity(&eta));
        let (m_abs, m_rel) = residual(&ev.momentum(&phi));
        cont = (cont.0.max(c_abs), cont.1.max(c_rel));
        mom = (mom.0.max(m_abs), mom.1.max(m_rel));
    }
    Ok(WeakResiduals {
        form,
        momentum: mom.1,
        continuity: cont.1,
        momentum_abs: mom.0,
        continuity_abs: cont.0,
        bank_size,
        seed,
    })
}

/// Continuity residual for one prescribed scalar test function.
#[cfg(test)]
pub(crate) fn continuity_for(grid: &Grid, params: &ApproxParams, state: &FlowState, form: WeakForm, eta: impl Fn(Jet, Jet) -> Jet) -> Result<f64> {
    let ev = Evaluator::new(grid, params, state, form)?;
    let e = crate::mms::jets(grid, eta);
    Ok(ev.continuity(&e).iter().map(|t| t.value).sum())
}

/// Checks `φ·n = 0` for the vector tests of a bank.
#[cfg(test)]
pub(crate) fn wall_normal_defect(grid: &Grid, seed: u64) -> f64 {
    let frame = Frame { shape: grid.shape() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = [SmoothScalar::random(&mut rng), SmoothScalar::random(&mut rng)];
    grid.boundary()
        .iter()
        .map(|b| {
            let [x, y] = grid.point(b.index);
            let f = frame.vector(&pair, x, y);
            (f[0].v * b.normal[0] + f[1].v * b.normal[1]).abs()
        })
        .fold(0.0, f64::max)
}
