//! Discrete residual and Jacobian of the coupled approximate system.
//!
//! Unknowns are packed as `[ρ; v₁; v₂]`, followed by the rigid-rotation
//! multiplier when the Lamé block needs one. Continuity is written in
//! control-volume form (face fluxes of `K(ρ)ρv`, dual-mesh Laplacian), so
//! its quadrature-weighted sum is `ε∫(ρ − h)` exactly. Momentum rows use
//! the collocated difference operators of the grid.

use crate::elliptic::{assemble_lame, control_volume_laplacian, dual_faces};
use crate::geometry::{Grid, VectorField};
use crate::sparse::{CsrMatrix, TripletBuilder};

use super::ApproxParams;

#[derive(Clone, Copy, Debug)]
struct FluxFace {
    i: usize,
    j: usize,
    length: f64,
    dir: [f64; 2],
}

/// Residual map `R(x; t)` of the approximate system on one grid.
pub struct CoupledSystem<'a> {
    grid: &'a Grid,
    params: &'a ApproxParams,
    faces: Vec<FluxFace>,
    cv_lap: CsrMatrix,
    lame: CsrMatrix,
    rotation: Option<(Vec<f64>, Vec<f64>)>,
}

/// Pointwise constitutive data at one density value.
#[derive(Clone, Copy, Debug)]
struct Local {
    /// `K(ρ)ρ`
    q: f64,
    /// `d(K(ρ)ρ)/dρ`
    dq: f64,
    /// `P'(ρ)`
    dp: f64,
    /// `P''(ρ)`
    ddp: f64,
}

impl<'a> CoupledSystem<'a> {
    pub fn new(grid: &'a Grid, params: &'a ApproxParams) -> Self {
        let n = grid.len();
        let faces = dual_faces(grid)
            .into_iter()
            .map(|f| {
                let [xi, yi] = grid.point(f.i);
                let [xj, yj] = grid.point(f.j);
                let chord = (xj - xi).hypot(yj - yi);
                FluxFace {
                    i: f.i,
                    j: f.j,
                    length: f.coupling * f.dist,
                    dir: [(xj - xi) / chord, (yj - yi) / chord],
                }
            })
            .collect();
        let mut t = TripletBuilder::new();
        assemble_lame(&mut t, grid, &params.lame, 0, 0, 1.0);
        let lame = t.build(2 * n, 2 * n);
        let rotation = params.lame.needs_rotation_constraint(grid).then(|| {
            let mut col = vec![0.0; 3 * n];
            for &k in grid.interior() {
                let [x, y] = grid.point(k);
                col[n + k] = -y;
                col[2 * n + k] = x;
            }
            let mut row = vec![0.0; 3 * n];
            for (k, w) in grid.weights().iter().enumerate() {
                let [x, y] = grid.point(k);
                row[n + k] = -w * y;
                row[2 * n + k] = w * x;
            }
            (col, row)
        });
        Self {
            grid,
            params,
            faces,
            cv_lap: control_volume_laplacian(grid),
            lame,
            rotation,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn has_rotation(&self) -> bool {
        self.rotation.is_some()
    }

    /// Number of unknowns including a rotation multiplier.
    pub fn dim(&self) -> usize {
        3 * self.grid.len() + usize::from(self.has_rotation())
    }

    pub fn pack(&self, rho: &[f64], v: &VectorField, multiplier: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(rho);
        x.extend_from_slice(&v.x);
        x.extend_from_slice(&v.y);
        if self.has_rotation() {
            x.push(multiplier);
        }
        x
    }

    fn local(&self, rho: f64) -> Local {
        let (k, dk) = self.params.cutoff.k_and_derivative(rho);
        let table = &self.params.table;
        Local {
            q: k * rho,
            dq: dk * rho + k,
            dp: table.p_prime(rho),
            ddp: table.p_second(rho),
        }
    }

    fn locals(&self, rho: &[f64]) -> Vec<Local> {
        rho.iter().map(|&r| self.local(r)).collect()
    }

    /// Control-volume divergence of `K(ρ)ρv`.
    pub fn transport(&self, rho: &[f64], vx: &[f64], vy: &[f64]) -> Vec<f64> {
        let w = self.grid.weights();
        let q: Vec<f64> = rho.iter().map(|&r| self.params.cutoff.k(r) * r).collect();
        let mut d = vec![0.0; rho.len()];
        for f in &self.faces {
            let [e1, e2] = f.dir;
            let qi = q[f.i] * (vx[f.i] * e1 + vy[f.i] * e2);
            let qj = q[f.j] * (vx[f.j] * e1 + vy[f.j] * e2);
            let flux = 0.5 * f.length * (qi + qj);
            d[f.i] += flux / w[f.i];
            d[f.j] -= flux / w[f.j];
        }
        d
    }

    /// `div(K(ρ)ρv) − εΔρ + ε(ρ − h)` at every node.
    pub fn continuity(&self, rho: &[f64], vx: &[f64], vy: &[f64]) -> Vec<f64> {
        let eps = self.params.eps;
        let h = self.params.h;
        let lap = self.cv_lap.mul_vec(rho);
        self.transport(rho, vx, vy)
            .into_iter()
            .zip(lap)
            .zip(rho)
            .map(|((d, l), r)| d - eps * l + eps * (r - h))
            .collect()
    }

    /// Nonlinear momentum terms `½div(qv⊗v) + ½q v·∇v + ∇P − q fr − F`
    /// at every node, `q = K(ρ)ρ`.
    pub fn momentum_terms(&self, rho: &[f64], vx: &[f64], vy: &[f64]) -> [Vec<f64>; 2] {
        let ops = self.grid.ops();
        let d = [&ops.dx, &ops.dy];
        let p = self.params;
        let loc = self.locals(rho);
        let v = [vx, vy];
        let grad_v = [[d[0].mul_vec(vx), d[1].mul_vec(vx)], [d[0].mul_vec(vy), d[1].mul_vec(vy)]];
        let grad_rho = [d[0].mul_vec(rho), d[1].mul_vec(rho)];
        let fr = [&p.fr.x, &p.fr.y];
        let force = [&p.force.x, &p.force.y];
        let mut out = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let mut flux_div = vec![0.0; rho.len()];
            for (j, dj) in d.iter().enumerate() {
                let prod: Vec<f64> = (0..rho.len()).map(|m| loc[m].q * v[i][m] * v[j][m]).collect();
                for (acc, val) in flux_div.iter_mut().zip(dj.mul_vec(&prod)) {
                    *acc += val;
                }
            }
            out[i] = (0..rho.len())
                .map(|k| {
                    let adv = vx[k] * grad_v[i][0][k] + vy[k] * grad_v[i][1][k];
                    0.5 * flux_div[k] + 0.5 * loc[k].q * adv + loc[k].dp * grad_rho[i][k]
                        - loc[k].q * fr[i][k]
                        - force[i][k]
                })
                .collect();
        }
        out
    }

    /// Full residual `R(x; t)`.
    pub fn residual(&self, x: &[f64], t: f64) -> Vec<f64> {
        let g = self.grid;
        let n = g.len();
        let (rho, vx, vy) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n]);
        let mut r = self.continuity(rho, vx, vy);
        let lv = self.lame.mul_vec(&x[n..3 * n]);
        r.extend_from_slice(&lv);
        let nl = self.momentum_terms(rho, vx, vy);
        for &k in g.interior() {
            r[n + k] += t * nl[0][k];
            r[2 * n + k] += t * nl[1][k];
        }
        if let Some((col, row)) = &self.rotation {
            let lam = x[3 * n];
            for (ri, ci) in r.iter_mut().zip(col) {
                *ri += lam * ci;
            }
            r.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
        }
        r
    }

    /// Jacobian of the continuity rows with respect to `ρ` only.
    pub(crate) fn continuity_rho_jacobian(&self, rho: &[f64], vx: &[f64], vy: &[f64]) -> CsrMatrix {
        let n = self.grid.len();
        let mut t = TripletBuilder::new();
        self.push_continuity(&mut t, rho, vx, vy, false);
        t.build(n, n)
    }

    fn push_continuity(&self, t: &mut TripletBuilder, rho: &[f64], vx: &[f64], vy: &[f64], with_v: bool) {
        let n = self.grid.len();
        let eps = self.params.eps;
        let w = self.grid.weights();
        let loc = self.locals(rho);
        for f in &self.faces {
            let [e1, e2] = f.dir;
            let half = 0.5 * f.length;
            for m in [f.i, f.j] {
                let vn = vx[m] * e1 + vy[m] * e2;
                let d_rho = half * loc[m].dq * vn;
                let d_v = [half * loc[m].q * e1, half * loc[m].q * e2];
                for (row, sign) in [(f.i, 1.0 / w[f.i]), (f.j, -1.0 / w[f.j])] {
                    t.push(row, m, sign * d_rho);
                    if with_v {
                        t.push(row, n + m, sign * d_v[0]);
                        t.push(row, 2 * n + m, sign * d_v[1]);
                    }
                }
            }
        }
        t.add_rows(&self.cv_lap, 0..n, 0, 0, -eps);
        for k in 0..n {
            t.push(k, k, eps);
        }
    }

    /// Sparse core of the Jacobian (`3n × 3n`) and its dense border.
    pub(crate) fn jacobian(&self, x: &[f64], t: f64) -> (CsrMatrix, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let g = self.grid;
        let n = g.len();
        let ops = g.ops();
        let d = [&ops.dx, &ops.dy];
        let (rho, vx, vy) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n]);
        let v = [vx, vy];
        let loc = self.locals(rho);
        let p = self.params;
        let fr = [&p.fr.x, &p.fr.y];
        let mut tb = TripletBuilder::new();
        self.push_continuity(&mut tb, rho, vx, vy, true);
        tb.add_rows(&self.lame, 0..2 * n, n, n, 1.0);
        let vcol = |l: usize, m: usize| n * (1 + l) + m;
        for &k in g.interior() {
            let lk = loc[k];
            let gv = [
                [d[0].row_dot(k, vx), d[1].row_dot(k, vx)],
                [d[0].row_dot(k, vy), d[1].row_dot(k, vy)],
            ];
            let grho = [d[0].row_dot(k, rho), d[1].row_dot(k, rho)];
            for i in 0..2 {
                let row = n * (1 + i) + k;
                for (j, dj) in d.iter().enumerate() {
                    for (m, dv) in dj.row(k) {
                        let lm = loc[m];
                        let c = 0.5 * t * dv;
                        tb.push(row, m, c * lm.dq * v[i][m] * v[j][m]);
                        tb.push(row, vcol(i, m), c * lm.q * v[j][m]);
                        tb.push(row, vcol(j, m), c * lm.q * v[i][m]);
                        tb.push(row, vcol(i, m), c * lk.q * v[j][k]);
                    }
                }
                let adv = vx[k] * gv[i][0] + vy[k] * gv[i][1];
                let mut diag_rho = 0.5 * lk.dq * adv + lk.ddp * grho[i] - lk.dq * fr[i][k];
                diag_rho *= t;
                tb.push(row, k, diag_rho);
                for l in 0..2 {
                    tb.push(row, vcol(l, k), 0.5 * t * lk.q * gv[i][l]);
                }
                for (m, dv) in d[i].row(k) {
                    tb.push(row, m, t * lk.dp * dv);
                }
            }
        }
        let core = tb.build(3 * n, 3 * n);
        match &self.rotation {
            Some((col, row)) => (core, vec![col.clone()], vec![row.clone()]),
            None => (core, Vec::new(), Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ApproxParams;
    use crate::elliptic::LameParams;
    use crate::geometry::{build_grid, DomainSpec, Grid};
    use crate::pressure::{CutoffSpec, PressureLaw};

    fn check_jacobian(g: &Grid, friction: f64) {
        let n = g.len();
        let law = PressureLaw::default();
        let cutoff = CutoffSpec::from_outer(11.0, 2.6, 1.0);
        let fr = VectorField::from_fn(n, |k| {
            let [x, y] = g.point(k);
            [0.3 * y, -1.0 + 0.2 * x]
        });
        let force = VectorField::from_fn(n, |k| [0.1 * g.point(k)[1], 0.05]);
        let lame = LameParams { mu: 1.0, nu: 0.3, friction };
        let p = ApproxParams::new(0.05, lame, 1.0, law, cutoff, fr, force).unwrap();
        let sys = CoupledSystem::new(g, &p);
        // Densities sweep both transition zones of the cutoff.
        let rho: Vec<f64> = (0..n)
            .map(|k| {
                let [x, y] = g.point(k);
                1.0 + 1.4 * (3.0 * x + 2.0 * y).sin() * (0.5 + 0.5 * x.cos())
            })
            .collect();
        let v = VectorField::from_fn(n, |k| {
            let [x, y] = g.point(k);
            [0.4 * (x * y).sin() + 0.1, 0.3 * (x - y).cos()]
        });
        let x = sys.pack(&rho, &v, 0.2);
        let t = 0.7;
        let (core, cols, rows) = sys.jacobian(&x, t);
        let dense = core.to_dense();
        let r0 = sys.residual(&x, t);
        let dim = sys.dim();
        let mut worst: f64 = 0.0;
        for c in 0..dim {
            let step = 1e-6 * (1.0 + x[c].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += step;
            xm[c] -= step;
            let rp = sys.residual(&xp, t);
            let rm = sys.residual(&xm, t);
            for r in 0..dim {
                let fd = (rp[r] - rm[r]) / (2.0 * step);
                let exact = match (r < 3 * n, c < 3 * n) {
                    (true, true) => dense[r][c],
                    (true, false) => cols[0][r],
                    (false, true) => rows[0][c],
                    (false, false) => 0.0,
                };
                let scale = 1.0 + exact.abs() + r0[r].abs();
                worst = worst.max((fd - exact).abs() / scale);
            }
        }
        assert!(worst < 1e-5, "worst relative Jacobian mismatch {worst:e}");
    }

    #[test]
    fn jacobian_matches_central_differences_on_rectangle() {
        let g = Grid::build(DomainSpec::rectangle(1.2, 1.0, 7, 6)).unwrap();
        check_jacobian(&g, 0.5);
    }

    #[test]
    fn jacobian_matches_central_differences_on_frictionless_annulus() {
        let g = Grid::build(DomainSpec::annulus(0.5, 1.0, 5, 9)).unwrap();
        check_jacobian(&g, 0.0);
    }

    #[test]
    fn weighted_continuity_sum_is_exactly_the_mass_defect() {
        let g = build_grid(DomainSpec::annulus(0.5, 1.0, 9, 24)).unwrap();
        let n = g.len();
        let p = ApproxParams::zero_forcing(
            &g,
            0.01,
            LameParams { mu: 1.0, nu: 0.0, friction: 0.3 },
            1.0,
            PressureLaw::default(),
            CutoffSpec::from_outer(11.0, 4.0, 1.0),
        )
        .unwrap();
        let sys = CoupledSystem::new(&g, &p);
        let rho: Vec<f64> = (0..n).map(|k| 1.0 + 0.3 * g.point(k)[0]).collect();
        let v = VectorField::from_fn(n, |k| {
            let [x, y] = g.point(k);
            [-y * x, x * x]
        });
        let c = sys.continuity(&rho, &v.x, &v.y);
        let defect: Vec<f64> = rho.iter().map(|r| p.eps * (r - p.h)).collect();
        assert!((g.quad(&c) - g.quad(&defect)).abs() < 1e-13);
    }
}
