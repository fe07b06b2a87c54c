//! Linear elliptic kernels: Neumann and Dirichlet Poisson, the Lamé system
//! with slip/friction walls, and a discrete divergence lift.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SolverError};
use crate::geometry::{Grid, NormKind, ScalarField, Shape, VectorField};
use crate::sparse::{BorderedLu, CsrMatrix, SparseLu, TripletBuilder};

/// Relative residual above which a direct solve is reported as a failure.
const RESIDUAL_LIMIT: f64 = 1e-8;

fn checked(lu: &SparseLu, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (x, rel) = lu.solve(b)?;
    if rel > RESIDUAL_LIMIT {
        return Err(SolverError::LinearSolver(format!(
            "direct solve residual {rel:e} exceeds {RESIDUAL_LIMIT:e}"
        )));
    }
    Ok((x, rel))
}

/// Result of a Neumann solve.
#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub field: ScalarField,
    /// Constant `λ` with `−Δ_h ρ = f − λ`; zero for compatible data.
    pub shift: f64,
    /// True when `f` failed the compatibility test and was mean-corrected first.
    pub mean_corrected: bool,
    pub residual: f64,
}

/// Control-volume Laplacian with the equation at node 0 replaced by
/// `u₀ = 0`. The weighted rows of the operator sum to zero, so for data of
/// zero trapezoid mean the dropped equation holds automatically.
struct PinnedCvLaplacian {
    lu: SparseLu,
}

impl PinnedCvLaplacian {
    fn new(grid: &Grid, sign: f64) -> Result<Self> {
        let n = grid.len();
        let mut t = TripletBuilder::new();
        t.add_rows(&control_volume_laplacian(grid), 1..n, 0, 0, sign);
        t.push(0, 0, 1.0);
        Ok(Self {
            lu: SparseLu::new(t.build(n, n))?,
        })
    }

    /// `f` must have zero trapezoid mean.
    fn solve(&self, f: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut b = f.to_vec();
        b[0] = 0.0;
        checked(&self.lu, &b)
    }
}

/// Factored `−Δ_h ρ = f`, `∂ρ/∂n = 0`, with a prescribed mean.
///
/// `Δ_h` is the control-volume Laplacian: at wall nodes the half cell carries
/// a zero normal flux, so the discrete compatibility condition is exactly
/// `integrate(f) = 0`.
pub struct NeumannHandle<'g> {
    grid: &'g Grid,
    op: PinnedCvLaplacian,
}

impl<'g> NeumannHandle<'g> {
    pub fn new(grid: &'g Grid) -> Result<Self> {
        Ok(Self {
            grid,
            op: PinnedCvLaplacian::new(grid, -1.0)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn solve(&self, f: &[f64], mean: f64) -> Result<NeumannSolution> {
        let g = self.grid;
        check_len(g.len(), f.len())?;
        let integral = g.quad(f);
        let mean_corrected = integral.abs() > 1e-8 * g.l2(f) * g.area().sqrt();
        if mean_corrected {
            warn!("Neumann data incompatible (integral {integral:e}); subtracting its mean");
        }
        let shift = integral / g.area();
        let b: Vec<f64> = f.iter().map(|v| v - shift).collect();
        let (mut rho, residual) = self.op.solve(&b)?;
        let drift = mean - g.mean(&rho);
        rho.iter_mut().for_each(|v| *v += drift);
        Ok(NeumannSolution {
            field: ScalarField(rho),
            shift,
            mean_corrected,
            residual,
        })
    }
}

pub fn solve_neumann(grid: &Grid, f: &ScalarField, mean: f64) -> Result<ScalarField> {
    Ok(NeumannHandle::new(grid)?.solve(f, mean)?.field)
}

/// Factored `−Δ_h ω = f` with Dirichlet data.
pub struct DirichletHandle<'g> {
    grid: &'g Grid,
    lu: SparseLu,
}

impl<'g> DirichletHandle<'g> {
    pub fn new(grid: &'g Grid) -> Result<Self> {
        let n = grid.len();
        let mut t = TripletBuilder::new();
        t.add_rows(&grid.ops().lap, grid.interior().iter().copied(), 0, 0, -1.0);
        for b in grid.boundary() {
            t.push(b.index, b.index, 1.0);
        }
        Ok(Self {
            grid,
            lu: SparseLu::new(t.build(n, n))?,
        })
    }

    /// `g` is a full nodal field; only its boundary values are read.
    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<(ScalarField, f64)> {
        let n = self.grid.len();
        check_len(n, f.len())?;
        check_len(n, g.len())?;
        let mut b = f.to_vec();
        for node in self.grid.boundary() {
            b[node.index] = g[node.index];
        }
        let (x, rel) = checked(&self.lu, &b)?;
        Ok((ScalarField(x), rel))
    }
}

pub fn solve_dirichlet(grid: &Grid, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    Ok(DirichletHandle::new(grid)?.solve(f, g)?.0)
}

/// Viscosities and wall friction of the Lamé operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LameParams {
    pub mu: f64,
    pub nu: f64,
    pub friction: f64,
}

impl LameParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SolverError::config(format!("mu > 0 required, got {}", self.mu)));
        }
        if !(2.0 * self.mu + 3.0 * self.nu > 0.0 && self.nu.is_finite()) {
            return Err(SolverError::config(format!(
                "2 mu + 3 nu > 0 required, got mu = {}, nu = {}",
                self.mu, self.nu
            )));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(SolverError::config(format!(
                "friction >= 0 required, got {}",
                self.friction
            )));
        }
        Ok(())
    }

    /// The rigid rotation is a null mode exactly when the domain is a disc
    /// or annulus and the walls are frictionless.
    pub fn needs_rotation_constraint(&self, grid: &Grid) -> bool {
        matches!(grid.shape(), Shape::Annulus { .. }) && self.friction == 0.0
    }
}

/// Adds the Lamé block for unknowns `[w1; w2]` at `(row_off, col_off)`:
/// interior rows carry `−μΔw − (μ+ν)∇div w` scaled by `scale`, boundary
/// rows carry `w·n` and `2μ n·D(w)·τ + f w·τ`, corners pin `w = 0`.
pub(crate) fn assemble_lame(
    t: &mut TripletBuilder,
    grid: &Grid,
    p: &LameParams,
    row_off: usize,
    col_off: usize,
    scale: f64,
) {
    let n = grid.len();
    let ops = grid.ops();
    let (mu, lam) = (p.mu, p.mu + p.nu);
    let interior = grid.interior();
    let (r1, r2) = (row_off, row_off + n);
    let (c1, c2) = (col_off, col_off + n);
    let s = scale;
    t.add_rows(&ops.lap, interior.iter().copied(), r1, c1, -mu * s);
    t.add_rows(&ops.dxx, interior.iter().copied(), r1, c1, -lam * s);
    t.add_rows(&ops.dxy, interior.iter().copied(), r1, c2, -lam * s);
    for &k in interior {
        for (j, v) in ops.lap.row(k) {
            t.push(r2 + k, c2 + j, -mu * s * v);
        }
        for (j, v) in ops.dyy.row(k) {
            t.push(r2 + k, c2 + j, -lam * s * v);
        }
        for (j, v) in ops.dxy.row(k) {
            t.push(r2 + k, c1 + j, -lam * s * v);
        }
    }
    for b in grid.boundary() {
        let k = b.index;
        if b.is_corner() {
            t.push(r1 + k, c1 + k, 1.0);
            t.push(r2 + k, c2 + k, 1.0);
            continue;
        }
        let [n1, n2] = b.normal;
        let [t1, t2] = b.tangent;
        t.push(r1 + k, c1 + k, n1);
        t.push(r1 + k, c2 + k, n2);
        let cross = n1 * t2 + n2 * t1;
        for (j, v) in ops.dx.row(k) {
            t.push(r2 + k, c1 + j, mu * 2.0 * n1 * t1 * v);
            t.push(r2 + k, c2 + j, mu * cross * v);
        }
        for (j, v) in ops.dy.row(k) {
            t.push(r2 + k, c1 + j, mu * cross * v);
            t.push(r2 + k, c2 + j, mu * 2.0 * n2 * t2 * v);
        }
        t.push(r2 + k, c1 + k, p.friction * t1);
        t.push(r2 + k, c2 + k, p.friction * t2);
    }
}

/// Result of a Lamé solve.
#[derive(Clone, Debug)]
pub struct LameSolution {
    pub field: VectorField,
    /// Multiplier of the rigid-rotation constraint (zero when not imposed).
    pub rotation_multiplier: f64,
    pub residual: f64,
}

/// Factored Lamé system with slip/friction walls.
pub struct LameHandle<'g> {
    grid: &'g Grid,
    params: LameParams,
    rotation: bool,
    lu: BorderedLu,
}

impl<'g> LameHandle<'g> {
    pub fn new(grid: &'g Grid, params: LameParams) -> Result<Self> {
        params.validate()?;
        let n = grid.len();
        let rotation = params.needs_rotation_constraint(grid);
        let mut t = TripletBuilder::new();
        assemble_lame(&mut t, grid, &params, 0, 0, 1.0);
        let (mut cols, mut rows, mut corner) = (Vec::new(), Vec::new(), Vec::new());
        if rotation {
            let mut col = vec![0.0; 2 * n];
            for &k in grid.interior() {
                let [x, y] = grid.point(k);
                col[k] = -y;
                col[n + k] = x;
            }
            let mut row = vec![0.0; 2 * n];
            for (k, w) in grid.weights().iter().enumerate() {
                let [x, y] = grid.point(k);
                row[k] = -w * y;
                row[n + k] = w * x;
            }
            cols.push(col);
            rows.push(row);
            corner.push(0.0);
        }
        let lu = BorderedLu::new(t.build(2 * n, 2 * n), cols, rows, corner)?;
        Ok(Self {
            grid,
            params,
            rotation,
            lu,
        })
    }

    pub fn params(&self) -> &LameParams {
        &self.params
    }

    pub fn has_rotation_constraint(&self) -> bool {
        self.rotation
    }

    /// `tangential` is a full nodal field whose boundary values give the
    /// right-hand side of the friction condition; `None` means zero.
    pub fn solve(&self, rhs: &VectorField, tangential: Option<&[f64]>) -> Result<LameSolution> {
        let g = self.grid;
        let n = g.len();
        check_len(n, rhs.len())?;
        let mut b = vec![0.0; self.lu.dim()];
        for &k in g.interior() {
            b[k] = rhs.x[k];
            b[n + k] = rhs.y[k];
        }
        if let Some(tg) = tangential {
            check_len(n, tg.len())?;
            for node in g.boundary() {
                if !node.is_corner() {
                    b[n + node.index] = tg[node.index];
                }
            }
        }
        let (x, residual) = self.lu.solve(&b)?;
        if residual > RESIDUAL_LIMIT {
            return Err(SolverError::LinearSolver(format!(
                "Lamé solve residual {residual:e} exceeds {RESIDUAL_LIMIT:e}"
            )));
        }
        Ok(LameSolution {
            field: VectorField::new(ScalarField(x[..n].to_vec()), ScalarField(x[n..2 * n].to_vec())),
            rotation_multiplier: if self.rotation { x[2 * n] } else { 0.0 },
            residual,
        })
    }
}

pub fn solve_lame(
    grid: &Grid,
    params: LameParams,
    rhs: &VectorField,
    tangential: Option<&ScalarField>,
) -> Result<VectorField> {
    Ok(LameHandle::new(grid, params)?
        .solve(rhs, tangential.map(|t| &t[..]))?
        .field)
}

/// Face of the dual (control-volume) mesh between nodes `i` and `j`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Face {
    pub(crate) i: usize,
    pub(crate) j: usize,
    /// Length of the face divided by the node distance.
    pub(crate) coupling: f64,
    pub(crate) dist: f64,
    /// True for faces crossing the fast index direction.
    pub(crate) along_a: bool,
}

pub(crate) fn dual_faces(grid: &Grid) -> Vec<Face> {
    let [na, nb] = grid.dims();
    let [h0, h1] = grid.spacing();
    let trap = |i: usize, m: usize, h: f64| if i == 0 || i == m - 1 { 0.5 * h } else { h };
    let mut faces = Vec::new();
    match grid.shape() {
        Shape::Rectangle { .. } => {
            for b in 0..nb {
                for a in 0..na - 1 {
                    faces.push(Face {
                        i: grid.index(a, b),
                        j: grid.index(a + 1, b),
                        coupling: trap(b, nb, h1) / h0,
                        dist: h0,
                        along_a: true,
                    });
                }
            }
            for b in 0..nb - 1 {
                for a in 0..na {
                    faces.push(Face {
                        i: grid.index(a, b),
                        j: grid.index(a, b + 1),
                        coupling: trap(a, na, h0) / h1,
                        dist: h1,
                        along_a: false,
                    });
                }
            }
        }
        Shape::Annulus { r_in, .. } => {
            let radius = |a: usize| r_in + a as f64 * h0;
            for b in 0..nb {
                for a in 0..na - 1 {
                    let rf = radius(a) + 0.5 * h0;
                    faces.push(Face {
                        i: grid.index(a, b),
                        j: grid.index(a + 1, b),
                        coupling: rf * h1 / h0,
                        dist: h0,
                        along_a: true,
                    });
                }
            }
            for b in 0..nb {
                for a in 0..na {
                    let dist = radius(a) * h1;
                    faces.push(Face {
                        i: grid.index(a, b),
                        j: grid.index(a, (b + 1) % nb),
                        coupling: trap(a, na, h0) / dist,
                        dist,
                        along_a: false,
                    });
                }
            }
        }
    }
    faces
}

/// Dual-mesh Laplacian: face fluxes summed per control volume and divided
/// by its quadrature weight, with no flux through the wall.
pub fn control_volume_laplacian(grid: &Grid) -> CsrMatrix {
    let n = grid.len();
    let w = grid.weights();
    let mut t = Vec::new();
    for f in dual_faces(grid) {
        let (ci, cj) = (f.coupling / w[f.i], f.coupling / w[f.j]);
        t.extend([(f.i, f.j, ci), (f.i, f.i, -ci), (f.j, f.i, cj), (f.j, f.j, -cj)]);
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Result of [`divergence_lift`].
#[derive(Clone, Debug)]
pub struct LiftResult {
    /// Nodal field with `ψ·n = 0` on the wall and `ψ = 0` at corners.
    pub psi: VectorField,
    /// Mean of `f` removed before lifting.
    pub shift: f64,
    /// `‖div_h ψ − (f − shift)‖₂ / ‖f‖₂` in the control-volume divergence.
    pub div_residual: f64,
    /// `‖ψ‖_{W12} / ‖f‖₂` (zero for `f = 0`).
    pub stability_ratio: f64,
}

/// Control-volume lift: `N` solves the dual-mesh Neumann problem so that the
/// face divergence of its face gradient reproduces `f − mean(f)` exactly,
/// and `ψ` is the face gradient averaged back to nodes.
pub struct DivergenceLift<'g> {
    grid: &'g Grid,
    faces: Vec<Face>,
    op: PinnedCvLaplacian,
}

impl<'g> DivergenceLift<'g> {
    pub fn new(grid: &'g Grid) -> Result<Self> {
        Ok(Self {
            grid,
            faces: dual_faces(grid),
            op: PinnedCvLaplacian::new(grid, 1.0)?,
        })
    }

    /// Control-volume divergence of face gradients of `pot`.
    fn face_divergence(&self, pot: &[f64]) -> Vec<f64> {
        let w = self.grid.weights();
        let mut d = vec![0.0; pot.len()];
        for f in &self.faces {
            let flux = f.coupling * (pot[f.j] - pot[f.i]);
            d[f.i] += flux / w[f.i];
            d[f.j] -= flux / w[f.j];
        }
        d
    }

    fn nodal_gradient(&self, pot: &[f64]) -> VectorField {
        let g = self.grid;
        let n = g.len();
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let mut ca = vec![0u8; n];
        let mut cb = vec![0u8; n];
        for f in &self.faces {
            let grad = (pot[f.j] - pot[f.i]) / f.dist;
            let (acc, cnt) = if f.along_a {
                (&mut ga, &mut ca)
            } else {
                (&mut gb, &mut cb)
            };
            acc[f.i] += grad;
            acc[f.j] += grad;
            cnt[f.i] += 1;
            cnt[f.j] += 1;
        }
        for k in 0..n {
            ga[k] /= f64::from(ca[k].max(1));
            gb[k] /= f64::from(cb[k].max(1));
        }
        let annulus = g.is_annulus();
        let [na, _] = g.dims();
        let mut px = vec![0.0; n];
        let mut py = vec![0.0; n];
        for k in 0..n {
            let a = k % na;
            let b = k / na;
            let wall_a = a == 0 || a == na - 1;
            let wall_b = !annulus && (b == 0 || b == g.dims()[1] - 1);
            let comp_a = if wall_a { 0.0 } else { ga[k] };
            let comp_b = if wall_b { 0.0 } else { gb[k] };
            if annulus {
                let [x, y] = g.point(k);
                let r = x.hypot(y);
                let (c, s) = (x / r, y / r);
                px[k] = comp_a * c - comp_b * s;
                py[k] = comp_a * s + comp_b * c;
            } else {
                px[k] = comp_a;
                py[k] = comp_b;
            }
        }
        VectorField::new(ScalarField(px), ScalarField(py))
    }

    pub fn lift(&self, f: &[f64]) -> Result<LiftResult> {
        let g = self.grid;
        let n = g.len();
        check_len(n, f.len())?;
        let shift = g.mean(f);
        let b: Vec<f64> = f.iter().map(|v| v - shift).collect();
        let (pot, _) = self.op.solve(&b)?;
        let div = self.face_divergence(&pot);
        let fl2 = g.l2(f);
        let err: Vec<f64> = div.iter().zip(f).map(|(d, v)| d - (v - shift)).collect();
        let psi = self.nodal_gradient(&pot);
        let (div_residual, stability_ratio) = if fl2 > 0.0 {
            (
                g.l2(&err) / fl2,
                crate::geometry::vector_norm(g, &psi, NormKind::W12)? / fl2,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(LiftResult {
            psi,
            shift,
            div_residual,
            stability_ratio,
        })
    }
}

pub fn divergence_lift(grid: &Grid, f: &ScalarField) -> Result<LiftResult> {
    DivergenceLift::new(grid)?.lift(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    #[test]
    fn zero_data_gives_trivial_solutions() {
        let g = build_grid(DomainSpec::unit_square(10)).unwrap();
        let z = ScalarField::zeros(g.len());
        let rho = solve_neumann(&g, &z, 0.7).unwrap();
        assert!(rho.iter().all(|v| (v - 0.7).abs() < 1e-13));
        let p = LameParams {
            mu: 1.0,
            nu: 0.5,
            friction: 1.0,
        };
        let w = solve_lame(&g, p, &VectorField::zeros(g.len()), None).unwrap();
        assert!(w.max_abs() < 1e-14);
        let one = ScalarField::constant(g.len(), 1.0);
        let om = solve_dirichlet(&g, &z, &one).unwrap();
        assert!(om.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let l = divergence_lift(&g, &z).unwrap();
        assert_eq!(l.psi.max_abs(), 0.0);
        assert_eq!(l.stability_ratio, 0.0);
    }

    #[test]
    fn lame_rejects_bad_viscosities() {
        let g = build_grid(DomainSpec::unit_square(8)).unwrap();
        for (mu, nu, fr) in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 0.0, -0.1)] {
            let p = LameParams { mu, nu, friction: fr };
            assert!(matches!(LameHandle::new(&g, p), Err(SolverError::Config(_))));
        }
    }

    #[test]
    fn lift_is_tangential_and_exact_in_control_volume_divergence() {
        for spec in [DomainSpec::unit_square(12), DomainSpec::annulus(0.5, 1.0, 12, 40)] {
            let g = build_grid(spec).unwrap();
            let f = ScalarField(g.nodal(|x, y| x * y + x - 0.3 * y * y));
            let l = divergence_lift(&g, &f).unwrap();
            for b in g.boundary() {
                let k = b.index;
                let dot = l.psi.x[k] * b.normal[0] + l.psi.y[k] * b.normal[1];
                assert!(dot.abs() < 1e-14);
            }
            assert!((l.shift - g.mean(&f)).abs() < 1e-12);
            assert!(l.div_residual < 1e-11, "{}", l.div_residual);
        }
    }
}
