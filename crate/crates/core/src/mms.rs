//! Manufactured-solution harness for the elliptic kernels, built on a small
//! second-order forward-mode jet in two variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::elliptic::{DirichletHandle, LameHandle, LameParams, NeumannHandle};
use crate::error::{Result, SolverError};
use crate::geometry::{build_grid, DomainSpec, Grid, ScalarField, VectorField};

/// Value, gradient and Hessian `[xx, xy, yy]` of a function of `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [f64; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; 2],
            h: [0.0; 3],
        }
    }

    pub fn x(x: f64) -> Self {
        Self {
            v: x,
            g: [1.0, 0.0],
            h: [0.0; 3],
        }
    }

    pub fn y(y: f64) -> Self {
        Self {
            v: y,
            g: [0.0, 1.0],
            h: [0.0; 3],
        }
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let [gx, gy] = self.g;
        Self {
            v: f0,
            g: [f1 * gx, f1 * gy],
            h: [
                f2 * gx * gx + f1 * self.h[0],
                f2 * gx * gy + f1 * self.h[1],
                f2 * gy * gy + f1 * self.h[2],
            ],
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn recip(self) -> Self {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn laplacian(&self) -> f64 {
        self.h[0] + self.h[2]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        Jet {
            v: a.v * b.v,
            g: [a.g[0] * b.v + a.v * b.g[0], a.g[1] * b.v + a.v * b.g[1]],
            h: [
                a.h[0] * b.v + 2.0 * a.g[0] * b.g[0] + a.v * b.h[0],
                a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1],
                a.h[2] * b.v + 2.0 * a.g[1] * b.g[1] + a.v * b.h[2],
            ],
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        self + (-c)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet {
            v: self.v * c,
            g: [self.g[0] * c, self.g[1] * c],
            h: [self.h[0] * c, self.h[1] * c, self.h[2] * c],
        }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

/// Evaluates a jet-valued function at every node.
pub fn jets(grid: &Grid, f: impl Fn(Jet, Jet) -> Jet) -> Vec<Jet> {
    (0..grid.len())
        .map(|k| {
            let [x, y] = grid.point(k);
            f(Jet::x(x), Jet::y(y))
        })
        .collect()
}

pub fn values(j: &[Jet]) -> ScalarField {
    ScalarField(j.iter().map(|j| j.v).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsCase {
    Neumann,
    Lame,
    Dirichlet,
}

impl std::str::FromStr for MmsCase {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann" => Ok(Self::Neumann),
            "lame" => Ok(Self::Lame),
            "dirichlet" => Ok(Self::Dirichlet),
            other => Err(SolverError::config(format!(
                "unknown MMS case '{other}' (expected neumann, lame or dirichlet)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsGeometry {
    /// Unit square, `n × n` nodes.
    Rectangle,
    /// Annulus `0.5 < r < 1`, `n` radial by `4n` angular nodes.
    Annulus,
}

pub const ANNULUS_RADII: (f64, f64) = (0.5, 1.0);

impl MmsGeometry {
    pub fn spec(self, n: usize) -> DomainSpec {
        match self {
            Self::Rectangle => DomainSpec::unit_square(n),
            Self::Annulus => DomainSpec::annulus(ANNULUS_RADII.0, ANNULUS_RADII.1, n, 4 * n),
        }
    }
}

/// Viscosities used for the Lamé manufactured problem.
pub const MMS_LAME: LameParams = LameParams {
    mu: 1.0,
    nu: 0.5,
    friction: 0.5,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MmsLevel {
    pub n: usize,
    pub mesh_width: f64,
    pub error_l2: f64,
    pub error_linf: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MmsStudy {
    pub case: MmsCase,
    pub geometry: MmsGeometry,
    pub levels: Vec<MmsLevel>,
    /// Observed orders between consecutive levels, L2 error.
    pub orders_l2: Vec<f64>,
    /// Observed orders between consecutive levels, max error.
    pub orders_linf: Vec<f64>,
}

impl MmsStudy {
    pub fn min_order_l2(&self) -> f64 {
        self.orders_l2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_order_linf(&self) -> f64 {
        self.orders_linf.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn neumann_exact(geo: MmsGeometry, x: Jet, y: Jet) -> Jet {
    use std::f64::consts::PI;
    match geo {
        MmsGeometry::Rectangle => (PI * x).cos() * (PI * y).cos(),
        MmsGeometry::Annulus => {
            let (ri, ro) = ANNULUS_RADII;
            let r = (x * x + y * y).sqrt();
            let k = PI / (ro - ri);
            (k * (r - ri)).cos() * ((x / r) * 0.4 + 1.0)
        }
    }
}

fn dirichlet_exact(geo: MmsGeometry, x: Jet, y: Jet) -> Jet {
    use std::f64::consts::PI;
    match geo {
        MmsGeometry::Rectangle => (PI * x).sin() * (PI * y).sin() + x * y,
        MmsGeometry::Annulus => x.sin() * (2.0 * y).cos() + x * y,
    }
}

/// Manufactured velocity: tangent to the wall on both geometries.
pub fn lame_exact(geo: MmsGeometry, x: Jet, y: Jet) -> [Jet; 2] {
    use std::f64::consts::PI;
    match geo {
        MmsGeometry::Rectangle => {
            let s = (PI * x).sin() * (PI * y).sin();
            [s, s]
        }
        MmsGeometry::Annulus => {
            let (ri, ro) = ANNULUS_RADII;
            let r = (x * x + y * y).sqrt();
            let q = (r - ri) * (r * -1.0 + ro) * (y * 0.7 + 1.0);
            let s = x * 0.3 + 0.5;
            [q * x - s * y, q * y + s * x]
        }
    }
}

/// `−μΔw − (μ+ν)∇div w` of a jet-valued velocity.
pub fn lame_operator(p: &LameParams, w: &[Jet; 2]) -> [f64; 2] {
    let lam = p.mu + p.nu;
    let [a, b] = w;
    [
        -p.mu * a.laplacian() - lam * (a.h[0] + b.h[1]),
        -p.mu * b.laplacian() - lam * (a.h[1] + b.h[2]),
    ]
}

/// `2μ n·D(w)·τ + f w·τ` of a jet-valued velocity.
pub fn lame_traction(p: &LameParams, w: &[Jet; 2], n: [f64; 2], t: [f64; 2]) -> f64 {
    let [a, b] = w;
    let d11 = a.g[0];
    let d22 = b.g[1];
    let d12 = 0.5 * (a.g[1] + b.g[0]);
    2.0 * p.mu * (n[0] * t[0] * d11 + (n[0] * t[1] + n[1] * t[0]) * d12 + n[1] * t[1] * d22)
        + p.friction * (a.v * t[0] + b.v * t[1])
}

fn errors(grid: &Grid, num: &[f64], exact: &[f64]) -> (f64, f64) {
    let e: Vec<f64> = num.iter().zip(exact).map(|(a, b)| a - b).collect();
    let linf = e.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (grid.l2(&e), linf)
}

/// Solves one manufactured problem and returns `(L2 error, max error)`.
pub fn mms_errors(case: MmsCase, grid: &Grid, geo: MmsGeometry) -> Result<(f64, f64)> {
    match case {
        MmsCase::Neumann => {
            let j = jets(grid, |x, y| neumann_exact(geo, x, y));
            let exact = values(&j);
            let f: Vec<f64> = j.iter().map(|j| -j.laplacian()).collect();
            let sol = NeumannHandle::new(grid)?.solve(&f, grid.mean(&exact))?;
            Ok(errors(grid, &sol.field, &exact))
        }
        MmsCase::Dirichlet => {
            let j = jets(grid, |x, y| dirichlet_exact(geo, x, y));
            let exact = values(&j);
            let f: Vec<f64> = j.iter().map(|j| -j.laplacian()).collect();
            let (sol, _) = DirichletHandle::new(grid)?.solve(&f, &exact)?;
            Ok(errors(grid, &sol, &exact))
        }
        MmsCase::Lame => {
            let p = MMS_LAME;
            let w: Vec<[Jet; 2]> = (0..grid.len())
                .map(|k| {
                    let [x, y] = grid.point(k);
                    lame_exact(geo, Jet::x(x), Jet::y(y))
                })
                .collect();
            let rhs = VectorField::from_fn(grid.len(), |k| lame_operator(&p, &w[k]));
            let mut tg = vec![0.0; grid.len()];
            for b in grid.boundary() {
                tg[b.index] = lame_traction(&p, &w[b.index], b.normal, b.tangent);
            }
            let sol = LameHandle::new(grid, p)?.solve(&rhs, Some(&tg))?;
            let ex = VectorField::from_fn(grid.len(), |k| [w[k][0].v, w[k][1].v]);
            let (l2x, infx) = errors(grid, &sol.field.x, &ex.x);
            let (l2y, infy) = errors(grid, &sol.field.y, &ex.y);
            Ok((l2x.hypot(l2y), infx.max(infy)))
        }
    }
}

/// Convergence study over a list of resolutions.
pub fn run_mms(case: MmsCase, geo: MmsGeometry, grids: &[usize]) -> Result<MmsStudy> {
    if grids.len() < 2 {
        return Err(SolverError::config("an MMS study needs at least two grids"));
    }
    let mut levels = Vec::new();
    for &n in grids {
        let grid = build_grid(geo.spec(n))?;
        let (error_l2, error_linf) = mms_errors(case, &grid, geo)?;
        levels.push(MmsLevel {
            n,
            mesh_width: grid.mesh_width(),
            error_l2,
            error_linf,
        });
    }
    let order = |a: f64, b: f64, ha: f64, hb: f64| (a / b).ln() / (ha / hb).ln();
    let pairs = levels.windows(2);
    let orders_l2 = pairs
        .clone()
        .map(|w| order(w[0].error_l2, w[1].error_l2, w[0].mesh_width, w[1].mesh_width))
        .collect();
    let orders_linf = pairs
        .map(|w| order(w[0].error_linf, w[1].error_linf, w[0].mesh_width, w[1].mesh_width))
        .collect();
    Ok(MmsStudy {
        case,
        geometry: geo,
        levels,
        orders_l2,
        orders_linf,
    })
}
