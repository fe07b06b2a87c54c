use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ops::DiffOps;
use crate::error::{Result, SolverError};

/// Physical shape of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rectangle { width: f64, height: f64 },
    Annulus { r_in: f64, r_out: f64 },
}

/// Domain plus resolution.
///
/// `resolution` counts nodes per direction. On the rectangle both boundary
/// lines are included; on the annulus the first entry counts radial nodes
/// (both circles included) and the second counts angular nodes on the
/// periodic circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub resolution: [usize; 2],
}

pub const MIN_RESOLUTION: usize = 8;

impl DomainSpec {
    pub fn rectangle(width: f64, height: f64, nx: usize, ny: usize) -> Self {
        Self {
            shape: Shape::Rectangle { width, height },
            resolution: [nx, ny],
        }
    }

    pub fn unit_square(n: usize) -> Self {
        Self::rectangle(1.0, 1.0, n, n)
    }

    pub fn annulus(r_in: f64, r_out: f64, nr: usize, ntheta: usize) -> Self {
        Self {
            shape: Shape::Annulus { r_in, r_out },
            resolution: [nr, ntheta],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        for (axis, &n) in self.resolution.iter().enumerate() {
            if n < MIN_RESOLUTION {
                return Err(SolverError::config(format!(
                    "resolution[{axis}] = {n} must be at least {MIN_RESOLUTION}"
                )));
            }
        }
        Ok(())
    }

    fn validate_shape(&self) -> Result<()> {
        match self.shape {
            Shape::Rectangle { width, height } => {
                if !(width > 0.0 && width.is_finite()) || !(height > 0.0 && height.is_finite()) {
                    return Err(SolverError::config(format!(
                        "rectangle needs width > 0 and height > 0 (got {width}, {height})"
                    )));
                }
            }
            Shape::Annulus { r_in, r_out } => {
                if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
                    return Err(SolverError::config(format!(
                        "annulus needs 0 < r_in < r_out (got r_in = {r_in}, r_out = {r_out})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Rectangle { width, height } => width * height,
            Shape::Annulus { r_in, r_out } => PI * (r_out * r_out - r_in * r_in),
        }
    }
}

/// Which part of the boundary a node sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Left,
    Right,
    Bottom,
    Top,
    Corner,
    Inner,
    Outer,
}

/// Frame attached to a boundary node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub index: usize,
    pub segment: Segment,
    /// Unit outward normal.
    pub normal: [f64; 2],
    /// Unit tangent, the normal rotated a quarter turn counter-clockwise.
    pub tangent: [f64; 2],
    /// Signed curvature, positive where the domain is locally convex.
    pub curvature: f64,
    /// Arclength weight for boundary quadrature.
    pub arc_weight: f64,
}

impl BoundaryNode {
    pub fn is_corner(&self) -> bool {
        self.segment == Segment::Corner
    }
}

/// Structured grid with boundary frames, quadrature weights and derivative operators.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: DomainSpec,
    na: usize,
    nb: usize,
    spacing: [f64; 2],
    x: Vec<f64>,
    y: Vec<f64>,
    weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
    boundary_slot: Vec<Option<usize>>,
    interior: Vec<usize>,
    ops: DiffOps,
}

/// Builds a grid after checking the spec invariants.
pub fn build_grid(spec: DomainSpec) -> Result<Grid> {
    spec.validate()?;
    Grid::build(spec)
}

impl Grid {
    /// Builds a grid with any resolution of at least four nodes per direction.
    ///
    /// Intended for small oracle problems; [`build_grid`] is the checked entry point.
    pub fn build(spec: DomainSpec) -> Result<Grid> {
        spec.validate_shape()?;
        let [na, nb] = spec.resolution;
        if na < 4 || nb < 4 {
            return Err(SolverError::config("at least 4 nodes per direction are required"));
        }
        match spec.shape {
            Shape::Rectangle { width, height } => Ok(Self::rectangle(spec, width, height, na, nb)),
            Shape::Annulus { r_in, r_out } => Ok(Self::annulus(spec, r_in, r_out, na, nb)),
        }
    }

    fn rectangle(spec: DomainSpec, width: f64, height: f64, na: usize, nb: usize) -> Grid {
        let hx = width / (na - 1) as f64;
        let hy = height / (nb - 1) as f64;
        let n = na * nb;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut boundary = Vec::new();
        let trap = |i: usize, m: usize, h: f64| if i == 0 || i == m - 1 { 0.5 * h } else { h };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for b in 0..nb {
            for a in 0..na {
                let k = b * na + a;
                x[k] = a as f64 * hx;
                y[k] = b as f64 * hy;
                weights[k] = trap(a, na, hx) * trap(b, nb, hy);
                let left = a == 0;
                let right = a == na - 1;
                let bottom = b == 0;
                let top = b == nb - 1;
                let (segment, normal, arc) = match (left, right, bottom, top) {
                    (false, false, false, false) => continue,
                    (true, _, true, _) => (Segment::Corner, [-s, -s], 0.5 * (hx + hy)),
                    (true, _, _, true) => (Segment::Corner, [-s, s], 0.5 * (hx + hy)),
                    (_, true, true, _) => (Segment::Corner, [s, -s], 0.5 * (hx + hy)),
                    (_, true, _, true) => (Segment::Corner, [s, s], 0.5 * (hx + hy)),
                    (true, ..) => (Segment::Left, [-1.0, 0.0], hy),
                    (_, true, ..) => (Segment::Right, [1.0, 0.0], hy),
                    (_, _, true, _) => (Segment::Bottom, [0.0, -1.0], hx),
                    _ => (Segment::Top, [0.0, 1.0], hx),
                };
                boundary.push(BoundaryNode {
                    index: k,
                    segment,
                    normal,
                    tangent: [-normal[1], normal[0]],
                    curvature: 0.0,
                    arc_weight: arc,
                });
            }
        }
        let ops = DiffOps::rectangle(na, nb, hx, hy);
        Self::finish(spec, na, nb, [hx, hy], x, y, weights, boundary, ops)
    }

    fn annulus(spec: DomainSpec, r_in: f64, r_out: f64, na: usize, nb: usize) -> Grid {
        let dr = (r_out - r_in) / (na - 1) as f64;
        let dth = 2.0 * PI / nb as f64;
        let n = na * nb;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut th = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut boundary = Vec::new();
        for b in 0..nb {
            let t = b as f64 * dth;
            let (st, ct) = t.sin_cos();
            for a in 0..na {
                let k = b * na + a;
                let rad = if a == na - 1 { r_out } else { r_in + a as f64 * dr };
                r[k] = rad;
                th[k] = t;
                x[k] = rad * ct;
                y[k] = rad * st;
                let wr = if a == 0 || a == na - 1 { 0.5 * dr } else { dr };
                weights[k] = wr * rad * dth;
                if a == 0 {
                    let normal = [-ct, -st];
                    boundary.push(BoundaryNode {
                        index: k,
                        segment: Segment::Inner,
                        normal,
                        tangent: [-normal[1], normal[0]],
                        curvature: -1.0 / r_in,
                        arc_weight: r_in * dth,
                    });
                } else if a == na - 1 {
                    let normal = [ct, st];
                    boundary.push(BoundaryNode {
                        index: k,
                        segment: Segment::Outer,
                        normal,
                        tangent: [-normal[1], normal[0]],
                        curvature: 1.0 / r_out,
                        arc_weight: r_out * dth,
                    });
                }
            }
        }
        let ops = DiffOps::polar(na, nb, dr, dth, &r, &th);
        Self::finish(spec, na, nb, [dr, dth], x, y, weights, boundary, ops)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        spec: DomainSpec,
        na: usize,
        nb: usize,
        spacing: [f64; 2],
        x: Vec<f64>,
        y: Vec<f64>,
        weights: Vec<f64>,
        boundary: Vec<BoundaryNode>,
        ops: DiffOps,
    ) -> Grid {
        let n = na * nb;
        let mut boundary_slot = vec![None; n];
        for (slot, node) in boundary.iter().enumerate() {
            boundary_slot[node.index] = Some(slot);
        }
        let interior = (0..n).filter(|&k| boundary_slot[k].is_none()).collect();
        Grid {
            spec,
            na,
            nb,
            spacing,
            x,
            y,
            weights,
            boundary,
            boundary_slot,
            interior,
            ops,
        }
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn shape(&self) -> Shape {
        self.spec.shape
    }

    pub fn is_annulus(&self) -> bool {
        matches!(self.spec.shape, Shape::Annulus { .. })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Nodes along the fast and slow index directions.
    pub fn dims(&self) -> [usize; 2] {
        [self.na, self.nb]
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        b * self.na + a
    }

    /// `[dx, dy]` on the rectangle, `[dr, dθ]` on the annulus.
    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Representative mesh width in length units.
    pub fn mesh_width(&self) -> f64 {
        match self.spec.shape {
            Shape::Rectangle { .. } => self.spacing[0].max(self.spacing[1]),
            Shape::Annulus { r_out, .. } => self.spacing[0].max(r_out * self.spacing[1]),
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        [self.x[k], self.y[k]]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_node(&self, k: usize) -> Option<&BoundaryNode> {
        self.boundary_slot[k].map(|s| &self.boundary[s])
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary_slot[k].is_some()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn ops(&self) -> &DiffOps {
        &self.ops
    }

    /// Quadrature of nodal values.
    pub fn quad(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field does not match grid");
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Arclength quadrature over the boundary nodes of a full nodal field.
    pub fn boundary_quad(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field does not match grid");
        self.boundary.iter().map(|b| b.arc_weight * f[b.index]).sum()
    }

    pub fn l2(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field does not match grid");
        self.weights
            .iter()
            .zip(f)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Area-weighted inner product.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "field does not match grid");
        assert_eq!(g.len(), self.len(), "field does not match grid");
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.quad(f) / self.area()
    }

    pub fn grad(&self, f: &[f64]) -> [Vec<f64>; 2] {
        [self.ops.dx.mul_vec(f), self.ops.dy.mul_vec(f)]
    }

    /// Discrete divergence of a Cartesian vector field.
    pub fn div(&self, vx: &[f64], vy: &[f64]) -> Vec<f64> {
        let a = self.ops.dx.mul_vec(vx);
        let b = self.ops.dy.mul_vec(vy);
        a.iter().zip(&b).map(|(p, q)| p + q).collect()
    }

    /// `∂₁v₂ − ∂₂v₁`
    pub fn curl(&self, vx: &[f64], vy: &[f64]) -> Vec<f64> {
        let a = self.ops.dx.mul_vec(vy);
        let b = self.ops.dy.mul_vec(vx);
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.ops.lap.mul_vec(f)
    }

    pub fn nodal(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(&x, &y)| f(x, y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_normals_are_unit_bisectors() {
        let g = build_grid(DomainSpec::unit_square(8)).unwrap();
        let corners: Vec<_> = g.boundary().iter().filter(|b| b.is_corner()).collect();
        assert_eq!(corners.len(), 4);
        for c in corners {
            let n = c.normal;
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-15);
            assert!((n[0].abs() - n[1].abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn interior_and_boundary_partition_nodes() {
        let g = build_grid(DomainSpec::annulus(0.5, 1.0, 9, 24)).unwrap();
        assert_eq!(g.interior().len() + g.boundary().len(), g.len());
        assert_eq!(g.boundary().len(), 48);
    }

    #[test]
    fn rejects_small_resolution_but_builds_oracle_grid() {
        assert!(build_grid(DomainSpec::unit_square(6)).is_err());
        assert!(Grid::build(DomainSpec::unit_square(6)).is_ok());
        assert!(Grid::build(DomainSpec::unit_square(3)).is_err());
    }

    #[test]
    fn derivative_operators_differentiate_polynomials() {
        for spec in [DomainSpec::rectangle(2.0, 1.0, 11, 9), DomainSpec::annulus(0.5, 1.5, 40, 160)] {
            let g = build_grid(spec).unwrap();
            let f = g.nodal(|x, y| x * x - 3.0 * x * y + 0.5 * y * y);
            let [fx, fy] = g.grad(&f);
            let lap = g.laplacian(&f);
            let fxy = g.ops().dxy.mul_vec(&f);
            let tol = if g.is_annulus() { 5e-3 } else { 1e-9 };
            for k in 0..g.len() {
                let [x, y] = g.point(k);
                assert!((fx[k] - (2.0 * x - 3.0 * y)).abs() < tol);
                assert!((fy[k] - (-3.0 * x + y)).abs() < tol, "k={k} x={x} y={y} fy={} want {}", fy[k], -3.0 * x + y);
                assert!((lap[k] - 3.0).abs() < 20.0 * tol, "{} vs 3", lap[k]);
                assert!((fxy[k] + 3.0).abs() < 20.0 * tol);
            }
        }
    }
}
