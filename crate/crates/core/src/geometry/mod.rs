//! Discrete domains, boundary frames, quadrature and norms.

mod field;
mod grid;
pub(crate) mod ops;

pub use field::{ScalarField, VectorField};
pub use grid::{build_grid, BoundaryNode, DomainSpec, Grid, Segment, Shape, MIN_RESOLUTION};
pub use ops::DiffOps;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    W12,
}

pub fn integrate(grid: &Grid, field: &ScalarField) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    Ok(grid.quad(field))
}

pub fn boundary_integral(grid: &Grid, field: &ScalarField) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    Ok(grid.boundary_quad(field))
}

pub fn norm(grid: &Grid, field: &ScalarField, kind: NormKind) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    Ok(scalar_norm(grid, field, kind))
}

/// Norm of a vector field: component norms combined in the natural way.
pub fn vector_norm(grid: &Grid, field: &VectorField, kind: NormKind) -> Result<f64> {
    check_len(grid.len(), field.len())?;
    let a = scalar_norm(grid, &field.x, kind);
    let b = scalar_norm(grid, &field.y, kind);
    Ok(match kind {
        NormKind::L1 => grid
            .weights()
            .iter()
            .enumerate()
            .map(|(k, w)| w * field.x[k].hypot(field.y[k]))
            .sum(),
        NormKind::Linf => field.magnitude().max_abs(),
        NormKind::L2 | NormKind::W12 => a.hypot(b),
    })
}

pub(crate) fn scalar_norm(grid: &Grid, f: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => grid.weights().iter().zip(f).map(|(w, v)| w * v.abs()).sum(),
        NormKind::L2 => grid.l2(f),
        NormKind::Linf => f.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        NormKind::W12 => {
            let [gx, gy] = grid.grad(f);
            (grid.l2(f).powi(2) + grid.l2(&gx).powi(2) + grid.l2(&gy).powi(2)).sqrt()
        }
    }
}

/// `‖∇v‖₂` summed over both components.
pub(crate) fn grad_l2(grid: &Grid, v: &VectorField) -> f64 {
    let mut s = 0.0;
    for c in [&v.x, &v.y] {
        let [gx, gy] = grid.grad(c);
        s += grid.l2(&gx).powi(2) + grid.l2(&gy).powi(2);
    }
    s.sqrt()
}
