//! One-dimensional hydrostatic equilibrium `dπ(ρ)/dy = −gρ` with prescribed
//! mass, solved by shooting on the bottom density.

use ode_solvers::{Dopri5, System, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::pressure::PressureLaw;

/// Density profile on `[0, height]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HydrostaticProfile {
    pub y: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_bottom: f64,
    /// Height at which the profile reaches zero density, if it does.
    pub vacuum_contact: Option<f64>,
    /// `max |e(ρ(y)) − e(ρ(0)) + g y|` over the non-vacuum samples, with
    /// `e` the energy primitive of the law.
    pub enthalpy_mismatch: f64,
}

impl HydrostaticProfile {
    pub fn min_density(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of the profile at height `y`.
    pub fn at(&self, y: f64) -> f64 {
        let n = self.y.len();
        if y <= self.y[0] {
            return self.rho[0];
        }
        if y >= self.y[n - 1] {
            return self.rho[n - 1];
        }
        let k = self.y.partition_point(|&s| s <= y).min(n - 1);
        let (y0, y1) = (self.y[k - 1], self.y[k]);
        let s = (y - y0) / (y1 - y0);
        (1.0 - s) * self.rho[k - 1] + s * self.rho[k]
    }
}

/// State `[ρ, ∫₀^y ρ]`; below zero density the profile is frozen.
struct Column {
    law: PressureLaw,
    g: f64,
    floor: f64,
    contact: Option<f64>,
}

impl System<f64, Vector2<f64>> for Column {
    fn system(&self, _y: f64, s: &Vector2<f64>, ds: &mut Vector2<f64>) {
        let rho = s[0];
        if rho <= self.floor {
            ds[0] = 0.0;
            ds[1] = 0.0;
        } else {
            ds[0] = -self.g * rho / self.law.derivative(rho);
            ds[1] = rho;
        }
    }

    fn solout(&mut self, y: f64, s: &Vector2<f64>, _ds: &Vector2<f64>) -> bool {
        if s[0] <= self.floor && self.contact.is_none() {
            self.contact = Some(y);
        }
        false
    }
}

struct Shot {
    y: Vec<f64>,
    rho: Vec<f64>,
    mass: f64,
    contact: Option<f64>,
}

fn shoot(law: &PressureLaw, g: f64, height: f64, rho_bottom: f64, samples: usize) -> Result<Shot> {
    let floor = 1e-12 * rho_bottom;
    let col = Column {
        law: *law,
        g,
        floor,
        contact: None,
    };
    let dy = height / (samples - 1) as f64;
    let mut solver = Dopri5::new(col, 0.0, height, dy, Vector2::new(rho_bottom, 0.0), 1e-12, 1e-14);
    solver
        .integrate()
        .map_err(|e| SolverError::numerical(format!("hydrostatic integration failed: {e}")))?;
    let (ys, states) = solver.results().get();
    let y: Vec<f64> = ys.clone();
    let rho: Vec<f64> = states.iter().map(|s| s[0].max(0.0)).collect();
    let mass = states.last().map(|s| s[1]).unwrap_or(0.0);
    let contact = rho
        .iter()
        .zip(&y)
        .find(|(r, _)| **r <= floor)
        .map(|(_, y)| *y);
    Ok(Shot { y, rho, mass, contact })
}

/// Solves `dπ(ρ)/dy = −gρ` on `[0, height]` with mean density `h`.
///
/// A profile that reaches zero density (possible only for laws bounded at
/// vacuum) is returned with `vacuum_contact` set.
pub fn hydrostatic_oracle(law: &PressureLaw, g: f64, h: f64, height: f64, samples: usize) -> Result<HydrostaticProfile> {
    law.validate()?;
    if !(g >= 0.0 && g.is_finite()) {
        return Err(SolverError::config(format!("gravity g >= 0 required, got {g}")));
    }
    if !(h > 0.0 && height > 0.0) {
        return Err(SolverError::config("h > 0 and height > 0 required"));
    }
    if samples < 2 {
        return Err(SolverError::config("at least two samples required"));
    }
    if g == 0.0 {
        let y = (0..samples).map(|k| height * k as f64 / (samples - 1) as f64).collect();
        return Ok(HydrostaticProfile {
            y,
            rho: vec![h; samples],
            rho_bottom: h,
            vacuum_contact: None,
            enthalpy_mismatch: 0.0,
        });
    }
    let target = h * height;
    let (mut lo, mut hi) = (h, 2.0 * h);
    while shoot(law, g, height, hi, samples)?.mass < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 * h {
            return Err(SolverError::numerical("hydrostatic shooting: no bracket for the bottom density"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shoot(law, g, height, mid, samples)?.mass < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let rho_bottom = 0.5 * (lo + hi);
    let shot = shoot(law, g, height, rho_bottom, samples)?;
    if (shot.mass - target).abs() > 1e-10 * target {
        return Err(SolverError::numerical(format!(
            "hydrostatic shooting missed the mass by {:e}",
            shot.mass - target
        )));
    }
    let e0 = law.energy_primitive(rho_bottom)?;
    let mut enthalpy_mismatch: f64 = 0.0;
    for (y, r) in shot.y.iter().zip(&shot.rho) {
        if shot.contact.is_some_and(|c| *y >= c) || *r <= 0.0 {
            continue;
        }
        enthalpy_mismatch = enthalpy_mismatch.max((law.energy_primitive(*r)? - e0 + g * y).abs());
    }
    Ok(HydrostaticProfile {
        y: shot.y,
        rho: shot.rho,
        rho_bottom,
        vacuum_contact: shot.contact,
        enthalpy_mismatch,
    })
}
