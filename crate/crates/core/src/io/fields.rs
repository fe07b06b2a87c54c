use std::fmt::Write as _;
use std::path::Path;

use crate::approx::FlowState;
use crate::error::{Result, SolverError};
use crate::geometry::{Grid, ScalarField, VectorField};

pub const FIELDS_HEADER: &str =
    "# x[length] y[length] rho[density] v1[velocity] v2[velocity] G[pressure] omega[1/time]";

/// Columns of a field file, in node order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRows {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: ScalarField,
    pub v: VectorField,
    pub g: ScalarField,
    pub omega: ScalarField,
}

impl FieldRows {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// A state carrying the stored density and velocity.
    pub fn to_state(&self, grid: &Grid) -> Result<FlowState> {
        if self.len() != grid.len() {
            return Err(SolverError::config(format!(
                "field file has {} rows, the configured grid has {} nodes",
                self.len(),
                grid.len()
            )));
        }
        let scale = grid.x().iter().chain(grid.y()).fold(1.0_f64, |m, v| m.max(v.abs()));
        for k in 0..grid.len() {
            let [x, y] = grid.point(k);
            if (x - self.x[k]).abs() > 1e-9 * scale || (y - self.y[k]).abs() > 1e-9 * scale {
                return Err(SolverError::config(format!(
                    "field file row {} is at ({}, {}), the grid node is at ({x}, {y})",
                    k + 1,
                    self.x[k],
                    self.y[k]
                )));
            }
        }
        let mut s = FlowState::initial(grid, 1.0);
        s.rho = self.rho.clone();
        s.v = self.v.clone();
        s.t_homotopy = 1.0;
        s.converged = true;
        Ok(s)
    }
}

/// Writes one row per node with every value in shortest round-trip form.
pub fn export_fields(grid: &Grid, state: &FlowState, g: &[f64], omega: &[f64], path: &Path) -> Result<()> {
    let n = grid.len();
    for len in [state.rho.len(), state.v.len(), g.len(), omega.len()] {
        crate::error::check_len(n, len)?;
    }
    let mut s = String::with_capacity(n * 160);
    s.push_str(FIELDS_HEADER);
    s.push('\n');
    for k in 0..n {
        let [x, y] = grid.point(k);
        writeln!(
            s,
            "{:e} {:e} {:e} {:e} {:e} {:e} {:e}",
            x, y, state.rho[k], state.v.x[k], state.v.y[k], g[k], omega[k]
        )
        .expect("writing to a string");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_fields(path: &Path) -> Result<FieldRows> {
    let text = std::fs::read_to_string(path)?;
    let mut cols: [Vec<f64>; 7] = Default::default();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut count = 0;
        for (i, tok) in line.split_whitespace().enumerate() {
            if i >= 7 {
                count = i + 1;
                break;
            }
            let v: f64 = tok
                .parse()
                .map_err(|e| SolverError::config(format!("{}:{}: {e}", path.display(), no + 1)))?;
            cols[i].push(v);
            count = i + 1;
        }
        if count != 7 {
            return Err(SolverError::config(format!(
                "{}:{}: expected 7 columns, got {count}",
                path.display(),
                no + 1
            )));
        }
    }
    let [x, y, rho, v1, v2, g, omega] = cols;
    Ok(FieldRows {
        x,
        y,
        rho: ScalarField(rho),
        v: VectorField {
            x: ScalarField(v1),
            y: ScalarField(v2),
        },
        g: ScalarField(g),
        omega: ScalarField(omega),
    })
}

/// Two-column `eps value` file.
pub fn write_series(path: &Path, name: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut s = format!("# eps {name}\n");
    for (e, v) in rows {
        writeln!(s, "{e:e} {v:e}").expect("writing to a string");
    }
    std::fs::write(path, s)?;
    Ok(())
}
