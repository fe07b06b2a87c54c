//! Steady barotropic compressible flow with slip walls and a pressure law
//! singular at vacuum: an ε-regularized finite-difference solver, the
//! ε → 0 continuation ladder, and diagnostics for the quantities that
//! control the density bounds.

pub mod approx;
pub mod continuation;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mms;
mod numerics;
pub mod pressure;
pub mod sparse;

pub use error::{Result, SolverError};
