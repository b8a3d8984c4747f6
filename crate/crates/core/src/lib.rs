//! Multi-ion nanofiltration rejection: a DSPM-DE continuum engine with
//! parameter calibration, and an electroneutrality-constrained neural ODE
//! surrogate trained on it.

pub mod calibrate;
pub mod chem;
pub mod enp;
pub mod error;
pub mod node;
pub mod scalar;
pub mod thermo;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision surrogate.
pub type ModelF32 = node::ModelState<f32>;
/// Double-precision surrogate.
pub type ModelF64 = node::ModelState<f64>;
