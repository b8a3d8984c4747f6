//! Film and pore extended Nernst–Planck solves coupled through interface
//! partitioning, iterated to a joint fixed point.

mod cell;
pub mod config;
pub mod solver;

pub use config::{mass_transfer, Sherwood, SolverConfig};
pub use solver::{
    film_solve, pore_solve, solve_point, solve_rejection, update_concentration, update_potential, Residuals,
    TransportSolution,
};
