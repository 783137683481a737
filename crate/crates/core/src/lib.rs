//! Numerical laboratory for porous-medium drift-diffusion equations
//! `dn/dt = Lap Sigma(n) + div(n grad V)` with pressure `p = n^gamma`.
//!
//! The crate integrates the equation on periodic grids, monitors the
//! regularity functionals whose size is expected to stay bounded as
//! `gamma -> infinity`, and runs the multi-gamma experiments that probe the
//! hard-congestion limit.

pub mod constitutive;
pub mod estimator;
pub mod experiments;
pub mod grid;
pub mod identities;
pub mod potential;
pub mod profiles;
pub mod solver;
