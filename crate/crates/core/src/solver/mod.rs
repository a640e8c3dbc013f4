//! Finite-volume discretization of the truncated cone collar `[x_min, 1] x Y`
//! in the log-radial variable `tau = ln x`, and time steppers on it.

mod diagnostics;
mod fractional;
mod grid;
mod linalg;
mod operator;
mod stepper;
mod weak;

pub use diagnostics::{
    bound_violation, comparison_check, energy_phi, energy_phi_with, fit_tip_exponent, l2_norm,
    mass, rate_norm, weighted_norm, ComparisonVerdict, Location, TipFit, SIGNAL_FLOOR,
};
pub use fractional::{fractional_apply, FractionalPower, KERNEL_TOL};
pub use grid::{ConeField, ConeGrid, Extremes};
pub use linalg::{BlockTridiag, BlockTridiagFactor, TridiagFactor};
pub use operator::{
    apply_full_laplacian, assemble_all, assemble_laplacian, InnerBc, RadialOperator,
};
pub use stepper::{Equation, Forcing, Linearization, Solver, SolverConfig, Trajectory, BLOWUP};
pub use weak::{weak_residual, Separable, SpaceTimeTest};
