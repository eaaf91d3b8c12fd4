//! Simulation and linear-stability toolkit for three-agent flexible formations
//! driven by intentionally biased range measurements.
//!
//! Agents 1–2 and 2–3 are each held at a desired distance by gradient descent.
//! Without bias the inter-link angle is free. A constant bias at agent 2 selects
//! a collinear shape (stationary or travelling, depending on its sign), and a
//! rotation-matrix variant of the bias selects any triangle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod selftest;
pub mod sim;

pub use analysis::{
    classify_equilibrium, collinear_eigenvalues, eig3, is_hurwitz, jacobian_collinear,
    jacobian_rotated, EigenTriple, EquilibriumClass, EquilibriumKind, Matrix3, StabilityReport,
};
pub use dynamics::{
    velocities, ControllerVariant, ErrorVec, FormationSpec, FormationState, RelVectors,
};
pub use error::{FormationError, Result};
pub use geometry::{Rot2, SE2Transform, Vec2};
pub use sim::{
    simulate, simulate_errors, ConvergenceReport, ErrorTrajectory, InitialCondition, Scenario,
    SimError, Trajectory,
};
