//! Semi-implicit incremental minimization for damped second-order evolution
//! inclusions `u'' + dPsi_u(u') + DE_t(u) + B(t, u, u') = f` on 1D grids.
//!
//! Each time step minimizes a strongly convex functional made of an inertia
//! term, the frozen dissipation potential and the energy. The subgradient of
//! the dissipation is recovered from the optimality condition, and the discrete
//! energy-dissipation inequality is checked along the whole trajectory.

pub mod convex;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod problem;
pub mod stepper;
pub mod validate;

pub use error::{Error, Result};
pub use grid::{BoundaryCondition, Field, SpatialGrid};
pub use problem::{energy_total, DissipationKind, DissipationSpec, EnergySpec, PerturbationSpec, ProblemSpec};
pub use stepper::{run, run_with, SolverOptions, StepReport, Trajectory};
pub use validate::{validate_assumptions, ValidationReport};
