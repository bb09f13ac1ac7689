//! Nonsmooth convex toolbox: proximal maps, conjugates, Fenchel-Young
//! residuals and the two inner solvers used by the stepper.

mod fista;
mod pd;
mod potential;

pub use fista::{solve_prox_grad, ProxGradProblem};
pub use pd::{
    solve_pd, ForwardDifference, IdentityOp, LinearOperator, PDProblem, PDReport, PDSolution,
    SmoothObjective, SmoothProx,
};
pub use potential::{
    conj_separable, conjugate_numeric, fenchel_young_gap, prox_separable, SeparablePotential,
};
