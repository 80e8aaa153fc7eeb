//! Backward equations with jumps by least-squares Monte Carlo.
//!
//! The solution is carried along simulated forward paths as
//! `Y_k ≈ u(t_k, X_k)`, `Z_k ≈ σ*∇u(t_k, X_k)` and `v̄_k`, the driver's jump
//! functionals of `u(t_k, X_k + β) - u(t_k, X_k)`. Regressions give the
//! conditional expectations; the fitted fields give `u` off the paths.

mod checks;
mod solution;
mod solver;

pub use checks::{check_apriori_estimate, check_z_representation, AprioriReport};
pub use solution::{BsdeSolution, DiagnosticsSummary, FittedField, StepDiagnostics};
pub use solver::{solve_bsde, BsdeOptions};

pub(crate) use solver::{backward_pass, Constraint};

#[cfg(test)]
mod tests;
