//! Obstacle problems by penalization.
//!
//! Level `n` adds `n (y - h)⁻` to the driver; the pushing process is
//! `K^n = ∫ n (Y^n - L)⁻ ds` and its density in `(t, x)` is the penalty
//! measure `ν_n = n (u_n - h)⁻ dt dx`. Direct reflection on the same paths
//! serves as the cross-check.

mod measure;
mod solve;

pub use measure::{estimate_reflection_measure, support_check, MeasureCell, ReflectionMeasureEstimate, SupportReport};
pub use solve::{
    geometric_schedule, penalty_term, skorokhod_gap, solve_direct_reflection, solve_penalized,
    solve_reflected, LevelRecord, ReflectedOptions, ReflectedSolution, Tolerance,
};
