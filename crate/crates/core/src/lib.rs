//! Monte Carlo and finite-difference solvers for semilinear parabolic
//! integro-differential equations driven by a jump diffusion, and for their
//! obstacle problems.
//!
//! The solution `u` of
//!
//! ```text
//! ∂_t u + (K₁ + K₂) u + f(t, x, u, σ*∇u, v̄[u]) = 0,   u(T, ·) = g
//! ```
//!
//! is computed through the backward equation `Y_s = u(s, X_s)`,
//! `Z_s = σ*∇u(s, X_s)` along simulated forward paths. With an obstacle `h`
//! the driver is penalized by `n (y - h)⁻` and `n` is pushed up a schedule;
//! the penalty mass `n (u_n - h)⁻ dt dx` approximates the reflection measure.
//!
//! Modules:
//! - [`model`]: coefficients, jump measures, drivers and the generator.
//! - [`forward`]: path simulation, flow composition and tangent flows.
//! - [`regression`]: per-step least-squares conditional expectations.
//! - [`bsde`]: backward induction for the equation with jumps.
//! - [`obstacle`]: penalization, direct reflection and the reflection measure.
//! - [`oracle`]: finite differences, Merton series and binomial trees.
//! - [`normcheck`]: empirical equivalence of weighted norms.

pub mod bsde;
pub mod error;
pub mod forward;
pub mod model;
pub mod normcheck;
pub mod obstacle;
pub mod oracle;
mod parallel;
pub mod quadrature;
pub mod regression;
pub mod stats;

pub use error::{Error, Result};
