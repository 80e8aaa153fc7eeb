//! Independent reference solvers: a one-dimensional finite-difference PIDE
//! solver with optional obstacle projection, the Merton series price and a
//! binomial tree for American options.

mod closed_form;
mod fd;
mod tree;

use serde::{Deserialize, Serialize};

pub use closed_form::{black_scholes, merton_price, merton_put, MertonQuote, OptionKind, SeriesPrice};
pub use fd::{complementarity_defect, fd_solve_pide, BoundaryFn, FdBoundary, FdGrid, FdSolution};
pub use tree::{binomial_american, binomial_european, binomial_richardson, RichardsonPair};

/// Oracle price with an estimate of its own error, as emitted in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePrice {
    pub price: f64,
    pub error_estimate: f64,
}
