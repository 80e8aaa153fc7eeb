//! Forward jump-diffusion simulation.
//!
//! Each grid step draws a Poisson number of jump times, sorts them, and runs
//! Euler sub-steps between consecutive events with the compensator drift
//! applied continuously. The Brownian increment of a step is the sum of its
//! sub-step increments.

mod flow;
mod grid;
mod moments;
mod noise;
mod paths;
mod stepper;
mod tangent;

pub use flow::check_flow_property;
pub use grid::TimeGrid;
pub use moments::{moment_report, MomentReport};
pub use paths::{read_binary, simulate_paths, simulate_paths_from, PathBundle, StateDump};
pub use tangent::{tangent_flow, TangentStats};

pub(crate) use noise::NoiseSource;
pub(crate) use stepper::Stepper;

#[cfg(test)]
mod tests;
