//! PIDE data: forward coefficients, jump measure, driver, terminal condition,
//! obstacle and weight, plus evaluation of the integro-differential operator.

mod data;
mod driver;
mod field;
mod jump;
mod operator;
pub mod presets;
mod spec;

pub use data::{ObstacleSpec, SpaceFn, TerminalSpec, TimeSpaceFn, WeightFunction};
pub use driver::{DriverFn, DriverSpec, Functional, MAX_FUNCTIONALS};
pub use field::{fd_step, AnalyticField, FnField, ScalarField, Slice, SpaceTimeField};
pub use jump::{JumpMeasure, MarkLaw, QuadNode, DEFAULT_NODES};
pub use operator::{
    apply_k1, apply_k2, check_linkage_diffeo, generator, jump_functionals, pide_residual,
    LinkageReport,
};
pub use spec::{JumpField, ModelBuilder, ModelSpec, VecField};
