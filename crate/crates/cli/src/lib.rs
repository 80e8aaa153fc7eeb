//! Declarative experiment runner.
//!
//! A JSON config names a task, a model, the PIDE data and the numerics; the
//! runner executes the task, writes CSV and JSON artifacts and a report
//! whose body is hashed for reproducibility checks.
//!
//! Tasks: `simulate`, `solve`, `solve-obstacle`, `oracle`, `normcheck`,
//! `compare`. Exit codes: 0 success, 1 error, 2 a criterion failed.

pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use compare::{compare_report, read_curve, CompareTable};
pub use config::{validate_config, ExperimentConfig, Overrides, Task};
pub use error::CliError;
pub use report::{Report, ReportBody, Status};
pub use run::{execute, run_experiment, Invocation};
