//! Report JSON: a hashed body that depends only on the inputs, plus
//! run metadata (time, host, threads, output directory) kept outside it.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CriterionFailed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

/// Flags that affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub seed: u64,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub task: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub flags: Flags,
    pub status: Status,
    pub headline: Map<String, Value>,
    pub criteria: Vec<Criterion>,
    /// Files written to the output directory, including the report itself.
    pub artifacts: Vec<String>,
    pub error: Option<ErrorInfo>,
}

impl ReportBody {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("body serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Run metadata excluded from the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub body_sha256: String,
    pub timestamp: String,
    pub host: String,
    pub runtime_seconds: f64,
    pub threads: Option<usize>,
    pub out: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub body: ReportBody,
    pub meta: ReportMeta,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        match self.body.status {
            Status::Ok => crate::error::exit::SUCCESS,
            Status::CriterionFailed => crate::error::exit::CRITERION_FAILED,
            Status::Error => crate::error::exit::ERROR,
        }
    }
}
