use serde::{Deserialize, Serialize};

use super::paths::PathBundle;
use crate::error::{Error, Result};
use crate::stats::bootstrap_std_error;

/// Normalized sup-moment `E[sup_k |X_k - x0|^p] / ((T - t0)(1 + |x0|^p))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub exponent: f64,
    pub ratio: f64,
    pub std_error: f64,
}

pub fn moment_report(paths: &PathBundle, x0: &[f64], p: f64) -> Result<MomentReport> {
    if !(p >= 2.0) {
        return Err(Error::invalid(format!("moment exponent must be >= 2, got {p}")));
    }
    if x0.len() != paths.dim() {
        return Err(Error::invalid("x0 dimension does not match the bundle"));
    }
    let x0_norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = paths.grid().horizon() * (1.0 + x0_norm.powf(p));
    let sups: Vec<f64> = (0..paths.num_paths())
        .map(|q| {
            (0..=paths.steps())
                .map(|k| {
                    let dist_sq: f64 = paths
                        .state(k, q)
                        .iter()
                        .zip(x0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    dist_sq.powf(p / 2.0)
                })
                .fold(0.0, f64::max)
                / denom
        })
        .collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(MomentReport {
        exponent: p,
        ratio: mean(&sups),
        std_error: bootstrap_std_error(&sups, 200, paths.seed() ^ 0x5eed, mean),
    })
}
