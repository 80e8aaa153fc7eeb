use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::noise::NoiseSource;
use super::stepper::Stepper;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::parallel::map_chunks;
use crate::stats::Estimate;

/// Distribution summary of `det ∇X_{t0,T}(x0)` across paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentStats {
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

/// Propagates the Jacobian of the discrete flow along each path: the
/// derivative of every Euler sub-step between events, and `I + ∇β(·, e)`
/// at each jump. Paths use the same noise streams as [`super::simulate_paths`].
pub fn tangent_flow(
    model: &ModelSpec,
    grid: &TimeGrid,
    x0: &[f64],
    paths: usize,
    seed: u64,
) -> Result<TangentStats> {
    let d = model.dim();
    if x0.len() != d || paths == 0 {
        return Err(Error::invalid("tangent flow needs x0 of model dimension and >= 1 path"));
    }
    let noise = NoiseSource::new(seed);
    let offset = grid.noise_offset();
    let chunks = map_chunks(paths, 256, |range| -> Result<Vec<f64>> {
        let mut stepper = Stepper::new(model, grid.dt());
        let mut rec = stepper.new_record();
        let mut dets = Vec::with_capacity(range.len());
        for p in range {
            let mut x = x0.to_vec();
            let mut jac = DMatrix::<f64>::identity(d, d);
            for k in 0..grid.steps() {
                let mut rng = noise.at(p as u64, offset.wrapping_add(k as u64));
                let ok = stepper.advance(&mut x, &mut rng, &mut rec, Some(&mut jac));
                if !ok || jac.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("tangent at path {p}, step {}", k + 1)));
                }
            }
            dets.push(jac.determinant());
        }
        Ok(dets)
    });
    let mut dets = Vec::with_capacity(paths);
    for c in chunks {
        dets.extend(c?);
    }
    let est = Estimate::from_samples(&dets);
    Ok(TangentStats {
        mean: est.mean,
        std_error: est.std_error,
        min: dets.iter().copied().fold(f64::INFINITY, f64::min),
        max: dets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
