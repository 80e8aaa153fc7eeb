use super::grid::TimeGrid;
use super::noise::NoiseSource;
use super::paths::simulate_endpoint;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::parallel::map_indices;

fn whole_steps(len: f64, dt: f64, what: &str) -> Result<usize> {
    let n = len / dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * (1.0 + n) {
        return Err(Error::Grid(format!("{what} = {len} is not a whole number of steps {dt}")));
    }
    Ok(r as usize)
}

/// Largest pathwise gap between `X_{t,r}(x)` and `X_{s,r}(X_{t,s}(x))` over
/// `paths` paths sharing noise. Both legs run on the lattice of step `dt`.
#[allow(clippy::too_many_arguments)]
pub fn check_flow_property(
    model: &ModelSpec,
    t: f64,
    s: f64,
    r: f64,
    dt: f64,
    x: &[f64],
    paths: usize,
    seed: u64,
) -> Result<f64> {
    if !(t < s && s < r) {
        return Err(Error::Grid(format!("need t < s < r, got {t}, {s}, {r}")));
    }
    let n1 = whole_steps(s - t, dt, "s - t")?;
    let n2 = whole_steps(r - s, dt, "r - s")?;
    let full = TimeGrid::with_step(t, dt, n1 + n2)?;
    let first = TimeGrid::with_step(t, dt, n1)?;
    let second = TimeGrid::with_step(s, dt, n2)?;
    if second.noise_offset() != first.noise_offset() + n1 as u64 {
        return Err(Error::Grid(format!("s = {s} is not a node of the lattice through t = {t}")));
    }
    let noise = NoiseSource::new(seed);
    let gaps = map_indices(paths, |p| -> Result<f64> {
        let direct = simulate_endpoint(model, &full, x, &noise, p)?;
        let mid = simulate_endpoint(model, &first, x, &noise, p)?;
        let composed = simulate_endpoint(model, &second, &mid, &noise, p)?;
        Ok(direct
            .iter()
            .zip(&composed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    });
    gaps.into_iter().try_fold(0.0, |acc, g| Ok(f64::max(acc, g?)))
}
