use serde::{Deserialize, Serialize};

use super::solution::BsdeSolution;
use crate::error::{Error, Result};
use crate::forward::PathBundle;
use crate::model::{fd_step, DriverSpec, ModelSpec, TerminalSpec, WeightFunction};

/// Weighted relative gap `‖Z - σ*∇û‖_ρ / ‖Z‖_ρ` along the paths, with `∇û`
/// from central differences of [`BsdeSolution::evaluate_u`].
///
/// Steps whose data box is too narrow for the stencil are skipped, as are
/// paths whose stencil leaves the box. Returns 0 when both sides vanish up to
/// round-off relative to the solution size. At most `max_paths` paths per step are
/// used (evenly strided).
pub fn check_z_representation(
    sol: &BsdeSolution,
    paths: &PathBundle,
    model: &ModelSpec,
    weight: &WeightFunction,
    step: Option<f64>,
    max_paths: usize,
) -> Result<f64> {
    let d = sol.dim();
    let m = sol.num_paths();
    if paths.num_paths() != m || paths.steps() != sol.grid().steps() {
        return Err(Error::invalid("path bundle does not match the solution"));
    }
    let stride = m.div_ceil(max_paths.max(1)).max(1);
    let mut sigma = vec![0.0; d * d];
    let mut grad = vec![0.0; d];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut level = 0.0;
    for k in 0..sol.grid().steps() {
        let fit = sol.fit(k);
        let mut xp = vec![0.0; d];
        'paths: for p in (0..m).step_by(stride) {
            let state = paths.state(k, p);
            let h = step.unwrap_or_else(|| fd_step(state));
            for j in 0..d {
                xp.copy_from_slice(state);
                xp[j] = state[j] + h;
                if !fit.contains(&xp) {
                    continue 'paths;
                }
                let up = sol.evaluate_u(k, &xp)?;
                xp[j] = state[j] - h;
                if !fit.contains(&xp) {
                    continue 'paths;
                }
                let down = sol.evaluate_u(k, &xp)?;
                grad[j] = (up - down) / (2.0 * h);
            }
            model.diffusion(state, &mut sigma);
            let rho = weight.eval(state);
            let z = sol.z(k, p);
            level += rho * sol.y(k, p).powi(2);
            for i in 0..d {
                let sg: f64 = (0..d).map(|j| sigma[j * d + i] * grad[j]).sum();
                num += rho * (z[i] - sg).powi(2);
                den += rho * z[i] * z[i];
            }
        }
    }
    // Both sides at round-off level relative to the solution: a flat field.
    let floor = 1e-16 * level.max(f64::MIN_POSITIVE);
    if den <= floor && num <= floor {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((num / den).sqrt())
}

/// Terms of the a-priori bound across a set of initial points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// `Σ_x ρ(x) [sup_k E|Y_k|² + Σ_k Δ E(|Z_k|² + |v̄_k|²)]`.
    pub numerator: f64,
    /// `Σ_x ρ(x) E[g(X_N)² + Σ_k Δ f⁰(t_k, X_k)²]` along the flow from `x`.
    pub denominator: f64,
    pub ratio: f64,
}

/// Ratio of solution energy to data energy, where the weighted space
/// integrals are sums over the initial points of the solves (one solve per
/// point, equal quadrature weights). The data norms are taken along the flow
/// from each point, which is equivalent to the weighted norm of the data.
pub fn check_apriori_estimate(
    solves: &[(&BsdeSolution, &PathBundle)],
    terminal: &TerminalSpec,
    driver: &DriverSpec,
    weight: &WeightFunction,
) -> Result<AprioriReport> {
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for &(sol, paths) in solves {
        if paths.num_paths() != sol.num_paths() || paths.steps() != sol.grid().steps() {
            return Err(Error::invalid("solution and path bundle do not match"));
        }
        let x0 = sol.x0();
        let rho = weight.eval(x0);
        let m = sol.num_paths() as f64;
        let grid = sol.grid();
        let dt = grid.dt();
        let mut sup_y: f64 = 0.0;
        let mut integral = 0.0;
        for k in 0..=grid.steps() {
            let ey2 = (0..sol.num_paths()).map(|p| sol.y(k, p).powi(2)).sum::<f64>() / m;
            sup_y = sup_y.max(ey2);
            if k < grid.steps() {
                let e: f64 = (0..sol.num_paths())
                    .map(|p| {
                        sol.z(k, p).iter().map(|v| v * v).sum::<f64>()
                            + sol.vbar(k, p).iter().map(|v| v * v).sum::<f64>()
                    })
                    .sum::<f64>()
                    / m;
                integral += dt * e;
            }
        }
        numerator += rho * (sup_y + integral);
        let n = grid.steps();
        let g2 = (0..sol.num_paths()).map(|p| terminal.eval(paths.state(n, p)).powi(2)).sum::<f64>() / m;
        let f0: f64 = (0..n)
            .map(|k| {
                let t = grid.time(k);
                dt * (0..sol.num_paths()).map(|p| driver.f0(t, paths.state(k, p)).powi(2)).sum::<f64>() / m
            })
            .sum();
        denominator += rho * (g2 + f0);
    }
    let ratio = if denominator == 0.0 {
        if numerator == 0.0 {
            0.0
        } else {
            return Err(Error::DivZero(format!(
                "data norm is zero but solution norm is {numerator:e}"
            )));
        }
    } else {
        numerator / denominator
    };
    Ok(AprioriReport { numerator, denominator, ratio })
}
