use serde::{Deserialize, Serialize};

use crate::bsde::{backward_pass, BsdeOptions, BsdeSolution, Constraint, FittedField};
use crate::error::{Error, Result};
use crate::forward::PathBundle;
use crate::model::{DriverSpec, ModelSpec, ObstacleSpec, TerminalSpec, WeightFunction};

/// Driver contribution `n (y - h)⁻` of the penalty.
pub fn penalty_term(level: f64, y: f64, h: f64) -> f64 {
    level * (h - y).max(0.0)
}

/// Runs the backward pass with driver `f + n (y - h)⁻`; records
/// `ΔK_k = Δ n (Y_k - L_k)⁻` per path and step. The penalty is resolved
/// exactly inside the implicit step, so any `n ≥ 0` is admissible.
#[allow(clippy::too_many_arguments)]
pub fn solve_penalized(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    obstacle: &ObstacleSpec,
    paths: &PathBundle,
    options: &BsdeOptions,
    level: f64,
) -> Result<BsdeSolution> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::invalid(format!("penalty level must be finite and >= 0, got {level}")));
    }
    let constraint = Constraint::Penalty { level, obstacle: obstacle.clone() };
    backward_pass(model, driver, terminal, paths, options, constraint)
}

/// Direct reflection `Y_k = max(Ỹ_k, L_k)`, `ΔK_k = (L_k - Ỹ_k)⁺`.
pub fn solve_direct_reflection(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    obstacle: &ObstacleSpec,
    paths: &PathBundle,
    options: &BsdeOptions,
) -> Result<BsdeSolution> {
    let constraint = Constraint::Reflect { obstacle: obstacle.clone() };
    backward_pass(model, driver, terminal, paths, options, constraint)
}

/// Stopping tolerance for the penalty norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tolerance {
    Absolute { value: f64 },
    /// Multiple of the weighted norm of `h` along the paths.
    RelativeToObstacle { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectedOptions {
    pub bsde: BsdeOptions,
    /// Increasing penalty levels.
    pub schedule: Vec<f64>,
    pub tol: Tolerance,
    pub weight: WeightFunction,
}

impl Default for ReflectedOptions {
    fn default() -> Self {
        ReflectedOptions {
            bsde: BsdeOptions::default(),
            schedule: geometric_schedule(12),
            tol: Tolerance::RelativeToObstacle { factor: 1e-3 },
            weight: WeightFunction { exponent: 3.0 },
        }
    }
}

/// `1, 2, 4, ..., 2^max_power`.
pub fn geometric_schedule(max_power: u32) -> Vec<f64> {
    (0..=max_power).map(|i| 2f64.powi(i as i32)).collect()
}

/// Diagnostics of one penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: f64,
    pub y0: f64,
    pub y0_std_error: f64,
    /// `‖(u_n - h)⁻‖` in the weighted space-time norm along the paths.
    pub penalty_norm: f64,
    pub penalty_norm_std_error: f64,
    /// Path mean of `Σ_k (Y^ref_k - L_k)⁺ ΔK^n_k` against the reflected solution.
    pub skorokhod_defect: f64,
    /// Defect over `mean K^n_T · sup |Y^ref - L|`.
    pub normalized_defect: f64,
    pub mean_k_total: f64,
}

/// Penalized solutions along a schedule with the reflected cross-check.
#[derive(Debug, Clone)]
pub struct ReflectedSolution {
    /// Last level solved.
    pub solution: BsdeSolution,
    /// Direct-reflection solution on the same paths.
    pub reference: BsdeSolution,
    /// Fitted `u_n` for every level solved, in schedule order.
    pub fields: Vec<FittedField>,
    pub levels: Vec<LevelRecord>,
    /// Weighted norm of `h` along the paths.
    pub obstacle_norm: f64,
    /// Effective stopping tolerance.
    pub tol: f64,
    /// Weighted L² gap between the final penalized `Y` and the reflected `Y`.
    pub field_gap: f64,
    pub weight: WeightFunction,
}

impl ReflectedSolution {
    pub fn final_level(&self) -> &LevelRecord {
        self.levels.last().expect("at least one level")
    }
}

/// `sqrt(Σ_k Δ mean_p ρ(X_k) v_{k,p}²)` with a delta-method standard error.
fn weighted_norm(
    paths: &PathBundle,
    weight: &WeightFunction,
    value: impl Fn(usize, usize) -> f64,
) -> (f64, f64) {
    let m = paths.num_paths();
    let dt = paths.grid().dt();
    let per_path: Vec<f64> = (0..m)
        .map(|p| {
            (0..paths.steps())
                .map(|k| dt * weight.eval(paths.state(k, p)) * value(k, p).powi(2))
                .sum()
        })
        .collect();
    let est = crate::stats::Estimate::from_samples(&per_path);
    let norm = est.mean.max(0.0).sqrt();
    let se = if norm > 0.0 { est.std_error / (2.0 * norm) } else { 0.0 };
    (norm, se)
}

fn level_record(
    sol: &BsdeSolution,
    reference: &BsdeSolution,
    paths: &PathBundle,
    weight: &WeightFunction,
    level: f64,
) -> LevelRecord {
    let m = paths.num_paths();
    let n = paths.steps();
    let lower = |k: usize, p: usize| sol.obstacle_value(k, p).expect("obstacle present");
    let (penalty_norm, penalty_norm_std_error) =
        weighted_norm(paths, weight, |k, p| (lower(k, p) - sol.y(k, p)).max(0.0));
    let mut defect = 0.0;
    let mut k_sum = 0.0;
    let mut sup_gap: f64 = 0.0;
    for p in 0..m {
        for k in 0..n {
            let above = (reference.y(k, p) - lower(k, p)).max(0.0);
            sup_gap = sup_gap.max(above);
            defect += above * sol.delta_k(k, p);
            k_sum += sol.delta_k(k, p);
        }
    }
    defect /= m as f64;
    let mean_k_total = k_sum / m as f64;
    let scale = mean_k_total * sup_gap;
    LevelRecord {
        level,
        y0: sol.y0().mean,
        y0_std_error: sol.y0().std_error,
        penalty_norm,
        penalty_norm_std_error,
        skorokhod_defect: defect,
        normalized_defect: if scale > 0.0 { defect / scale } else { 0.0 },
        mean_k_total,
    }
}

/// Discrete Skorokhod defect `(1/M) Σ_p Σ_k (Y_k - L_k)⁺ ΔK_k` of a solution
/// with its own `Y`.
pub fn skorokhod_gap(sol: &BsdeSolution) -> f64 {
    let m = sol.num_paths();
    let mut total = 0.0;
    for p in 0..m {
        for k in 0..sol.grid().steps() {
            let dk = sol.delta_k(k, p);
            if dk > 0.0 {
                let l = sol.obstacle_value(k, p).unwrap_or(f64::NEG_INFINITY);
                total += (sol.y(k, p) - l).max(0.0) * dk;
            }
        }
    }
    total / m as f64
}

/// Solves the obstacle problem by penalization along `options.schedule`,
/// stopping at the first level whose penalty norm drops below the tolerance.
pub fn solve_reflected(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    obstacle: &ObstacleSpec,
    paths: &PathBundle,
    options: &ReflectedOptions,
) -> Result<ReflectedSolution> {
    let schedule = &options.schedule;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("penalty schedule must be nonempty and increasing"));
    }
    let reference = solve_direct_reflection(model, driver, terminal, obstacle, paths, &options.bsde)?;
    let weight = options.weight;
    let (obstacle_norm, _) = weighted_norm(paths, &weight, |k, p| {
        reference.obstacle_value(k, p).expect("obstacle present")
    });
    let tol = match options.tol {
        Tolerance::Absolute { value } => value,
        Tolerance::RelativeToObstacle { factor } => factor * obstacle_norm,
    };
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be > 0, got {tol}")));
    }
    let mut fields = Vec::with_capacity(schedule.len());
    let mut levels = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &level in schedule {
        let sol = solve_penalized(model, driver, terminal, obstacle, paths, &options.bsde, level)?;
        let record = level_record(&sol, &reference, paths, &weight, level);
        log::info!(
            "penalty n = {level}: Y0 = {:.6}, ‖(u_n - h)⁻‖ = {:.3e}, defect = {:.3e}",
            record.y0,
            record.penalty_norm,
            record.normalized_defect
        );
        fields.push(sol.field().clone());
        levels.push(record);
        let done = record.penalty_norm < tol;
        last = Some(sol);
        if done {
            break;
        }
    }
    let solution = last.expect("nonempty schedule");
    let final_norm = levels.last().map_or(f64::INFINITY, |r| r.penalty_norm);
    if final_norm >= tol {
        return Err(Error::NoConverge {
            tol,
            last_norm: final_norm,
            trace: levels.iter().map(|r| (r.level, r.penalty_norm)).collect(),
        });
    }
    let (field_gap, _) =
        weighted_norm(paths, &weight, |k, p| solution.y(k, p) - reference.y(k, p));
    Ok(ReflectedSolution {
        solution,
        reference,
        fields,
        levels,
        obstacle_norm,
        tol,
        field_gap,
        weight,
    })
}
