use serde::{Deserialize, Serialize};

use super::solution::{BsdeSolution, FittedField, StepDiagnostics};
use crate::error::{Error, Result};
use crate::forward::PathBundle;
use crate::model::{DriverSpec, ModelSpec, ObstacleSpec, TerminalSpec};
use crate::regression::{Design, RegressionBasis, StepFit};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsdeOptions {
    pub basis: RegressionBasis,
    /// Fixed-point sweeps for the implicit step.
    pub picard_iters: usize,
    /// Bound `B` on `|Y|`; derived from the data when absent.
    pub clamp: Option<f64>,
}

impl Default for BsdeOptions {
    fn default() -> Self {
        BsdeOptions { basis: RegressionBasis::default(), picard_iters: 3, clamp: None }
    }
}

impl BsdeOptions {
    pub fn with_basis(basis: RegressionBasis) -> Self {
        BsdeOptions { basis, ..Default::default() }
    }
}

/// How the obstacle enters the backward step.
#[derive(Debug, Clone)]
pub(crate) enum Constraint {
    Free,
    /// Driver augmented by `n (y - h)⁻`, solved implicitly.
    Penalty { level: f64, obstacle: ObstacleSpec },
    /// `Y = max(Ỹ, L)` after the unconstrained step.
    Reflect { obstacle: ObstacleSpec },
}

impl Constraint {
    pub(crate) fn obstacle(&self) -> Option<&ObstacleSpec> {
        match self {
            Constraint::Free => None,
            Constraint::Penalty { obstacle, .. } | Constraint::Reflect { obstacle } => Some(obstacle),
        }
    }
}

/// Frozen-coefficient implicit step at one point: returns `(Y, ΔK)`.
///
/// Solves `y = c + Δ f(y) + Δ n (y - l)⁻` by Picard sweeps on `f`, with the
/// penalty handled exactly: for fixed `a = c + Δ f`, the root is `a` when
/// `a ≥ l` and `(a + Δ n l) / (1 + Δ n)` otherwise.
#[allow(clippy::too_many_arguments)]
pub(crate) fn implicit_step(
    driver: &DriverSpec,
    constraint: &Constraint,
    picard: usize,
    t: f64,
    dt: f64,
    x: &[f64],
    c: f64,
    z: &[f64],
    v: &[f64],
    lower: f64,
) -> (f64, f64) {
    let mut y = c;
    for _ in 0..picard {
        let a = c + dt * driver.eval(t, x, y, z, v);
        y = match constraint {
            Constraint::Penalty { level, .. } if a < lower => {
                (a + dt * level * lower) / (1.0 + dt * level)
            }
            _ => a,
        };
    }
    match constraint {
        Constraint::Free => (y, 0.0),
        Constraint::Penalty { level, .. } => (y, dt * level * (lower - y).max(0.0)),
        Constraint::Reflect { .. } => {
            if y < lower {
                (lower, lower - y)
            } else {
                (y, 0.0)
            }
        }
    }
}

/// Solves the backward equation on `paths` by least-squares regression.
///
/// At each step, backwards from `N - 1`: the continuation value `C_k` is the
/// regression of `Y_{k+1}`; `Z_k` and `v̄_k` regress the residual
/// `Y_{k+1} - Ĉ_k` times `ΔW_k / Δ` and times the compensated functional
/// increments over `Δ`; `Y_k` solves `Y_k = Ĉ_k + Δ f(t_k, X_k, Y_k, Z_k, v̄_k)`.
pub fn solve_bsde(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    paths: &PathBundle,
    options: &BsdeOptions,
) -> Result<BsdeSolution> {
    backward_pass(model, driver, terminal, paths, options, Constraint::Free)
}

pub(crate) fn backward_pass(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    paths: &PathBundle,
    options: &BsdeOptions,
    constraint: Constraint,
) -> Result<BsdeSolution> {
    let d = paths.dim();
    if d != model.dim() {
        return Err(Error::invalid("path bundle and model dimensions differ"));
    }
    if options.picard_iters == 0 {
        return Err(Error::invalid("picard_iters must be >= 1"));
    }
    let m = paths.num_paths();
    let n = paths.steps();
    let grid = *paths.grid();
    let dt = grid.dt();
    let product = dt * driver.lipschitz();
    if product >= 1.0 {
        return Err(Error::Contraction { product });
    }
    options.basis.validate(d, m)?;
    let q = driver.num_functionals();
    let increments = paths.compensated_increments(model, driver.functionals());

    let obstacle = constraint.obstacle();
    let lower: Option<Vec<f64>> = obstacle.map(|h| {
        let mut l = vec![0.0; (n + 1) * m];
        for k in 0..=n {
            let t = grid.time(k);
            for p in 0..m {
                l[k * m + p] = h.eval(t, paths.state(k, p));
            }
        }
        l
    });

    let mut y = vec![0.0; (n + 1) * m];
    for p in 0..m {
        y[n * m + p] = terminal.eval(paths.state(n, p));
    }
    if let Some(bad) = y[n * m..].iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("terminal value at path {bad}")));
    }
    let bound = options.clamp.unwrap_or_else(|| {
        let gmax = y[n * m..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let lmax = lower.as_ref().map_or(0.0, |l| l.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let horizon = grid.horizon();
        // Gronwall-type envelope of |Y| with a safety factor.
        2.0 * (gmax + lmax + horizon * driver.f0_bound()) * (driver.lipschitz() * horizon).exp()
            + 1e-12
    });

    let mut z = vec![0.0; n * m * d];
    let mut vbar = vec![0.0; n * m * q];
    let mut dk = lower.as_ref().map(|_| vec![0.0; n * m]);
    let mut gamma = y[n * m..].to_vec();
    let mut martingale = vec![0.0; m];
    let mut fits = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    let mut targets = vec![vec![0.0; m]; d + q];
    let mut zp = vec![0.0; d];
    let mut vp = vec![0.0; q];

    for k in (0..n).rev() {
        let t = grid.time(k);
        let jump_cv = if d == 1 && model.has_jumps() {
            let next_fit = if k + 1 < n { fits.last() } else { None };
            Some(JumpControl::new(model, terminal, obstacle, next_fit, grid.time(k + 1), paths.states_at(k)))
        } else {
            None
        };
        let design = Design::new(paths.states_at(k), d, &options.basis, k)?;
        let next = &y[(k + 1) * m..(k + 2) * m];
        let (c_fit, c_hat) = design.fit(next);
        let mut sse = 0.0;
        for p in 0..m {
            let r = next[p] - c_hat[p];
            sse += r * r;
            let dw = paths.dw(k, p);
            for j in 0..d {
                targets[j][p] = r * dw[j] / dt;
            }
            for i in 0..q {
                targets[d + i][p] = r * increments[(k * m + p) * q + i] / dt;
            }
        }
        let mut fitted_all = Vec::with_capacity(d + q);
        let mut target_fits = vec![c_fit];
        for tgt in &targets {
            let (f, vals) = design.fit(tgt);
            target_fits.push(f);
            fitted_all.push(vals);
        }

        let mut clamped = 0usize;
        for p in 0..m {
            let x = paths.state(k, p);
            for j in 0..d {
                zp[j] = fitted_all[j][p];
            }
            for i in 0..q {
                vp[i] = fitted_all[d + i][p];
            }
            let l = lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[k * m + p]);
            let (mut yk, inc_k) = implicit_step(
                driver,
                &constraint,
                options.picard_iters,
                t,
                dt,
                x,
                c_hat[p],
                &zp,
                &vp,
                l,
            );
            if !yk.is_finite() {
                return Err(Error::Numeric(format!("Y at path {p}, step {k}")));
            }
            if yk.abs() > bound {
                yk = yk.clamp(-bound, bound);
                clamped += 1;
            }
            gamma[p] += yk - c_hat[p];
            let dw = paths.dw(k, p);
            martingale[p] += (0..d).map(|j| zp[j] * dw[j]).sum::<f64>();
            if let Some(cv) = &jump_cv {
                martingale[p] += cv.increment(model, x[0], paths.jump_marks(k, p), dt);
            }
            y[k * m + p] = yk;
            z[(k * m + p) * d..(k * m + p + 1) * d].copy_from_slice(&zp);
            vbar[(k * m + p) * q..(k * m + p + 1) * q].copy_from_slice(&vp);
            if let Some(dk) = dk.as_mut() {
                dk[k * m + p] = inc_k;
            }
        }
        if clamped > 0 {
            log::warn!("step {k}: {clamped} values clamped to |Y| <= {bound:e}");
        }
        let fit = design.finish(target_fits);
        diagnostics.push(StepDiagnostics {
            step: k,
            residual_rms: (sse / m as f64).sqrt(),
            condition: fit.condition(),
            fallback_cells: fit.fallback_cells(),
            clamped,
        });
        fits.push(fit);
    }
    fits.reverse();
    diagnostics.reverse();

    let y0_mean = y[..m].iter().sum::<f64>() / m as f64;
    let plain = Estimate::from_samples(&gamma);
    // Γ minus the fitted martingale part: same mean, less variance.
    let corrected: Vec<f64> = gamma.iter().zip(&martingale).map(|(g, mg)| g - mg).collect();
    let y0 = Estimate::from_samples(&corrected);
    log::debug!("Y0 regression {y0_mean} (se {}), corrected {} (se {})", plain.std_error, y0.mean, y0.std_error);
    Ok(BsdeSolution {
        field: FittedField {
            grid,
            dim: d,
            num_functionals: q,
            fits,
            driver: driver.clone(),
            terminal: terminal.clone(),
            constraint,
            picard_iters: options.picard_iters,
            bound,
        },
        paths: m,
        x0: paths.state(0, 0).to_vec(),
        y,
        z,
        vbar,
        lower,
        dk,
        y0,
        y0_plain: Estimate { mean: y0_mean, std_error: plain.std_error },
        diagnostics,
    })
}

/// Zero-mean jump martingale increment used as a control variate in one
/// dimension: `Σ_events δU(x, e) - Δ ∫ δU(x, e) λ(de)` with
/// `δU(x, e) = U(x + β(x, e)) - U(x)` and `U`
/// a tabulated proxy of the value at the next step. Any deterministic `U`
/// keeps the mean of the estimator unchanged.
struct JumpControl {
    lo: f64,
    step: f64,
    /// `U` on the table nodes.
    value: Vec<f64>,
    /// `∫ δU(x, e) λ(de)` on the table nodes.
    compensator: Vec<f64>,
}

impl JumpControl {
    const NODES: usize = 1024;

    fn new(
        model: &ModelSpec,
        terminal: &TerminalSpec,
        obstacle: Option<&ObstacleSpec>,
        next_fit: Option<&StepFit>,
        t_next: f64,
        states: &[f64],
    ) -> JumpControl {
        let (lo, hi) = states.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let reach = model.jump_bound().max(1e-6);
        let (lo, hi) = (lo - reach, hi + reach);
        let step = (hi - lo) / (Self::NODES - 1) as f64;
        let proxy = |x: f64| {
            let base = match next_fit {
                Some(f) => f.predict(0, &[x.clamp(f.lo()[0], f.hi()[0])]),
                None => terminal.eval(&[x]),
            };
            obstacle.map_or(base, |h| base.max(h.eval(t_next, &[x])))
        };
        let value: Vec<f64> = (0..Self::NODES).map(|i| proxy(lo + i as f64 * step)).collect();
        let mut table = JumpControl { lo, step, value, compensator: Vec::new() };
        let mut shift = [0.0];
        table.compensator = (0..Self::NODES)
            .map(|i| {
                let x = lo + i as f64 * step;
                model
                    .jump_measure()
                    .quadrature()
                    .iter()
                    .map(|q| {
                        model.jump(&[x], &q.mark, &mut shift);
                        q.weight * (table.lookup(&table.value, x + shift[0]) - table.value[i])
                    })
                    .sum()
            })
            .collect();
        table
    }

    fn lookup(&self, values: &[f64], x: f64) -> f64 {
        let s = ((x - self.lo) / self.step).clamp(0.0, (Self::NODES - 1) as f64);
        let i = (s.floor() as usize).min(Self::NODES - 2);
        let th = s - i as f64;
        (1.0 - th) * values[i] + th * values[i + 1]
    }

    fn increment(&self, model: &ModelSpec, x: f64, marks: &[f64], dt: f64) -> f64 {
        let md = model.jump_measure().mark_dim();
        let mut shift = [0.0];
        let mut total = -dt * self.lookup(&self.compensator, x);
        let here = self.lookup(&self.value, x);
        for e in marks.chunks_exact(md) {
            model.jump(&[x], e, &mut shift);
            total += self.lookup(&self.value, x + shift[0]) - here;
        }
        total
    }
}
