use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::solver::{implicit_step, Constraint};
use crate::error::{Error, Result};
use crate::forward::TimeGrid;
use crate::model::{DriverSpec, TerminalSpec};
use crate::regression::StepFit;
use crate::stats::Estimate;

/// Per-step regression health.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Root mean square of `Y_{k+1} - Ĉ_k`.
    pub residual_rms: f64,
    pub condition: f64,
    pub fallback_cells: usize,
    pub clamped: usize,
}

/// Fitted `u` at every step: regression coefficients plus the implicit
/// driver step, usable off the simulated paths.
#[derive(Debug, Clone)]
pub struct FittedField {
    pub(crate) grid: TimeGrid,
    pub(crate) dim: usize,
    pub(crate) num_functionals: usize,
    /// Targets per step: continuation value, `Z` components, `v̄` components.
    pub(crate) fits: Vec<StepFit>,
    pub(crate) driver: DriverSpec,
    pub(crate) terminal: TerminalSpec,
    pub(crate) constraint: Constraint,
    pub(crate) picard_iters: usize,
    pub(crate) bound: f64,
}

impl FittedField {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fit(&self, k: usize) -> &StepFit {
        &self.fits[k]
    }

    /// Penalty level, if this is a penalized field.
    pub fn penalty_level(&self) -> Option<f64> {
        match &self.constraint {
            Constraint::Penalty { level, .. } => Some(*level),
            _ => None,
        }
    }

    /// Whether `x` lies in the data box of step `k` (always true at `k = N`).
    pub fn contains(&self, k: usize, x: &[f64]) -> bool {
        k >= self.grid.steps() || self.fits[k].contains(x)
    }

    /// `u(t_k, x)`: fitted continuation value followed by the implicit driver
    /// step with frozen `Z` and `v̄` fits. Refuses points outside the data box.
    pub fn evaluate_u(&self, k: usize, x: &[f64]) -> Result<f64> {
        let n = self.grid.steps();
        if k > n || x.len() != self.dim {
            return Err(Error::invalid(format!("step {k} or point {x:?} out of range")));
        }
        if k == n {
            return Ok(self.terminal.eval(x));
        }
        let fit = &self.fits[k];
        if !fit.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        let mut vals = vec![0.0; 1 + self.dim + self.num_functionals];
        fit.predict_all(x, &mut vals);
        let t = self.grid.time(k);
        let lower = self.constraint.obstacle().map_or(f64::NEG_INFINITY, |h| h.eval(t, x));
        let (y, _) = implicit_step(
            &self.driver,
            &self.constraint,
            self.picard_iters,
            t,
            self.grid.dt(),
            x,
            vals[0],
            &vals[1..1 + self.dim],
            &vals[1 + self.dim..],
            lower,
        );
        Ok(y.clamp(-self.bound, self.bound))
    }

    /// Regression standard error of the continuation value at `(t_k, x)`.
    pub fn u_std_error(&self, k: usize, x: &[f64]) -> Result<f64> {
        if k >= self.grid.steps() {
            return Ok(0.0);
        }
        let fit = &self.fits[k];
        if !fit.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(fit.predict_se(0, x))
    }

    /// Fitted `Z` at `(t_k, x)`.
    pub fn evaluate_z(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.fitted_targets(k, x, 1, self.dim)
    }

    /// Fitted `v̄` at `(t_k, x)`.
    pub fn evaluate_vbar(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.fitted_targets(k, x, 1 + self.dim, self.num_functionals)
    }

    fn fitted_targets(&self, k: usize, x: &[f64], from: usize, len: usize) -> Result<Vec<f64>> {
        if k >= self.grid.steps() {
            return Err(Error::invalid(format!("no fit at step {k}")));
        }
        let fit = &self.fits[k];
        if !fit.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok((from..from + len).map(|t| fit.predict(t, x)).collect())
    }

    /// CSV `step,time,x,u,z,vbar_1..q` on the given points (one row per
    /// step and point inside that step's data box; `x`/`z` expand to
    /// `x0..`, `z0..` when `d > 1`).
    pub fn write_csv<W: Write>(&self, mut w: W, points: &[Vec<f64>]) -> io::Result<()> {
        let d = self.dim;
        let names = |p: &str| {
            if d == 1 {
                p.to_string()
            } else {
                (0..d).map(|j| format!("{p}{j}")).collect::<Vec<_>>().join(",")
            }
        };
        write!(w, "step,time,{},u,{}", names("x"), names("z"))?;
        for i in 1..=self.num_functionals {
            write!(w, ",vbar_{i}")?;
        }
        writeln!(w)?;
        for k in 0..self.grid.steps() {
            for x in points {
                let Ok(u) = self.evaluate_u(k, x) else { continue };
                let z = self.evaluate_z(k, x).map_err(io::Error::other)?;
                let v = self.evaluate_vbar(k, x).map_err(io::Error::other)?;
                write!(w, "{k},{}", self.grid.time(k))?;
                for c in x.iter().chain([u].iter()).chain(&z).chain(&v) {
                    write!(w, ",{c}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Output of one backward pass: the fitted field and pathwise `(Y, Z, v̄)`
/// arrays, plus `L` and `ΔK` when an obstacle is present.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub(crate) field: FittedField,
    pub(crate) paths: usize,
    pub(crate) x0: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) vbar: Vec<f64>,
    pub(crate) lower: Option<Vec<f64>>,
    pub(crate) dk: Option<Vec<f64>>,
    pub(crate) y0: Estimate,
    pub(crate) y0_plain: Estimate,
    pub(crate) diagnostics: Vec<StepDiagnostics>,
}

impl BsdeSolution {
    pub fn field(&self) -> &FittedField {
        &self.field
    }

    pub fn into_field(self) -> FittedField {
        self.field
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.field.grid
    }

    pub fn dim(&self) -> usize {
        self.field.dim
    }

    pub fn num_paths(&self) -> usize {
        self.paths
    }

    pub fn num_functionals(&self) -> usize {
        self.field.num_functionals
    }

    /// Initial state of the first path.
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Point-start estimate of `Y_0`: the path average of
    /// `g(X_N) + Σ_k (Y_k - Ĉ_k) - Σ_k Z_k·ΔW_k`. The first two terms average
    /// exactly to the regression value of `Y_0`; the last is a martingale
    /// with fitted integrand, so it only removes variance.
    pub fn y0(&self) -> Estimate {
        self.y0
    }

    /// Regression value of `Y_0` (path mean) with the standard error of the
    /// uncorrected pathwise representation.
    pub fn y0_plain(&self) -> Estimate {
        self.y0_plain
    }

    pub fn y(&self, k: usize, p: usize) -> f64 {
        self.y[k * self.paths + p]
    }

    pub fn z(&self, k: usize, p: usize) -> &[f64] {
        let d = self.field.dim;
        let i = (k * self.paths + p) * d;
        &self.z[i..i + d]
    }

    pub fn vbar(&self, k: usize, p: usize) -> &[f64] {
        let q = self.field.num_functionals;
        let i = (k * self.paths + p) * q;
        &self.vbar[i..i + q]
    }

    /// Obstacle value `L_k = h(t_k, X_k)` when an obstacle is present.
    pub fn obstacle_value(&self, k: usize, p: usize) -> Option<f64> {
        self.lower.as_ref().map(|l| l[k * self.paths + p])
    }

    /// Increment `ΔK_k` of the pushing process (zero without obstacle).
    pub fn delta_k(&self, k: usize, p: usize) -> f64 {
        self.dk.as_ref().map_or(0.0, |dk| dk[k * self.paths + p])
    }

    /// `K_T` of path `p`.
    pub fn k_total(&self, p: usize) -> f64 {
        (0..self.grid().steps()).map(|k| self.delta_k(k, p)).sum()
    }

    pub fn clamp_bound(&self) -> f64 {
        self.field.bound
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn fit(&self, k: usize) -> &StepFit {
        self.field.fit(k)
    }

    pub fn penalty_level(&self) -> Option<f64> {
        self.field.penalty_level()
    }

    /// See [`FittedField::evaluate_u`].
    pub fn evaluate_u(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.field.evaluate_u(k, x)
    }

    pub fn u_std_error(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.field.u_std_error(k, x)
    }

    pub fn evaluate_z(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.field.evaluate_z(k, x)
    }

    pub fn evaluate_vbar(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.field.evaluate_vbar(k, x)
    }

    pub fn write_csv<W: Write>(&self, w: W, points: &[Vec<f64>]) -> io::Result<()> {
        self.field.write_csv(w, points)
    }

    /// Diagnostics summary for JSON export.
    pub fn diagnostics_summary(&self) -> DiagnosticsSummary {
        DiagnosticsSummary {
            y0: self.y0,
            y0_plain: self.y0_plain,
            clamp_bound: self.field.bound,
            total_clamped: self.diagnostics.iter().map(|d| d.clamped).sum(),
            max_condition: self.diagnostics.iter().map(|d| d.condition).fold(0.0, f64::max),
            steps: self.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub y0: Estimate,
    pub y0_plain: Estimate,
    pub clamp_bound: f64,
    pub total_clamped: usize,
    pub max_condition: f64,
    pub steps: Vec<StepDiagnostics>,
}
