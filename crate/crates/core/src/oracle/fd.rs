use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{DriverSpec, ModelSpec, ObstacleSpec, TerminalSpec};

/// Boundary value `u(t, x)` used at the ends of the padded grid.
pub type BoundaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Treatment of the two ends of the padded grid.
#[derive(Clone)]
pub enum FdBoundary {
    /// `u(t, x) = g(x)` at and beyond the ends.
    Terminal,
    /// Zero curvature: `u_0 = 2 u_1 - u_2`, extrapolated linearly beyond.
    Linear,
    /// Prescribed values, e.g. the discounted asymptote of `g`.
    Dirichlet(BoundaryFn),
}

impl fmt::Debug for FdBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FdBoundary::Terminal => f.write_str("Terminal"),
            FdBoundary::Linear => f.write_str("Linear"),
            FdBoundary::Dirichlet(_) => f.write_str("Dirichlet(..)"),
        }
    }
}

/// Space-time grid of the finite-difference oracle on `[0, maturity]`.
#[derive(Debug, Clone)]
pub struct FdGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nodes: usize,
    pub steps: usize,
    pub maturity: f64,
    /// Padding added on both sides; `None` uses `max |β|` over the nodes.
    pub pad: Option<f64>,
    pub boundary: FdBoundary,
}

impl FdGrid {
    pub fn new(x_lo: f64, x_hi: f64, nodes: usize, steps: usize, maturity: f64) -> Self {
        FdGrid { x_lo, x_hi, nodes, steps, maturity, pad: None, boundary: FdBoundary::Linear }
    }

    pub fn with_boundary(mut self, boundary: FdBoundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_pad(mut self, pad: f64) -> Self {
        self.pad = Some(pad);
        self
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.nodes - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 3 || self.steps == 0 {
            return Err(Error::invalid("FD grid needs at least 3 nodes and 1 time step"));
        }
        if !(self.x_hi > self.x_lo) || !(self.maturity > 0.0) {
            return Err(Error::invalid("FD grid needs x_hi > x_lo and a positive maturity"));
        }
        if let Some(p) = self.pad {
            if !(p >= 0.0) {
                return Err(Error::invalid("FD padding must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Values of the FD solution on the unpadded nodes, one slice per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSolution {
    xs: Vec<f64>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    stability: f64,
}

impl FdSolution {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Slice at time index `n` (`0` is `t = 0`).
    pub fn slice(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    /// `Δt (Λ + max a / Δx²)`, logged for reference; only the `Δt Λ` part is bounded.
    pub fn stability_number(&self) -> f64 {
        self.stability
    }

    /// Linear interpolation of slice `n`; `None` outside `[x_lo, x_hi]`.
    pub fn interpolate(&self, n: usize, x: f64) -> Option<f64> {
        interp(&self.xs, &self.values[n], x)
    }

    /// CSV with header `step,time,x,u`, one block per time slice.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,time,x,u")?;
        for (n, (t, row)) in self.times.iter().zip(&self.values).enumerate() {
            for (x, u) in self.xs.iter().zip(row) {
                writeln!(w, "{n},{t},{x},{u}")?;
            }
        }
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    let (lo, hi) = (xs[0], xs[n - 1]);
    if !(x >= lo - 1e-12 && x <= hi + 1e-12) {
        return None;
    }
    let dx = (hi - lo) / (n - 1) as f64;
    let s = ((x - lo) / dx).clamp(0.0, (n - 1) as f64);
    let k = (s.floor() as usize).min(n - 2);
    let th = s - k as f64;
    Some((1.0 - th) * ys[k] + th * ys[k + 1])
}

/// Where a shifted node `x_j + β(x_j, e)` lands.
#[derive(Debug, Clone, Copy)]
enum Target {
    Node { k: usize, th: f64 },
    Outside { x: f64 },
}

struct Operator<'a> {
    model: &'a ModelSpec,
    driver: &'a DriverSpec,
    terminal: &'a TerminalSpec,
    obstacle: Option<&'a ObstacleSpec>,
    boundary: FdBoundary,
    xs: Vec<f64>,
    dx: f64,
    dt: f64,
    /// First unpadded node.
    offset: usize,
    interior: usize,
    sigma: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Per node: `(w_q, target_q)` for every quadrature node.
    jumps: Vec<Vec<(f64, Target)>>,
    /// `γ_i(e_q)`, row-major `[i * nq + q]`.
    gammas: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(
        model: &'a ModelSpec,
        driver: &'a DriverSpec,
        terminal: &'a TerminalSpec,
        obstacle: Option<&'a ObstacleSpec>,
        grid: &FdGrid,
    ) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::invalid("the FD oracle is one-dimensional"));
        }
        grid.validate()?;
        let dx = grid.dx();
        let dt = grid.dt();
        let quad = model.jump_measure().quadrature();
        let shift = |x: f64, e: &[f64]| {
            let mut b = [0.0];
            model.jump(&[x], e, &mut b);
            b[0]
        };
        let core: Vec<f64> = (0..grid.nodes).map(|j| grid.x_lo + j as f64 * dx).collect();
        let reach = core
            .iter()
            .flat_map(|&x| quad.iter().map(move |q| (x, q)))
            .map(|(x, q)| shift(x, &q.mark).abs())
            .fold(0.0, f64::max);
        let pad = grid.pad.unwrap_or(reach);
        if reach > pad + dx {
            return Err(Error::Boundary(format!(
                "jump reach {reach} exceeds padding {pad} by more than one cell"
            )));
        }
        let offset = (pad / dx).ceil() as usize;
        let total = grid.nodes + 2 * offset;
        let x0 = grid.x_lo - offset as f64 * dx;
        let xs: Vec<f64> = (0..total).map(|j| x0 + j as f64 * dx).collect();
        let x_last = xs[total - 1];

        let intensity = model.jump_measure().intensity();
        if dt * intensity > 1.0 {
            return Err(Error::Stability(dt * intensity));
        }

        let mut sigma = vec![0.0; total];
        let (mut lower, mut diag, mut upper) =
            (vec![0.0; total], vec![1.0; total], vec![0.0; total]);
        let mut max_a: f64 = 0.0;
        let mut jumps = Vec::with_capacity(total);
        for (j, &x) in xs.iter().enumerate() {
            let (mut b, mut s, mut c) = ([0.0], [0.0], [0.0]);
            model.drift(&[x], &mut b);
            model.diffusion(&[x], &mut s);
            model.compensator(&[x], &mut c);
            if !(b[0].is_finite() && s[0].is_finite() && c[0].is_finite()) {
                return Err(Error::Numeric(format!("coefficients at x = {x}")));
            }
            sigma[j] = s[0];
            let mu = b[0] - c[0];
            // Artificial diffusion keeps the central scheme monotone.
            let half_a = (0.5 * s[0] * s[0]).max(0.5 * mu.abs() * dx);
            max_a = max_a.max(2.0 * half_a);
            lower[j] = -dt * (half_a / (dx * dx) - mu / (2.0 * dx));
            upper[j] = -dt * (half_a / (dx * dx) + mu / (2.0 * dx));
            diag[j] = 1.0 + dt * 2.0 * half_a / (dx * dx);
            let row = quad
                .iter()
                .map(|q| {
                    let y = x + shift(x, &q.mark);
                    let target = if y < x0 || y > x_last {
                        Target::Outside { x: y }
                    } else {
                        let s = ((y - x0) / dx).clamp(0.0, (total - 1) as f64);
                        let k = (s.floor() as usize).min(total - 2);
                        Target::Node { k, th: s - k as f64 }
                    };
                    (q.weight, target)
                })
                .collect();
            jumps.push(row);
        }
        let stability = dt * (intensity + max_a / (dx * dx));
        log::debug!("fd oracle: dt*(Λ + max a/dx²) = {stability:.3e}, dt*Λ = {:.3e}", dt * intensity);

        let nq = quad.len();
        let mut gammas = Vec::with_capacity(driver.num_functionals() * nq);
        for g in driver.functionals() {
            gammas.extend(quad.iter().map(|q| g(&q.mark)));
        }
        Ok(Operator {
            model,
            driver,
            terminal,
            obstacle,
            boundary: grid.boundary.clone(),
            xs,
            dx,
            dt,
            offset,
            interior: grid.nodes,
            sigma,
            lower,
            diag,
            upper,
            jumps,
            gammas,
        })
    }

    fn outside_value(&self, t: f64, x: f64, u: &[f64]) -> f64 {
        match &self.boundary {
            FdBoundary::Terminal => self.terminal.eval(&[x]),
            FdBoundary::Dirichlet(f) => f(t, x),
            FdBoundary::Linear => {
                let n = u.len();
                if x < self.xs[0] {
                    u[0] + (x - self.xs[0]) * (u[1] - u[0]) / self.dx
                } else {
                    u[n - 1] + (x - self.xs[n - 1]) * (u[n - 1] - u[n - 2]) / self.dx
                }
            }
        }
    }

    fn shifted(&self, t: f64, target: Target, u: &[f64]) -> f64 {
        match target {
            Target::Node { k, th } => (1.0 - th) * u[k] + th * u[k + 1],
            Target::Outside { x } => self.outside_value(t, x, u),
        }
    }

    /// `Σ_q w_q (u(x_j + β_q) - u(x_j))` for every node.
    fn jump_term(&self, t: f64, u: &[f64], out: &mut [f64]) {
        for (j, row) in self.jumps.iter().enumerate() {
            out[j] = row.iter().map(|&(w, tg)| w * (self.shifted(t, tg, u) - u[j])).sum();
        }
    }

    fn driver_term(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let nf = self.driver.num_functionals();
        let nq = self.model.jump_measure().quadrature().len();
        let mut vbar = vec![0.0; nf];
        let mut diffs = vec![0.0; nq];
        for j in 0..n {
            let grad = if j == 0 {
                (u[1] - u[0]) / self.dx
            } else if j == n - 1 {
                (u[n - 1] - u[n - 2]) / self.dx
            } else {
                (u[j + 1] - u[j - 1]) / (2.0 * self.dx)
            };
            let z = [self.sigma[j] * grad];
            if nf > 0 {
                for (q, &(_, tg)) in self.jumps[j].iter().enumerate() {
                    diffs[q] = self.shifted(t, tg, u) - u[j];
                }
                let row = &self.jumps[j];
                for (i, v) in vbar.iter_mut().enumerate() {
                    *v = (0..nq).map(|q| row[q].0 * self.gammas[i * nq + q] * diffs[q]).sum();
                }
            }
            out[j] = self.driver.eval(t, &[self.xs[j]], u[j], &z, &vbar);
        }
    }

    /// Solves `(I - Δt L_loc) u = rhs` with the boundary rows, in place.
    fn implicit_solve(&self, t: f64, rhs: &mut [f64]) {
        let n = rhs.len();
        let (mut a, mut b, mut c) = (self.lower.clone(), self.diag.clone(), self.upper.clone());
        let linear = matches!(self.boundary, FdBoundary::Linear);
        if linear {
            // Substitute u_0 = 2u_1 - u_2 and u_{n-1} = 2u_{n-2} - u_{n-3}.
            b[1] += 2.0 * a[1];
            c[1] -= a[1];
            b[n - 2] += 2.0 * c[n - 2];
            a[n - 2] -= c[n - 2];
            a[1] = 0.0;
            c[n - 2] = 0.0;
        } else {
            let (xl, xr) = (self.xs[0], self.xs[n - 1]);
            rhs[0] = self.outside_value(t, xl, rhs);
            rhs[n - 1] = self.outside_value(t, xr, rhs);
            b[0] = 1.0;
            c[0] = 0.0;
            a[n - 1] = 0.0;
            b[n - 1] = 1.0;
        }
        let (lo, hi) = if linear { (1, n - 2) } else { (0, n - 1) };
        thomas(&a[lo..=hi], &b[lo..=hi], &c[lo..=hi], &mut rhs[lo..=hi]);
        if linear {
            rhs[0] = 2.0 * rhs[1] - rhs[2];
            rhs[n - 1] = 2.0 * rhs[n - 2] - rhs[n - 3];
        }
    }

    fn project(&self, t: f64, u: &mut [f64]) {
        if let Some(h) = self.obstacle {
            for (v, &x) in u.iter_mut().zip(&self.xs) {
                *v = v.max(h.eval(t, &[x]));
            }
        }
    }
}

/// Tridiagonal solve; `a[0]` and `c[n-1]` are ignored.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut denom = b[0];
    cp[0] = c[0] / denom;
    d[0] /= denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / denom;
        d[i] = (d[i] - a[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Picard sweeps per time step for the driver.
const PICARD_SWEEPS: usize = 2;

/// One-dimensional IMEX finite-difference solver of the semilinear PIDE,
/// backward from `u(T) = g`: implicit local part, explicit quadrature of the
/// nonlocal part, and projection `u ← max(u, h)` when an obstacle is given.
pub fn fd_solve_pide(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    obstacle: Option<&ObstacleSpec>,
    grid: &FdGrid,
) -> Result<FdSolution> {
    let op = Operator::new(model, driver, terminal, obstacle, grid)?;
    let n_all = op.xs.len();
    let dt = op.dt;
    let keep = |u: &[f64]| u[op.offset..op.offset + op.interior].to_vec();
    let mut u: Vec<f64> = op.xs.iter().map(|&x| terminal.eval(&[x])).collect();
    op.project(grid.maturity, &mut u);
    let mut values = vec![keep(&u)];
    let mut jump = vec![0.0; n_all];
    let mut f = vec![0.0; n_all];
    let mut rhs = vec![0.0; n_all];
    for n in (0..grid.steps).rev() {
        let t_new = n as f64 * dt;
        let t_old = t_new + dt;
        op.jump_term(t_old, &u, &mut jump);
        let mut iterate = u.clone();
        for _ in 0..PICARD_SWEEPS {
            op.driver_term(t_new, &iterate, &mut f);
            for j in 0..n_all {
                rhs[j] = u[j] + dt * (jump[j] + f[j]);
            }
            op.implicit_solve(t_new, &mut rhs);
            iterate.copy_from_slice(&rhs);
        }
        op.project(t_new, &mut iterate);
        if let Some(x) = iterate.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("FD value at x = {} and t = {t_new}", op.xs[x])));
        }
        u = iterate;
        values.push(keep(&u));
    }
    values.reverse();
    let times = (0..=grid.steps).map(|n| n as f64 * dt).collect();
    let stability = {
        let max_a = op.sigma.iter().map(|s| s * s).fold(0.0, f64::max);
        dt * (model.jump_measure().intensity() + max_a / (op.dx * op.dx))
    };
    Ok(FdSolution { xs: keep(&op.xs), times, values, stability })
}

/// Largest `min(u - h, -R)` over the unpadded nodes and time levels, where
/// `R` is the discrete PIDE residual of the stored solution (implicit local
/// part and driver, explicit jump part). At every node either the obstacle is
/// touched or the equation holds, so this vanishes up to the Picard error.
pub fn complementarity_defect(
    model: &ModelSpec,
    driver: &DriverSpec,
    terminal: &TerminalSpec,
    obstacle: &ObstacleSpec,
    grid: &FdGrid,
    solution: &FdSolution,
) -> Result<f64> {
    if driver.num_functionals() > 0 {
        return Err(Error::invalid("complementarity check supports drivers without jump functionals"));
    }
    let op = Operator::new(model, driver, terminal, Some(obstacle), grid)?;
    let dt = op.dt;
    // Only nodes whose stencil and jump targets stay unpadded are checked.
    let xs = solution.xs();
    let m = xs.len();
    let mut worst = f64::NEG_INFINITY;
    for n in 0..grid.steps {
        let (t, un, up) = (solution.times[n], &solution.values[n], &solution.values[n + 1]);
        for j in 1..m - 1 {
            let g = op.offset + j;
            let mut jump = 0.0;
            let mut inside = true;
            for &(w, tg) in &op.jumps[g] {
                match tg {
                    Target::Node { k, th } if k >= op.offset && k + 1 < op.offset + m => {
                        let k = k - op.offset;
                        jump += w * ((1.0 - th) * up[k] + th * up[k + 1] - up[j]);
                    }
                    _ => inside = false,
                }
            }
            if !inside {
                continue;
            }
            let local = -(op.lower[g] * un[j - 1] + (op.diag[g] - 1.0) * un[j] + op.upper[g] * un[j + 1]) / dt;
            let z = [op.sigma[g] * (un[j + 1] - un[j - 1]) / (2.0 * op.dx)];
            let f = driver.eval(t, &[xs[j]], un[j], &z, &[]);
            let residual = (up[j] - un[j]) / dt + local + jump + f;
            let gap = un[j] - obstacle.eval(t, &[xs[j]]);
            worst = worst.max(gap.min(-residual));
        }
    }
    Ok(worst)
}
