//! The integro-differential generator `L = K₁ + K₂` and related diagnostics.

use serde::{Deserialize, Serialize};

use super::driver::DriverSpec;
use super::field::{ScalarField, Slice, SpaceTimeField};
use super::spec::ModelSpec;
use crate::error::{Error, Result};

fn finite(v: f64, what: &str, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} at x = {x:?}")))
    }
}

/// Local part `K₁φ = b·∇φ + ½ a : ∇²φ` with `a = σσ*`.
pub fn apply_k1(model: &ModelSpec, phi: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    let d = model.dim();
    let mut b = vec![0.0; d];
    let mut a = vec![0.0; d * d];
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    model.drift(x, &mut b);
    model.covariance(x, &mut a);
    phi.gradient(x, &mut grad);
    phi.hessian(x, &mut hess);
    if b.iter().chain(&a).chain(&grad).chain(&hess).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("coefficient or derivative at x = {x:?}")));
    }
    let first: f64 = b.iter().zip(&grad).map(|(bi, gi)| bi * gi).sum();
    let second: f64 = a.iter().zip(&hess).map(|(aij, hij)| aij * hij).sum();
    finite(first + 0.5 * second, "K1", x)
}

/// Nonlocal part `K₂φ = Σ_i w_i [φ(x + β(x, e_i)) - φ(x) - β(x, e_i)·∇φ(x)]`.
pub fn apply_k2(model: &ModelSpec, phi: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    let measure = model.jump_measure();
    if !measure.has_jumps() {
        return Ok(0.0);
    }
    let d = model.dim();
    let mut grad = vec![0.0; d];
    phi.gradient(x, &mut grad);
    let f0 = phi.value(x);
    let mut beta = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut acc = 0.0;
    for q in measure.quadrature() {
        model.jump(x, &q.mark, &mut beta);
        for j in 0..d {
            shifted[j] = x[j] + beta[j];
        }
        let fs = finite(phi.value(&shifted), "field at shifted point", &shifted)?;
        let lin: f64 = beta.iter().zip(&grad).map(|(b, g)| b * g).sum();
        acc += q.weight * (fs - f0 - lin);
    }
    finite(acc, "K2", x)
}

/// Full generator `(K₁ + K₂)φ(x)`.
pub fn generator(model: &ModelSpec, phi: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    Ok(apply_k1(model, phi, x)? + apply_k2(model, phi, x)?)
}

/// Jump functionals `v̄_i[u] = Σ_j w_j γ_i(e_j) (u(x + β(x, e_j)) - u(x))`.
pub fn jump_functionals(
    model: &ModelSpec,
    driver: &DriverSpec,
    phi: &dyn ScalarField,
    x: &[f64],
) -> Vec<f64> {
    let d = model.dim();
    let mut out = vec![0.0; driver.num_functionals()];
    if out.is_empty() {
        return out;
    }
    let u0 = phi.value(x);
    let mut beta = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    for q in model.jump_measure().quadrature() {
        model.jump(x, &q.mark, &mut beta);
        for j in 0..d {
            shifted[j] = x[j] + beta[j];
        }
        let du = phi.value(&shifted) - u0;
        for (o, gamma) in out.iter_mut().zip(driver.functionals()) {
            *o += q.weight * gamma(&q.mark) * du;
        }
    }
    out
}

/// Strong-form residual `∂_t u + L u + f(t, x, u, σ*∇u, v̄[u])`.
pub fn pide_residual(
    model: &ModelSpec,
    driver: &DriverSpec,
    u: &dyn SpaceTimeField,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let d = model.dim();
    let slice = Slice { field: u, t };
    let dt = finite(u.time_derivative(t, x), "time derivative", x)?;
    let lu = generator(model, &slice, x)?;
    let value = slice.value(x);
    let mut grad = vec![0.0; d];
    slice.gradient(x, &mut grad);
    let mut sigma = vec![0.0; d * d];
    model.diffusion(x, &mut sigma);
    // z = σ* ∇u
    let z: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| sigma[i * d + j] * grad[i]).sum())
        .collect();
    let vbar = jump_functionals(model, driver, &slice, x);
    let f = driver.eval(t, x, value, &z, &vbar);
    finite(dt + lu + f, "residual", x)
}

/// Outcome of scanning the linkage map `H_e(x) = x + β(x, e)` over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub injective: bool,
    pub min_jacobian: f64,
    /// Grid points with non-positive Jacobian determinant or colliding images.
    pub violations: usize,
}

/// Scans `H_e` on a tensor grid over the box `[lo, hi]` with `grid_pts` points per axis.
pub fn check_linkage_diffeo(
    model: &ModelSpec,
    e: &[f64],
    lo: &[f64],
    hi: &[f64],
    grid_pts: usize,
) -> Result<LinkageReport> {
    let d = model.dim();
    if grid_pts < 2 {
        return Err(Error::invalid("linkage scan needs at least 2 points per axis"));
    }
    if lo.len() != d || hi.len() != d {
        return Err(Error::invalid("box dimension must match the model"));
    }
    let total = grid_pts.pow(d as u32);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut min_jac = f64::INFINITY;
    let mut violations = 0;
    let mut x = vec![0.0; d];
    let mut beta = vec![0.0; d];
    let mut jac = nalgebra::DMatrix::<f64>::zeros(d, d);
    let map = |x: &[f64], beta: &mut [f64]| -> Vec<f64> {
        model.jump(x, e, beta);
        x.iter().zip(beta.iter()).map(|(a, b)| a + b).collect()
    };
    for idx in 0..total {
        let mut rem = idx;
        for j in 0..d {
            let i = rem % grid_pts;
            rem /= grid_pts;
            x[j] = lo[j] + (hi[j] - lo[j]) * i as f64 / (grid_pts - 1) as f64;
        }
        let h = super::field::fd_step(&x);
        let mut xp = x.clone();
        for c in 0..d {
            xp[c] = x[c] + h;
            let fp = map(&xp, &mut beta);
            xp[c] = x[c] - h;
            let fm = map(&xp, &mut beta);
            xp[c] = x[c];
            for r in 0..d {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let det = jac.determinant();
        if !det.is_finite() {
            return Err(Error::Numeric(format!("linkage Jacobian at x = {x:?}")));
        }
        min_jac = min_jac.min(det);
        if det <= 0.0 {
            violations += 1;
        }
        images.push(map(&x, &mut beta));
    }
    // Colliding images: consecutive points along axis 0 must stay apart
    // (strict monotonicity in one dimension).
    let spacing: f64 = (0..d)
        .map(|j| (hi[j] - lo[j]) / (grid_pts - 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + spacing);
    for idx in 0..total {
        if idx % grid_pts + 1 < grid_pts {
            let a = &images[idx];
            let b = &images[idx + 1];
            let dist: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let forward = if d == 1 { b[0] - a[0] } else { dist };
            if forward <= tol {
                violations += 1;
            }
        }
    }
    Ok(LinkageReport { injective: violations == 0, min_jacobian: min_jac, violations })
}
