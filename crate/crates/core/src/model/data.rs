//! Terminal condition, obstacle and the polynomial weight `ρ`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature;

pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TimeSpaceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Polynomial weight `ρ(x) = (1 + |x|)^{-p}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightFunction {
    pub exponent: f64,
}

impl WeightFunction {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent >= 0.0) {
            return Err(Error::invalid("weight exponent must be >= 0"));
        }
        Ok(WeightFunction { exponent })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (1.0 + euclid_norm(x)).powf(-self.exponent)
    }

    /// Smallest admissible exponent `κ + d + 1` when an obstacle of growth `κ` is present.
    pub fn required_exponent(kappa: f64, dim: usize) -> f64 {
        kappa + dim as f64 + 1.0
    }

    pub fn check_obstacle_exponent(&self, kappa: f64, dim: usize) -> Result<()> {
        let need = Self::required_exponent(kappa, dim);
        if self.exponent < need {
            return Err(Error::invalid(format!(
                "weight exponent p = {} must be >= κ + d + 1 = {need} when an obstacle is present",
                self.exponent
            )));
        }
        Ok(())
    }
}

/// Terminal condition `g`.
#[derive(Clone)]
pub struct TerminalSpec {
    name: String,
    g: SpaceFn,
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

impl TerminalSpec {
    pub fn new(name: impl Into<String>, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TerminalSpec { name: name.into(), g: Arc::new(g) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", move |_| c)
    }

    /// `g(x) = |x|²`.
    pub fn square() -> Self {
        Self::new("square", |x| x.iter().map(|v| v * v).sum())
    }

    /// Call payoff in log-moneyness `x = ln(S/K)`: `K (e^x - 1)⁺`.
    pub fn call(strike: f64) -> Self {
        Self::new("call", move |x| strike * (x[0].exp() - 1.0).max(0.0))
    }

    /// Put payoff in log-moneyness: `K (1 - e^x)⁺`.
    pub fn put(strike: f64) -> Self {
        Self::new("put", move |x| strike * (1.0 - x[0].exp()).max(0.0))
    }

    pub fn scaled(&self, a: f64) -> Self {
        let g = self.g.clone();
        Self::new(format!("{}*{a}", self.name), move |x| a * g(x))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    /// `∫ g² ρ dx` over `[-radius, radius]^d` (d <= 3) by composite Gauss–Legendre.
    pub fn l2_rho_norm_sq(&self, weight: &WeightFunction, dim: usize, radius: f64) -> Result<f64> {
        integrate_box(dim, radius, |x| {
            let g = self.eval(x);
            g * g * weight.eval(x)
        })
    }

    /// Checks that `g ∈ L²_ρ`: the truncated integrals over boxes of radius
    /// 25, 50 and 100 must have geometrically shrinking increments.
    /// Returns the largest truncated value.
    pub fn check_integrability(&self, weight: &WeightFunction, dim: usize) -> Result<f64> {
        let i1 = self.l2_rho_norm_sq(weight, dim, 25.0)?;
        let i2 = self.l2_rho_norm_sq(weight, dim, 50.0)?;
        let i3 = self.l2_rho_norm_sq(weight, dim, 100.0)?;
        let (d1, d2) = (i2 - i1, i3 - i2);
        let negligible = d2.abs() <= 1e-9 * i3.abs().max(1e-300);
        if !i3.is_finite() || !(negligible || d2 <= 0.9 * d1) {
            return Err(Error::invalid(format!(
                "terminal condition '{}' is not square integrable against ρ with p = {}",
                self.name, weight.exponent
            )));
        }
        Ok(i3)
    }
}

/// Continuous obstacle `h(t, x)` with growth `|h| <= ι (1 + |x|^κ)`.
#[derive(Clone)]
pub struct ObstacleSpec {
    name: String,
    h: TimeSpaceFn,
    iota: f64,
    kappa: f64,
}

impl fmt::Debug for ObstacleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObstacleSpec")
            .field("name", &self.name)
            .field("iota", &self.iota)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl ObstacleSpec {
    pub fn new(
        name: impl Into<String>,
        h: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        iota: f64,
        kappa: f64,
    ) -> Result<Self> {
        if !(iota > 0.0) || !(kappa > 0.0) {
            return Err(Error::invalid("obstacle growth constants ι, κ must be positive"));
        }
        Ok(ObstacleSpec { name: name.into(), h: Arc::new(h), iota, kappa })
    }

    /// American put exercise value in log-moneyness, `K (1 - e^x)⁺`; bounded so κ = 1.
    pub fn put(strike: f64) -> Self {
        Self::new("put", move |_, x| strike * (1.0 - x[0].exp()).max(0.0), strike, 1.0)
            .expect("valid")
    }

    /// Constant obstacle, e.g. a very low level that is never active.
    pub fn constant(level: f64) -> Self {
        Self::new("constant", move |_, _| level, level.abs().max(1.0), 1.0).expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.h)(t, x)
    }

    /// Spot-check the growth bound on a tensor grid of `pts` points per axis.
    pub fn check_growth(&self, times: &[f64], lo: &[f64], hi: &[f64], pts: usize) -> Result<()> {
        let d = lo.len();
        let pts = pts.max(2);
        let total = pts.pow(d as u32);
        let mut x = vec![0.0; d];
        for &t in times {
            for idx in 0..total {
                let mut rem = idx;
                for j in 0..d {
                    let i = rem % pts;
                    rem /= pts;
                    x[j] = lo[j] + (hi[j] - lo[j]) * i as f64 / (pts - 1) as f64;
                }
                let h = self.eval(t, &x);
                let bound = self.iota * (1.0 + euclid_norm(&x).powf(self.kappa));
                if !h.is_finite() || h.abs() > bound * (1.0 + 1e-12) {
                    return Err(Error::invalid(format!(
                        "obstacle |h({t}, {x:?})| = {} exceeds ι(1+|x|^κ) = {bound}",
                        h.abs()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn integrate_box(dim: usize, radius: f64, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    if dim == 0 || dim > 3 {
        return Err(Error::invalid("box integration supports 1 <= d <= 3"));
    }
    let rule = if dim == 1 {
        let panels = (2.0 * radius).ceil().max(2.0) as usize;
        quadrature::composite_legendre(-radius, radius, panels + panels % 2, 8)
    } else {
        quadrature::composite_legendre(-radius, radius, 20, 4)
    };
    let n = rule.len();
    let total = n.pow(dim as u32);
    let mut x = vec![0.0; dim];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for xj in x.iter_mut() {
            let i = rem % n;
            rem /= n;
            *xj = rule.nodes[i];
            w *= rule.weights[i];
        }
        acc += w * f(&x);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_exponent_rule() {
        let w = WeightFunction::new(2.5).unwrap();
        assert!(w.check_obstacle_exponent(1.0, 1).is_err());
        assert!(WeightFunction::new(3.0).unwrap().check_obstacle_exponent(1.0, 1).is_ok());
        assert_eq!(WeightFunction::new(4.0).unwrap().eval(&[1.0]), 1.0 / 16.0);
    }

    #[test]
    fn square_terminal_needs_heavy_weight() {
        let g = TerminalSpec::square();
        // ∫ x⁴ (1+|x|)^{-p} converges iff p > 5
        assert!(g.check_integrability(&WeightFunction::new(4.0).unwrap(), 1).is_err());
        assert!(g.check_integrability(&WeightFunction::new(8.0).unwrap(), 1).is_ok());
    }

    #[test]
    fn exponential_call_is_not_in_weighted_l2() {
        let g = TerminalSpec::call(100.0);
        assert!(g.check_integrability(&WeightFunction::new(10.0).unwrap(), 1).is_err());
        let p = TerminalSpec::put(100.0);
        assert!(p.check_integrability(&WeightFunction::new(3.0).unwrap(), 1).is_ok());
    }

    #[test]
    fn put_obstacle_growth_holds() {
        let h = ObstacleSpec::put(100.0);
        h.check_growth(&[0.0, 0.5, 1.0], &[-5.0], &[5.0], 101).unwrap();
        let bad = ObstacleSpec::new("cubic", |_, x| x[0].powi(3), 1.0, 1.0).unwrap();
        assert!(bad.check_growth(&[0.0], &[-5.0], &[5.0], 11).is_err());
    }
}
