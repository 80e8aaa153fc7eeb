use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `f(t, x, y, z, v̄)`.
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// A jump functional `γ(e)`; the driver sees `v̄ = ∫ v(e) γ(e) λ(de)`.
pub type Functional = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Maximum number of jump functionals a driver may depend on.
pub const MAX_FUNCTIONALS: usize = 8;

/// Scalar nonlinearity of the equation. The dependence on the jump
/// increment `v(e)` enters only through finitely many linear functionals.
#[derive(Clone)]
pub struct DriverSpec {
    name: String,
    f: DriverFn,
    functionals: Vec<Functional>,
    lipschitz: f64,
    f0_bound: f64,
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("functionals", &self.functionals.len())
            .field("lipschitz", &self.lipschitz)
            .field("f0_bound", &self.f0_bound)
            .finish()
    }
}

impl DriverSpec {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        functionals: Vec<Functional>,
        lipschitz: f64,
        f0_bound: f64,
    ) -> Result<Self> {
        if functionals.len() > MAX_FUNCTIONALS {
            return Err(Error::invalid(format!(
                "at most {MAX_FUNCTIONALS} jump functionals are supported, got {}",
                functionals.len()
            )));
        }
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::invalid("driver Lipschitz constant must be finite and >= 0"));
        }
        Ok(DriverSpec { name: name.into(), f: Arc::new(f), functionals, lipschitz, f0_bound })
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _, _, _| 0.0, Vec::new(), 0.0, 0.0).expect("valid")
    }

    /// `f = -r y`: discounting at a constant short rate.
    pub fn discount(rate: f64) -> Self {
        Self::new("discount", move |_, _, y, _, _| -rate * y, Vec::new(), rate.abs(), 0.0)
            .expect("valid")
    }

    /// Hedging with a higher borrowing rate `R >= r` in a one-asset market:
    /// `f = -r y - θ z + (R - r)(y - z/σ)⁻`, where `z/σ` is the amount held in the asset.
    pub fn borrowing(rate: f64, borrow_rate: f64, theta: f64, sigma: f64) -> Result<Self> {
        if borrow_rate < rate || !(sigma > 0.0) {
            return Err(Error::invalid("borrowing driver needs R >= r and σ > 0"));
        }
        let spread = borrow_rate - rate;
        let lip = (rate.abs() + spread).max(theta.abs() + spread / sigma);
        Self::new(
            "borrowing",
            move |_, _, y, z, _| -rate * y - theta * z[0] + spread * (-(y - z[0] / sigma)).max(0.0),
            Vec::new(),
            lip,
            0.0,
        )
    }

    /// `f = -r y + c v̄` with `v̄ = ∫ v(e) λ(de)`: a linear jump-sensitive driver.
    pub fn jump_linear(rate: f64, coupling: f64) -> Self {
        let one: Functional = Arc::new(|_e: &[f64]| 1.0);
        Self::new(
            "jump-linear",
            move |_, _, y, _, v| -rate * y + coupling * v[0],
            vec![one],
            rate.abs() + coupling.abs(),
            0.0,
        )
        .expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn f0_bound(&self) -> f64 {
        self.f0_bound
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    pub fn num_functionals(&self) -> usize {
        self.functionals.len()
    }

    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64], vbar: &[f64]) -> f64 {
        (self.f)(t, x, y, z, vbar)
    }

    /// `f⁰(t, x) = f(t, x, 0, 0, 0)`.
    pub fn f0(&self, t: f64, x: &[f64]) -> f64 {
        let z = vec![0.0; x.len()];
        let v = vec![0.0; self.functionals.len()];
        (self.f)(t, x, 0.0, &z, &v)
    }

    /// Random secant check of the Lipschitz constant in `(y, z, v̄)`; returns the
    /// largest observed ratio and fails when it exceeds the declared constant.
    pub fn check_lipschitz(&self, dim: usize, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = self.functionals.len();
        let mut worst: f64 = 0.0;
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
        };
        for _ in 0..samples {
            let t = rng.random::<f64>();
            let x = draw(&mut rng, dim);
            let (y1, y2) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let (z1, z2) = (draw(&mut rng, dim), draw(&mut rng, dim));
            let (v1, v2) = (draw(&mut rng, q), draw(&mut rng, q));
            let df = (self.eval(t, &x, y1, &z1, &v1) - self.eval(t, &x, y2, &z2, &v2)).abs();
            let dist = (y1 - y2).abs() + euclid(&z1, &z2) + euclid(&v1, &v2);
            if dist > 0.0 {
                worst = worst.max(df / dist);
            }
        }
        if worst > self.lipschitz * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::invalid(format!(
                "driver '{}' secant ratio {worst} exceeds declared Lipschitz {}",
                self.name, self.lipschitz
            )));
        }
        Ok(worst)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_drivers_respect_declared_lipschitz() {
        for d in [
            DriverSpec::zero(),
            DriverSpec::discount(0.05),
            DriverSpec::borrowing(0.05, 0.08, 0.3, 0.2).unwrap(),
            DriverSpec::jump_linear(0.05, 0.5),
        ] {
            d.check_lipschitz(1, 5000, 1).unwrap();
        }
    }

    #[test]
    fn understated_lipschitz_is_caught() {
        let d = DriverSpec::new("steep", |_, _, y, _, _| 3.0 * y, Vec::new(), 1.0, 0.0).unwrap();
        assert!(d.check_lipschitz(1, 100, 2).is_err());
    }

    #[test]
    fn too_many_functionals_rejected() {
        let g: Functional = Arc::new(|_e: &[f64]| 1.0);
        let r = DriverSpec::new("wide", |_, _, _, _, _| 0.0, vec![g; 9], 0.0, 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn borrowing_driver_penalizes_short_cash() {
        let d = DriverSpec::borrowing(0.05, 0.1, 0.0, 0.2).unwrap();
        // y = 10, z/σ = 15: borrowing 5 at the spread 0.05
        let f = d.eval(0.0, &[0.0], 10.0, &[3.0], &[]);
        assert!((f - (-0.5 + 0.05 * 5.0)).abs() < 1e-12);
    }
}
