//! Scalar fields with analytic or finite-difference derivatives.

/// Finite-difference step `1e-4 (1 + |x|)`.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// A twice differentiable scalar field on `ℝ^d`. Derivatives default to
/// central finite differences.
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let h = fd_step(x);
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = self.value(&xp);
            xp[i] = x[i] - h;
            let fm = self.value(&xp);
            xp[i] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
    }

    /// Row-major `d×d` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let h = fd_step(x);
        let f0 = self.value(x);
        let mut xp = x.to_vec();
        for i in 0..d {
            xp[i] = x[i] + h;
            let fp = self.value(&xp);
            xp[i] = x[i] - h;
            let fm = self.value(&xp);
            xp[i] = x[i];
            out[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * h;
                    xp[j] = x[j] + sj * h;
                    let v = self.value(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let m = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * h * h);
                out[i * d + j] = m;
                out[j * d + i] = m;
            }
        }
    }
}

/// Field given by a closure, differentiated numerically.
pub struct FnField<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Field with closed-form gradient and Hessian.
pub struct AnalyticField<F, G, H> {
    pub value: F,
    pub gradient: G,
    pub hessian: H,
}

impl<F, G, H> ScalarField for AnalyticField<F, G, H>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
    H: Fn(&[f64], &mut [f64]) + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out)
    }
}

/// A time-space field `u(t, x)`.
pub trait SpaceTimeField: Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;

    /// One-sided (forward) difference in time.
    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (self.value(t + h, x) - self.value(t, x)) / h
    }
}

impl<F: Fn(f64, &[f64]) -> f64 + Sync> SpaceTimeField for F {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self(t, x)
    }
}

/// Frozen time slice `x -> u(t, x)` of a time-space field.
pub struct Slice<'a, U: SpaceTimeField + ?Sized> {
    pub field: &'a U,
    pub t: f64,
}

impl<U: SpaceTimeField + ?Sized> ScalarField for Slice<'_, U> {
    fn value(&self, x: &[f64]) -> f64 {
        self.field.value(self.t, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_match_analytic_derivatives() {
        let f = FnField(|x: &[f64]| x[0] * x[0] * x[1] + x[1].sin());
        let x = [0.7, -1.3];
        let mut g = [0.0; 2];
        f.gradient(&x, &mut g);
        assert!((g[0] - 2.0 * 0.7 * -1.3).abs() < 1e-7);
        assert!((g[1] - (0.49 + (-1.3f64).cos())).abs() < 1e-7);
        let mut h = [0.0; 4];
        f.hessian(&x, &mut h);
        assert!((h[0] - 2.0 * -1.3).abs() < 1e-5);
        assert!((h[1] - 1.4).abs() < 1e-5);
        assert!((h[3] + (-1.3f64).sin()).abs() < 1e-5);
    }
}
