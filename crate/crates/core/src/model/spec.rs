use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::jump::{norm_sq, JumpMeasure};
use crate::error::{Error, Result};

/// `x -> out` vector field (drift, or row-major `d×d` diffusion matrix).
pub type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(x, e) -> out` jump coefficient `β(x, e)`.
pub type JumpField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Coefficients of the forward jump diffusion
/// `dX = b(X) dt + σ(X) dW + ∫ β(X-, e) μ̃(dt, de)`
/// together with the user-declared growth constants.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    drift: VecField,
    diffusion: VecField,
    jump: JumpField,
    jump_measure: JumpMeasure,
    jump_bound: f64,
    coef_bound: f64,
    /// `Σ_j w_j β(e_j)` when β does not depend on the state.
    compensator: Option<Vec<f64>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("jump_measure", &self.jump_measure)
            .field("jump_bound", &self.jump_bound)
            .field("coef_bound", &self.coef_bound)
            .finish_non_exhaustive()
    }
}

pub struct ModelBuilder {
    name: String,
    dim: usize,
    drift: Option<VecField>,
    diffusion: Option<VecField>,
    jump: Option<JumpField>,
    additive: bool,
    jump_measure: JumpMeasure,
    jump_bound: f64,
    coef_bound: f64,
}

impl ModelBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    /// Diffusion matrix written row-major into a `d*d` buffer.
    pub fn diffusion(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn jump(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jump = Some(Arc::new(f));
        self.additive = false;
        self
    }

    /// State-independent jumps `β(x, e) = f(e)`; the compensator drift is cached.
    pub fn additive_jump(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jump = Some(Arc::new(move |_x: &[f64], e: &[f64], out: &mut [f64]| f(e, out)));
        self.additive = true;
        self
    }

    pub fn jump_measure(mut self, m: JumpMeasure) -> Self {
        self.jump_measure = m;
        self
    }

    /// Declared constants `K_β` (jump size bound) and `K` (coefficient growth/Lipschitz).
    pub fn bounds(mut self, jump_bound: f64, coef_bound: f64) -> Self {
        self.jump_bound = jump_bound;
        self.coef_bound = coef_bound;
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::invalid("state dimension must be >= 1"));
        }
        if !(self.jump_bound > 0.0) || !(self.coef_bound > 0.0) {
            return Err(Error::invalid("declared constants must be positive"));
        }
        self.jump_measure.validate()?;
        let zero_vec: VecField = Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0));
        let zero_jump: JumpField = Arc::new(|_x: &[f64], _e: &[f64], out: &mut [f64]| out.fill(0.0));
        let additive = self.additive || self.jump.is_none();
        let mut model = ModelSpec {
            name: self.name,
            dim: d,
            drift: self.drift.unwrap_or_else(|| zero_vec.clone()),
            diffusion: self.diffusion.unwrap_or(zero_vec),
            jump: self.jump.unwrap_or(zero_jump),
            jump_measure: self.jump_measure,
            jump_bound: self.jump_bound,
            coef_bound: self.coef_bound,
            compensator: None,
        };
        if additive {
            let origin = vec![0.0; d];
            let mut c = vec![0.0; d];
            model.compensator_uncached(&origin, &mut c);
            model.compensator = Some(c);
        }
        Ok(model)
    }
}

impl ModelSpec {
    pub fn builder(dim: usize) -> ModelBuilder {
        ModelBuilder {
            name: "custom".into(),
            dim,
            drift: None,
            diffusion: None,
            jump: None,
            additive: false,
            jump_measure: JumpMeasure::none(),
            jump_bound: 1.0,
            coef_bound: 1.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jump_measure(&self) -> &JumpMeasure {
        &self.jump_measure
    }

    pub fn jump_bound(&self) -> f64 {
        self.jump_bound
    }

    pub fn coef_bound(&self) -> f64 {
        self.coef_bound
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_measure.has_jumps()
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn jump(&self, x: &[f64], e: &[f64], out: &mut [f64]) {
        (self.jump)(x, e, out)
    }

    /// Compensator drift `Σ_j w_j β(x, e_j)`.
    pub fn compensator(&self, x: &[f64], out: &mut [f64]) {
        match &self.compensator {
            Some(c) => out.copy_from_slice(c),
            None => self.compensator_uncached(x, out),
        }
    }

    fn compensator_uncached(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut buf = vec![0.0; self.dim];
        for q in self.jump_measure.quadrature() {
            (self.jump)(x, &q.mark, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += q.weight * b;
            }
        }
    }

    /// Covariance `a = σ σ*`, row-major.
    pub fn covariance(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut s = vec![0.0; d * d];
        (self.diffusion)(x, &mut s);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            }
        }
    }

    /// Spot-check `|β(x, e)| <= K_β (1 ∧ |e|)` on sampled states and marks.
    /// States are drawn from `N(0, scale² I)`.
    pub fn check_jump_bound(&self, samples: usize, scale: f64, seed: u64) -> Result<()> {
        if !self.has_jumps() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.dim];
        let mut e = vec![0.0; self.jump_measure.mark_dim()];
        let mut out = vec![0.0; self.dim];
        for _ in 0..samples {
            for xi in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi = scale * z;
            }
            self.jump_measure.sample_mark(&mut rng, &mut e);
            self.jump(&x, &e, &mut out);
            let size = norm_sq(&out).sqrt();
            let bound = self.jump_bound * norm_sq(&e).sqrt().min(1.0);
            if size > bound * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::invalid(format!(
                    "|β(x,e)| = {size} exceeds K_β(1∧|e|) = {bound} at x={x:?}, e={e:?}"
                )));
            }
        }
        Ok(())
    }
}
