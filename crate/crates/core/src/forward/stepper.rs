//! One grid step of the jump diffusion with exact jump-time insertion.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::model::{fd_step, ModelSpec};

/// Per-step record: Brownian increment and the jumps that occurred.
#[derive(Debug, Default, Clone)]
pub(crate) struct StepRecord {
    pub dw: Vec<f64>,
    /// Jump times relative to the start of the step, in `(0, dt]`.
    pub jump_times: Vec<f64>,
    pub jump_marks: Vec<f64>,
}

pub(crate) struct Stepper<'a> {
    model: &'a ModelSpec,
    dt: f64,
    poisson: Option<Poisson<f64>>,
    dim: usize,
    times: Vec<f64>,
    z: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
    comp: Vec<f64>,
    beta: Vec<f64>,
    mark: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a ModelSpec, dt: f64) -> Self {
        let d = model.dim();
        let rate = model.jump_measure().intensity() * dt;
        let poisson = if model.has_jumps() && rate > 0.0 {
            Some(Poisson::new(rate).expect("positive finite Poisson rate"))
        } else {
            None
        };
        Stepper {
            model,
            dt,
            poisson,
            dim: d,
            times: Vec::new(),
            z: vec![0.0; d],
            b: vec![0.0; d],
            sigma: vec![0.0; d * d],
            comp: vec![0.0; d],
            beta: vec![0.0; d],
            mark: vec![0.0; model.jump_measure().mark_dim()],
        }
    }

    pub(crate) fn new_record(&self) -> StepRecord {
        StepRecord { dw: vec![0.0; self.dim], jump_times: Vec::new(), jump_marks: Vec::new() }
    }

    /// Euler increment `b h + σ dW - h Σ w β` between events, written into `out`.
    fn continuous_increment(&mut self, x: &[f64], h: f64, dw: &[f64], out: &mut [f64]) {
        let d = self.dim;
        self.model.drift(x, &mut self.b);
        self.model.diffusion(x, &mut self.sigma);
        let jumps = self.poisson.is_some();
        if jumps {
            self.model.compensator(x, &mut self.comp);
        }
        for i in 0..d {
            let mut inc = self.b[i] * h;
            for j in 0..d {
                inc += self.sigma[i * d + j] * dw[j];
            }
            if jumps {
                inc -= h * self.comp[i];
            }
            out[i] = inc;
        }
    }

    /// Advances `x` over one step using `rng`; returns false if the state became
    /// non-finite. When `tangent` is given, the linearized scheme is propagated
    /// alongside (finite-difference Jacobians of each sub-step map).
    pub(crate) fn advance(
        &mut self,
        x: &mut [f64],
        rng: &mut ChaCha8Rng,
        rec: &mut StepRecord,
        mut tangent: Option<&mut DMatrix<f64>>,
    ) -> bool {
        let d = self.dim;
        rec.dw.fill(0.0);
        rec.jump_times.clear();
        rec.jump_marks.clear();
        self.times.clear();
        if let Some(p) = &self.poisson {
            let n = p.sample(rng) as usize;
            for _ in 0..n {
                // (0, dt]
                self.times.push(self.dt * (1.0 - rng.random::<f64>()));
            }
            self.times.sort_by(f64::total_cmp);
        }
        let n = self.times.len();
        let mut prev = 0.0;
        let mut dw_sub = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for seg in 0..=n {
            let tau = if seg < n { self.times[seg] } else { self.dt };
            let h = tau - prev;
            if h > 0.0 {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    self.z[j] = z;
                    dw_sub[j] = h.sqrt() * z;
                    rec.dw[j] += dw_sub[j];
                }
                if let Some(jac) = tangent.as_deref_mut() {
                    let step_jac = self.increment_jacobian(x, h, &dw_sub);
                    *jac = step_jac * &*jac;
                }
                self.continuous_increment(x, h, &dw_sub, &mut inc);
                for i in 0..d {
                    x[i] += inc[i];
                }
            }
            if seg < n {
                let mut mark = std::mem::take(&mut self.mark);
                self.model.jump_measure().sample_mark(rng, &mut mark);
                if let Some(jac) = tangent.as_deref_mut() {
                    let jump_jac = self.jump_jacobian(x, &mark);
                    *jac = jump_jac * &*jac;
                }
                self.model.jump(x, &mark, &mut self.beta);
                for i in 0..d {
                    x[i] += self.beta[i];
                }
                rec.jump_times.push(tau);
                rec.jump_marks.extend_from_slice(&mark);
                self.mark = mark;
            }
            prev = tau;
        }
        x.iter().all(|v| v.is_finite())
    }

    /// `I + ∇_x [b h + σ dW - h Σ w β](x)`.
    fn increment_jacobian(&mut self, x: &[f64], h: f64, dw: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let step = fd_step(x);
        let mut jac = DMatrix::<f64>::identity(d, d);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for c in 0..d {
            xp[c] = x[c] + step;
            self.continuous_increment(&xp, h, dw, &mut fp);
            xp[c] = x[c] - step;
            self.continuous_increment(&xp, h, dw, &mut fm);
            xp[c] = x[c];
            for r in 0..d {
                jac[(r, c)] += (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        jac
    }

    /// `I + ∇_x β(x, e)`.
    fn jump_jacobian(&mut self, x: &[f64], e: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let step = fd_step(x);
        let mut jac = DMatrix::<f64>::identity(d, d);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for c in 0..d {
            xp[c] = x[c] + step;
            self.model.jump(&xp, e, &mut fp);
            xp[c] = x[c] - step;
            self.model.jump(&xp, e, &mut fm);
            xp[c] = x[c];
            for r in 0..d {
                jac[(r, c)] += (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        jac
    }
}
