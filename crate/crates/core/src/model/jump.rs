//! Finite-activity jump measures: total intensity, a mark sampler and a
//! quadrature of `λ(de)` used by the nonlocal operator and the compensator.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Default node count for the built-in quadratures.
pub const DEFAULT_NODES: usize = 32;

/// Law of a single mark `e` (the measure is `intensity * law`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkLaw {
    /// No jumps at all.
    None,
    Uniform { lo: f64, hi: f64 },
    TwoPoint { up: f64, down: f64, p_up: f64 },
    /// Normal log-jump sizes (Merton).
    Normal { mean: f64, sd: f64 },
    /// Asymmetric double exponential (Kou).
    DoubleExponential { p_up: f64, eta_up: f64, eta_down: f64 },
    /// Marks are drawn from the quadrature nodes with probability proportional to the weights.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadNode {
    pub mark: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpMeasure {
    intensity: f64,
    law: MarkLaw,
    mark_dim: usize,
    quadrature: Vec<QuadNode>,
    cumulative: Vec<f64>,
}

impl JumpMeasure {
    pub fn none() -> Self {
        JumpMeasure {
            intensity: 0.0,
            law: MarkLaw::None,
            mark_dim: 1,
            quadrature: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    /// Uniform marks on `[lo, hi]`, density `intensity / (hi - lo)`.
    pub fn uniform(intensity: f64, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::invalid("uniform marks need hi > lo"));
        }
        let rule = quadrature::gauss_legendre(nodes).mapped(lo, hi);
        let scale = intensity / (hi - lo);
        let quad = scalar_nodes(&rule.nodes, rule.weights.iter().map(|w| w * scale));
        Self::from_parts(intensity, MarkLaw::Uniform { lo, hi }, 1, quad)
    }

    pub fn two_point(intensity: f64, up: f64, down: f64, p_up: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_up) {
            return Err(Error::invalid("p_up must lie in [0, 1]"));
        }
        let quad = scalar_nodes(
            &[down, up],
            [intensity * (1.0 - p_up), intensity * p_up].into_iter(),
        );
        Self::from_parts(intensity, MarkLaw::TwoPoint { up, down, p_up }, 1, quad)
    }

    /// Normal marks `N(mean, sd²)`, integrated by Gauss–Hermite.
    pub fn normal(intensity: f64, mean: f64, sd: f64, nodes: usize) -> Result<Self> {
        if !(sd >= 0.0) {
            return Err(Error::invalid("mark standard deviation must be nonnegative"));
        }
        let rule = quadrature::gauss_hermite_normal(nodes);
        let marks: Vec<f64> = rule.nodes.iter().map(|z| mean + sd * z).collect();
        let quad = scalar_nodes(&marks, rule.weights.iter().map(|w| w * intensity));
        Self::from_parts(intensity, MarkLaw::Normal { mean, sd }, 1, quad)
    }

    /// Kou marks: `+Exp(eta_up)` with probability `p_up`, else `-Exp(eta_down)`.
    /// Each side is integrated with Gauss–Laguerre using `nodes / 2` nodes.
    pub fn double_exponential(
        intensity: f64,
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
        nodes: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_up) || !(eta_up > 0.0) || !(eta_down > 0.0) {
            return Err(Error::invalid("double exponential needs p_up in [0,1] and positive rates"));
        }
        let rule = quadrature::gauss_laguerre((nodes / 2).max(1));
        let mut marks = Vec::new();
        let mut weights = Vec::new();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            marks.push(-x / eta_down);
            weights.push(w * intensity * (1.0 - p_up));
            marks.push(x / eta_up);
            weights.push(w * intensity * p_up);
        }
        let quad = scalar_nodes(&marks, weights.into_iter());
        let law = MarkLaw::DoubleExponential { p_up, eta_up, eta_down };
        Self::from_parts(intensity, law, 1, quad)
    }

    /// User-supplied atoms `(mark, weight)`; the intensity is the total weight.
    pub fn discrete(atoms: Vec<QuadNode>) -> Result<Self> {
        let mark_dim = atoms.first().map(|a| a.mark.len()).unwrap_or(1);
        if atoms.iter().any(|a| a.mark.len() != mark_dim) {
            return Err(Error::invalid("all marks must share one dimension"));
        }
        let intensity = atoms.iter().map(|a| a.weight).sum();
        Self::from_parts(intensity, MarkLaw::Discrete, mark_dim, atoms)
    }

    fn from_parts(
        intensity: f64,
        law: MarkLaw,
        mark_dim: usize,
        quadrature: Vec<QuadNode>,
    ) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative = quadrature
            .iter()
            .map(|q| {
                acc += q.weight;
                acc
            })
            .collect();
        let m = JumpMeasure { intensity, law, mark_dim, quadrature, cumulative };
        m.validate()?;
        Ok(m)
    }

    /// Finite nonnegative intensity, nonnegative weights summing to the intensity,
    /// and a finite `Σ w (1 ∧ |e|²)`.
    pub fn validate(&self) -> Result<()> {
        if !self.intensity.is_finite() || self.intensity < 0.0 {
            return Err(Error::invalid(format!(
                "jump intensity must be finite and >= 0, got {}",
                self.intensity
            )));
        }
        if self.quadrature.iter().any(|q| !(q.weight >= 0.0) || q.mark.iter().any(|e| !e.is_finite())) {
            return Err(Error::invalid("quadrature weights must be >= 0 with finite marks"));
        }
        let total: f64 = self.quadrature.iter().map(|q| q.weight).sum();
        if self.intensity > 0.0 && (total - self.intensity).abs() > 1e-9 * self.intensity {
            return Err(Error::invalid(format!(
                "quadrature weights sum to {total}, intensity is {}",
                self.intensity
            )));
        }
        let small_jump_mass: f64 = self
            .quadrature
            .iter()
            .map(|q| q.weight * norm_sq(&q.mark).min(1.0))
            .sum();
        if !small_jump_mass.is_finite() {
            return Err(Error::invalid("integral of (1 ∧ |e|²) is not finite"));
        }
        Ok(())
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn quadrature(&self) -> &[QuadNode] {
        &self.quadrature
    }

    pub fn has_jumps(&self) -> bool {
        self.intensity > 0.0 && !self.quadrature.is_empty()
    }

    /// `∫ f(e) λ(de)` by the quadrature.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.quadrature.iter().map(|q| q.weight * f(&q.mark)).sum()
    }

    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.law {
            MarkLaw::None => out.fill(0.0),
            MarkLaw::Uniform { lo, hi } => out[0] = lo + (hi - lo) * rng.random::<f64>(),
            MarkLaw::TwoPoint { up, down, p_up } => {
                out[0] = if rng.random::<f64>() < *p_up { *up } else { *down }
            }
            MarkLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                out[0] = mean + sd * z;
            }
            MarkLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                let x: f64 = Exp1.sample(rng);
                out[0] = if rng.random::<f64>() < *p_up { x / eta_up } else { -x / eta_down };
            }
            MarkLaw::Discrete => {
                let total = *self.cumulative.last().unwrap_or(&0.0);
                let u = rng.random::<f64>() * total;
                let i = self.cumulative.partition_point(|&c| c <= u).min(self.quadrature.len() - 1);
                out.copy_from_slice(&self.quadrature[i].mark);
            }
        }
    }
}

fn scalar_nodes(marks: &[f64], weights: impl Iterator<Item = f64>) -> Vec<QuadNode> {
    marks
        .iter()
        .zip(weights)
        .map(|(&e, w)| QuadNode { mark: vec![e], weight: w })
        .collect()
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_second_moment_is_one_third() {
        let m = JumpMeasure::uniform(1.0, -1.0, 1.0, DEFAULT_NODES).unwrap();
        assert_relative_eq!(m.integrate(|e| e[0] * e[0]), 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.integrate(|_| 1.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn merton_quadrature_matches_lognormal_mean() {
        let m = JumpMeasure::normal(1.0, -0.1, 0.15, DEFAULT_NODES).unwrap();
        let expected = (-0.1f64 + 0.5 * 0.15 * 0.15).exp();
        assert_relative_eq!(m.integrate(|e| e[0].exp()), expected, epsilon = 1e-12);
    }

    #[test]
    fn kou_quadrature_matches_exponential_moments() {
        let m = JumpMeasure::double_exponential(2.0, 0.4, 10.0, 5.0, DEFAULT_NODES).unwrap();
        let mean = 2.0 * (0.4 / 10.0 - 0.6 / 5.0);
        assert_relative_eq!(m.integrate(|e| e[0]), mean, epsilon = 1e-12);
        let mgf = 2.0 * (0.4 * 10.0 / 9.0 + 0.6 * 5.0 / 6.0);
        assert_relative_eq!(m.integrate(|e| e[0].exp()), mgf, epsilon = 1e-9);
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(JumpMeasure::uniform(-1.0, 0.0, 1.0, 4).is_err());
        assert!(JumpMeasure::discrete(vec![QuadNode { mark: vec![1.0], weight: -0.5 }]).is_err());
    }

    #[test]
    fn sampler_moments_agree_with_quadrature() {
        let measures = [
            JumpMeasure::uniform(1.0, -1.0, 1.0, 16).unwrap(),
            JumpMeasure::two_point(1.0, 0.2, -0.3, 0.3).unwrap(),
            JumpMeasure::normal(1.0, -0.1, 0.15, 32).unwrap(),
            JumpMeasure::double_exponential(1.0, 0.4, 10.0, 5.0, 32).unwrap(),
            JumpMeasure::discrete(vec![
                QuadNode { mark: vec![0.5], weight: 0.25 },
                QuadNode { mark: vec![-1.0], weight: 0.75 },
            ])
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        for m in &measures {
            let mut e = [0.0];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                m.sample_mark(&mut rng, &mut e);
                s1 += e[0];
                s2 += e[0] * e[0];
            }
            let mean = s1 / n as f64;
            let var = s2 / n as f64 - mean * mean;
            let lam = m.intensity();
            let q_mean = m.integrate(|e| e[0]) / lam;
            let q_m2 = m.integrate(|e| e[0] * e[0]) / lam;
            let se = (var / n as f64).sqrt();
            assert!((mean - q_mean).abs() < 4.0 * se, "{:?}: {mean} vs {q_mean}", m.law());
            assert!((s2 / n as f64 - q_m2).abs() < 0.02 * q_m2.max(1e-3), "{:?}", m.law());
        }
    }
}
