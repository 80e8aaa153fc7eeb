//! Empirical check of the two-sided equivalence between `∫ |φ| ρ dx` and
//! `∫ E|φ(X_{t,s}(x))| ρ(x) dx`.
//!
//! The outer `x`-integral is a deterministic composite Gauss–Legendre rule
//! on `[-R, R]`, so Monte Carlo error enters only through the inner
//! expectation. The path budget `M` is split evenly over the quadrature
//! nodes. One space dimension.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{NoiseSource, Stepper, TimeGrid};
use crate::model::{ModelSpec, WeightFunction};
use crate::parallel::{map_chunks, CHUNK};
use crate::quadrature::{composite_legendre, Rule};

/// A named test function `φ(x)`.
#[derive(Clone)]
pub struct TestFunction {
    id: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("id", &self.id).finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new(id: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction { id: id.into(), f: Arc::new(f) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// A named time-space function `Ψ(s, x)`.
#[derive(Clone)]
pub struct SpaceTimeFunction {
    id: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SpaceTimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceTimeFunction").field("id", &self.id).finish_non_exhaustive()
    }
}

impl SpaceTimeFunction {
    pub fn new(id: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SpaceTimeFunction { id: id.into(), f: Arc::new(f) }
    }

    /// `Ψ(s, x) = φ(x)`.
    pub fn from_space(phi: &TestFunction) -> Self {
        let f = phi.f.clone();
        SpaceTimeFunction { id: phi.id.clone(), f: Arc::new(move |_, x| f(x)) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eval(&self, s: f64, x: f64) -> f64 {
        (self.f)(s, x)
    }
}

/// Interval indicators, Gaussians `gauss_m_s` with mean `m` and scale `s`, `|x|^k e^{-x²}` for `k = 0, 1, 2` and a
/// discontinuous signed function.
pub fn shipped_family() -> Vec<TestFunction> {
    let indicator = |a: f64, b: f64| move |x: f64| if (a..=b).contains(&x) { 1.0 } else { 0.0 };
    vec![
        TestFunction::new("ind_-1_1", indicator(-1.0, 1.0)),
        TestFunction::new("ind_0_2", indicator(0.0, 2.0)),
        TestFunction::new("ind_-3_-2", indicator(-3.0, -2.0)),
        TestFunction::new("gauss_0_2", |x: f64| (-x * x / 4.0).exp()),
        TestFunction::new("gauss_1_0.5", |x: f64| (-(x - 1.0).powi(2) / 0.25).exp()),
        TestFunction::new("abs0_gauss", |x: f64| (-x * x).exp()),
        TestFunction::new("abs1_gauss", |x: f64| x.abs() * (-x * x).exp()),
        TestFunction::new("abs2_gauss", |x: f64| x * x * (-x * x).exp()),
        TestFunction::new("sign_exp", |x: f64| x.signum() * (-x.abs()).exp()),
    ]
}

/// Composite Gauss–Legendre rule on `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XQuadrature {
    pub radius: f64,
    pub panels: usize,
    pub per_panel: usize,
}

impl XQuadrature {
    /// Radius where the tail of `ρ` carries less than 0.1% of its mass
    /// (capped at 50), with half-unit panels of 4 nodes.
    pub fn for_weight(weight: &WeightFunction) -> Self {
        let p = weight.exponent;
        let radius = if p > 1.0 { (1e3f64.powf(1.0 / (p - 1.0)) - 1.0).clamp(1.0, 50.0) } else { 50.0 };
        XQuadrature { radius, panels: (4.0 * radius).ceil() as usize, per_panel: 4 }
    }

    fn rule(&self, radius: f64) -> Rule {
        let panels = ((self.panels as f64) * radius / self.radius).ceil().max(1.0) as usize;
        composite_legendre(-radius, radius, panels, self.per_panel)
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.panels == 0 || self.per_panel == 0 {
            return Err(Error::invalid("x quadrature needs radius > 0 and nonempty panels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub phi_id: String,
    pub s: f64,
    pub ratio: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub min: f64,
    pub max: f64,
    /// `max / min`.
    pub spread: f64,
    pub max_std_error: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRatioReport {
    pub rows: Vec<RatioRow>,
}

impl NormRatioReport {
    pub fn summary(&self) -> NormSummary {
        let min = self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let max = self.rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        NormSummary {
            min,
            max,
            spread: max / min,
            max_std_error: self.rows.iter().map(|r| r.std_error).fold(0.0, f64::max),
            rows: self.rows.len(),
        }
    }

    /// CSV `phi_id,s,ratio,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi_id,s,ratio,stderr")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.phi_id, r.s, r.ratio, r.std_error)?;
        }
        Ok(())
    }
}

/// Fraction of `∫_{-4R}^{4R} |φ| ρ` lying outside `[-R, R]`; fails above 1%.
fn check_tail(quad: &XQuadrature, weight: &WeightFunction, f: impl Fn(f64) -> f64) -> Result<()> {
    let inner = quad.rule(quad.radius).integrate(|x| f(x).abs() * weight.eval(&[x]));
    let outer = quad.rule(4.0 * quad.radius).integrate(|x| f(x).abs() * weight.eval(&[x]));
    if !(outer > 0.0) || !outer.is_finite() {
        return Err(Error::invalid("test function has zero or infinite weighted norm"));
    }
    let fraction = ((outer - inner) / outer).max(0.0);
    if fraction > 0.01 {
        return Err(Error::Quadrature { fraction });
    }
    Ok(())
}

/// `Σ_i w_i ρ(x_i) f(x_i)`, summed in the same order as the numerators.
fn weighted_sum(rule: &Rule, rho: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    rule.nodes.iter().zip(&rule.weights).zip(rho).map(|((&x, &w), &rh)| w * rh * f(x)).sum()
}

/// States at the recorded step indices, `[((node * per_node) + p) * R + r]`.
struct Samples {
    per_node: usize,
    record: Vec<usize>,
    states: Vec<f64>,
}

impl Samples {
    fn simulate(
        model: &ModelSpec,
        grid: &TimeGrid,
        nodes: &[f64],
        paths: usize,
        seed: u64,
        record: Vec<usize>,
    ) -> Result<Samples> {
        if model.dim() != 1 {
            return Err(Error::invalid("norm checks are one-dimensional"));
        }
        let per_node = (paths / nodes.len()).max(1);
        let total = per_node * nodes.len();
        let last = record.iter().copied().max().unwrap_or(0);
        let noise = NoiseSource::new(seed);
        let offset = grid.noise_offset();
        let r = record.len();
        let chunks = map_chunks(total, CHUNK, |range| -> Result<Vec<f64>> {
            let mut stepper = Stepper::new(model, grid.dt());
            let mut rec = stepper.new_record();
            let mut out = Vec::with_capacity(range.len() * r);
            for path in range {
                let mut x = vec![nodes[path / per_node]];
                let mut row = vec![0.0; r];
                for k in 0..=last {
                    for (slot, &target) in row.iter_mut().zip(&record) {
                        if target == k {
                            *slot = x[0];
                        }
                    }
                    if k == last {
                        break;
                    }
                    let mut rng = noise.at(path as u64, offset.wrapping_add(k as u64));
                    if !stepper.advance(&mut x, &mut rng, &mut rec, None) {
                        return Err(Error::Numeric(format!("state at path {path}, step {}", k + 1)));
                    }
                }
                out.extend(row);
            }
            Ok(out)
        });
        let mut states = Vec::with_capacity(total * r);
        for c in chunks {
            states.extend(c?);
        }
        Ok(Samples { per_node, record, states })
    }

    fn value(&self, node: usize, p: usize, r: usize) -> f64 {
        self.states[(node * self.per_node + p) * self.record.len() + r]
    }

    /// Mean and variance of `values` for one node; constant samples give the
    /// constant back exactly.
    fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
        let mut n = 0usize;
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values.clone() {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            n += 1;
        }
        if lo == hi {
            return (lo, 0.0);
        }
        let mean = sum / n as f64;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        (mean, var)
    }
}

/// Ratios `∫ E|φ(X_{t,s}(x))| ρ dx / ∫ |φ| ρ dx` for every `φ` and every
/// `s` in `s_list`, with `t = grid.t0()`; each `s` must be a grid node.
#[allow(clippy::too_many_arguments)]
pub fn norm_ratio(
    model: &ModelSpec,
    weight: &WeightFunction,
    family: &[TestFunction],
    grid: &TimeGrid,
    s_list: &[f64],
    quadrature: &XQuadrature,
    paths: usize,
    seed: u64,
) -> Result<NormRatioReport> {
    quadrature.validate()?;
    let record = s_list
        .iter()
        .map(|&s| grid.node_index(s).ok_or_else(|| Error::Grid(format!("s = {s} is not a grid node"))))
        .collect::<Result<Vec<_>>>()?;
    let rule = quadrature.rule(quadrature.radius);
    let rho: Vec<f64> = rule.nodes.iter().map(|&x| weight.eval(&[x])).collect();
    let denominators = family
        .iter()
        .map(|phi| {
            check_tail(quadrature, weight, |x| phi.eval(x))?;
            Ok(weighted_sum(&rule, &rho, |x| phi.eval(x).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = Samples::simulate(model, grid, &rule.nodes, paths, seed, record)?;
    let mut rows = Vec::with_capacity(family.len() * s_list.len());
    for (phi, &den) in family.iter().zip(&denominators) {
        for (r, &s) in s_list.iter().enumerate() {
            let (mut num, mut var) = (0.0, 0.0);
            for (i, (&w, &rh)) in rule.weights.iter().zip(&rho).enumerate() {
                let vals = (0..samples.per_node).map(|p| phi.eval(samples.value(i, p, r)).abs());
                let (mean, v) = Samples::moments(vals);
                num += w * rh * mean;
                var += (w * rh).powi(2) * v / samples.per_node as f64;
            }
            rows.push(RatioRow { phi_id: phi.id.clone(), s, ratio: num / den, std_error: var.sqrt() / den });
        }
    }
    Ok(NormRatioReport { rows })
}

/// Ratios `∫∫ E|Ψ(s, X_{t,s}(x))| ds ρ dx / ∫∫ |Ψ(s, x)| ds ρ dx` over the
/// whole grid, with the time integral as a left Riemann sum on the grid.
pub fn spacetime_norm_ratio(
    model: &ModelSpec,
    weight: &WeightFunction,
    family: &[SpaceTimeFunction],
    grid: &TimeGrid,
    quadrature: &XQuadrature,
    paths: usize,
    seed: u64,
) -> Result<NormRatioReport> {
    quadrature.validate()?;
    let n = grid.steps();
    let dt = grid.dt();
    let times: Vec<f64> = (0..n).map(|k| grid.time(k)).collect();
    let rule = quadrature.rule(quadrature.radius);
    let rho: Vec<f64> = rule.nodes.iter().map(|&x| weight.eval(&[x])).collect();
    let denominators = family
        .iter()
        .map(|psi| {
            for &t in &times {
                check_tail(quadrature, weight, |x| psi.eval(t, x))?;
            }
            Ok(weighted_sum(&rule, &rho, |x| times.iter().map(|&t| dt * psi.eval(t, x).abs()).sum::<f64>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = Samples::simulate(model, grid, &rule.nodes, paths, seed, (0..n).collect())?;
    let mut rows = Vec::with_capacity(family.len());
    for (psi, &den) in family.iter().zip(&denominators) {
        let (mut num, mut var) = (0.0, 0.0);
        for (i, (&w, &rh)) in rule.weights.iter().zip(&rho).enumerate() {
            let vals = (0..samples.per_node).map(|p| {
                times.iter().enumerate().map(|(k, &t)| dt * psi.eval(t, samples.value(i, p, k)).abs()).sum::<f64>()
            });
            let (mean, v) = Samples::moments(vals);
            num += w * rh * mean;
            var += (w * rh).powi(2) * v / samples.per_node as f64;
        }
        rows.push(RatioRow { phi_id: psi.id.clone(), s: grid.t_end(), ratio: num / den, std_error: var.sqrt() / den });
    }
    Ok(NormRatioReport { rows })
}

#[cfg(test)]
mod tests;
