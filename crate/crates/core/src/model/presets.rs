//! Built-in models. Financial models use the log-moneyness state
//! `x = ln(S/K)` under the pricing measure, so `e^x` is a discounted martingale
//! after removing the short rate.

use serde::{Deserialize, Serialize};

use super::jump::{JumpMeasure, DEFAULT_NODES};
use super::spec::ModelSpec;
use crate::error::Result;

/// All coefficients zero: `X_{t,s}(x) = x`.
pub fn zero(dim: usize) -> ModelSpec {
    ModelSpec::builder(dim).name("zero").build().expect("zero model is valid")
}

/// Constant drift and volatility in one dimension, no jumps.
pub fn constant(drift: f64, vol: f64) -> ModelSpec {
    ModelSpec::builder(1)
        .name("constant")
        .drift(move |_, out| out[0] = drift)
        .diffusion(move |_, out| out[0] = vol)
        .bounds(1.0, drift.abs().max(vol.abs()).max(1e-12))
        .build()
        .expect("constant model is valid")
}

/// Standard Brownian motion, `b = 0, σ = 1, β = 0`.
pub fn heat() -> ModelSpec {
    ModelSpec::builder(1)
        .name("heat")
        .diffusion(|_, out| out[0] = 1.0)
        .build()
        .expect("heat model is valid")
}

/// Brownian motion plus translation jumps `β(x, e) = e` with marks uniform on
/// `[-1, 1]` at unit total intensity (density ½).
pub fn toy_uniform() -> ModelSpec {
    ModelSpec::builder(1)
        .name("toy-uniform")
        .diffusion(|_, out| out[0] = 1.0)
        .additive_jump(|e, out| out[0] = e[0])
        .jump_measure(JumpMeasure::uniform(1.0, -1.0, 1.0, DEFAULT_NODES).expect("valid"))
        .bounds(1.0, 1.0)
        .build()
        .expect("toy model is valid")
}

/// Black–Scholes in log-moneyness.
pub fn black_scholes(rate: f64, vol: f64) -> ModelSpec {
    ModelSpec::builder(1)
        .name("bs")
        .drift(move |_, out| out[0] = rate - 0.5 * vol * vol)
        .diffusion(move |_, out| out[0] = vol)
        .bounds(1.0, (rate - 0.5 * vol * vol).abs().max(vol).max(1e-12))
        .build()
        .expect("bs model is valid")
}

/// Parameters of the Merton jump diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonParams {
    pub rate: f64,
    pub vol: f64,
    pub intensity: f64,
    pub mark_mean: f64,
    pub mark_sd: f64,
}

impl Default for MertonParams {
    fn default() -> Self {
        MertonParams { rate: 0.05, vol: 0.2, intensity: 1.0, mark_mean: -0.1, mark_sd: 0.15 }
    }
}

impl MertonParams {
    /// `κ = E[e^Y] - 1` for a log-jump `Y ~ N(m, s²)`.
    pub fn kappa(&self) -> f64 {
        (self.mark_mean + 0.5 * self.mark_sd * self.mark_sd).exp() - 1.0
    }
}

/// Merton jump diffusion in log-moneyness: `β(x, e) = e`, `e ~ N(m, s²)`.
/// The drift `r - σ²/2 - λ(κ - m)` makes `e^{x - rt}` a martingale.
pub fn merton(p: &MertonParams) -> Result<ModelSpec> {
    let drift = p.rate - 0.5 * p.vol * p.vol - p.intensity * (p.kappa() - p.mark_mean);
    let vol = p.vol;
    ModelSpec::builder(1)
        .name("merton")
        .drift(move |_, out| out[0] = drift)
        .diffusion(move |_, out| out[0] = vol)
        .additive_jump(|e, out| out[0] = e[0])
        .jump_measure(JumpMeasure::normal(p.intensity, p.mark_mean, p.mark_sd, DEFAULT_NODES)?)
        .bounds(3.0, drift.abs().max(vol).max(1e-12))
        .build()
}

/// Kou double-exponential jump diffusion in log-moneyness (`eta_up > 1`).
pub fn kou(
    rate: f64,
    vol: f64,
    intensity: f64,
    p_up: f64,
    eta_up: f64,
    eta_down: f64,
) -> Result<ModelSpec> {
    let kappa = p_up * eta_up / (eta_up - 1.0) + (1.0 - p_up) * eta_down / (eta_down + 1.0) - 1.0;
    let mean = p_up / eta_up - (1.0 - p_up) / eta_down;
    let drift = rate - 0.5 * vol * vol - intensity * (kappa - mean);
    ModelSpec::builder(1)
        .name("kou")
        .drift(move |_, out| out[0] = drift)
        .diffusion(move |_, out| out[0] = vol)
        .additive_jump(|e, out| out[0] = e[0])
        .jump_measure(JumpMeasure::double_exponential(
            intensity,
            p_up,
            eta_up,
            eta_down,
            DEFAULT_NODES,
        )?)
        .bounds(10.0, drift.abs().max(vol).max(1e-12))
        .build()
}

/// Named presets with their default parameters.
pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "zero" => Some(zero(1)),
        "heat" => Some(heat()),
        "toy-uniform" => Some(toy_uniform()),
        "bs" => Some(black_scholes(0.05, 0.2)),
        "merton" => merton(&MertonParams::default()).ok(),
        "kou" => kou(0.05, 0.2, 1.0, 0.4, 10.0, 5.0).ok(),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 6] = ["zero", "heat", "toy-uniform", "bs", "merton", "kou"];
