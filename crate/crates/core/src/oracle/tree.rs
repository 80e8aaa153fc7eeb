use serde::{Deserialize, Serialize};

use super::closed_form::OptionKind;

fn crr(
    spot: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    maturity: f64,
    steps: usize,
    kind: OptionKind,
    american: bool,
) -> f64 {
    let steps = steps.max(1);
    let dt = maturity / steps as f64;
    let disc = (-rate * dt).exp();
    if vol <= 0.0 {
        // Deterministic path S0 e^{rt}.
        let value_at = |k: usize| {
            let t = k as f64 * dt;
            (-rate * t).exp() * kind.payoff(spot * (rate * t).exp(), strike)
        };
        return if american { (0..=steps).map(value_at).fold(0.0, f64::max) } else { value_at(steps) };
    }
    let up = (vol * dt.sqrt()).exp();
    let down = 1.0 / up;
    let p = ((rate * dt).exp() - down) / (up - down);
    let mut values: Vec<f64> = (0..=steps)
        .map(|j| kind.payoff(spot * up.powi(j as i32) * down.powi((steps - j) as i32), strike))
        .collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = if american {
                let s = spot * up.powi(j as i32) * down.powi((n - j) as i32);
                cont.max(kind.payoff(s, strike))
            } else {
                cont
            };
        }
    }
    values[0]
}

/// Cox–Ross–Rubinstein tree with early exercise at every node.
pub fn binomial_american(
    spot: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    maturity: f64,
    steps: usize,
    kind: OptionKind,
) -> f64 {
    crr(spot, strike, rate, vol, maturity, steps, kind, true)
}

/// European value on the same tree.
pub fn binomial_european(
    spot: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    maturity: f64,
    steps: usize,
    kind: OptionKind,
) -> f64 {
    crr(spot, strike, rate, vol, maturity, steps, kind, false)
}

/// Prices at `steps` and `2 steps` with their Richardson extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsonPair {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

pub fn binomial_richardson(
    spot: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    maturity: f64,
    steps: usize,
    kind: OptionKind,
) -> RichardsonPair {
    let coarse = binomial_american(spot, strike, rate, vol, maturity, steps, kind);
    let fine = binomial_american(spot, strike, rate, vol, maturity, 2 * steps, kind);
    RichardsonPair { coarse, fine, extrapolated: 2.0 * fine - coarse }
}
