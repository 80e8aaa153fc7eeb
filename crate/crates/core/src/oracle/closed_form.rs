use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, spot: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (spot - strike).max(0.0),
            OptionKind::Put => (strike - spot).max(0.0),
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Black–Scholes price.
pub fn black_scholes(spot: f64, strike: f64, rate: f64, vol: f64, maturity: f64, kind: OptionKind) -> f64 {
    let disc = (-rate * maturity).exp();
    if vol <= 0.0 || maturity <= 0.0 {
        let forward = spot * (rate * maturity).exp();
        return disc * kind.payoff(forward, strike);
    }
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * maturity) / sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => spot * std_normal_cdf(d1) - strike * disc * std_normal_cdf(d2),
        OptionKind::Put => strike * disc * std_normal_cdf(-d2) - spot * std_normal_cdf(-d1),
    }
}

/// Parameters of a Merton log-normal jump diffusion quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonQuote {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub vol: f64,
    pub maturity: f64,
    pub intensity: f64,
    pub mark_mean: f64,
    pub mark_sd: f64,
}

/// Series value with a bound on the discarded tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPrice {
    pub price: f64,
    pub tail_bound: f64,
}

/// Merton call by the Poisson-mixture series of Black–Scholes prices with
/// `σ_n² = σ² + n s²/T` and `r_n = r - λκ + n ln(1+κ)/T`. The tail is bounded
/// by `S0 · P(N ≥ n_terms)` since every call term is at most `S0`.
pub fn merton_price(quote: &MertonQuote, n_terms: usize) -> Result<SeriesPrice> {
    const TAIL_TOL: f64 = 1e-12;
    if n_terms == 0 {
        return Err(Error::invalid("need at least one series term"));
    }
    let q = quote;
    let kappa = (q.mark_mean + 0.5 * q.mark_sd * q.mark_sd).exp() - 1.0;
    let lam = q.intensity * (1.0 + kappa);
    let mean = lam * q.maturity;
    let mut weight = (-mean).exp();
    let mut mass = 0.0;
    let mut price = 0.0;
    for n in 0..n_terms {
        if n > 0 {
            weight *= mean / n as f64;
        }
        let nf = n as f64;
        let vol = (q.vol * q.vol + nf * q.mark_sd * q.mark_sd / q.maturity).sqrt();
        let rate = q.rate - q.intensity * kappa + nf * (1.0 + kappa).ln() / q.maturity;
        price += weight * black_scholes(q.spot, q.strike, rate, vol, q.maturity, OptionKind::Call);
        mass += weight;
    }
    let tail_bound = q.spot * (1.0 - mass).max(0.0);
    if tail_bound > TAIL_TOL * q.spot.max(1.0) {
        return Err(Error::Tail { tail: tail_bound, tol: TAIL_TOL });
    }
    Ok(SeriesPrice { price, tail_bound })
}

/// European put under the same model, by put–call parity.
pub fn merton_put(quote: &MertonQuote, n_terms: usize) -> Result<SeriesPrice> {
    let call = merton_price(quote, n_terms)?;
    let parity = quote.strike * (-quote.rate * quote.maturity).exp() - quote.spot;
    Ok(SeriesPrice { price: call.price + parity, tail_bound: call.tail_bound })
}
