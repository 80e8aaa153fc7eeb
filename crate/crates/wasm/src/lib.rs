//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string; failures surface as JavaScript errors carrying the error code.
//!
//! Models are in log-moneyness `x = ln(S/K)`: `bs` is Black–Scholes and
//! `merton` adds normal log-jumps.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pidex_core::bsde::{solve_bsde, BsdeOptions};
use pidex_core::forward::{simulate_paths, TimeGrid};
use pidex_core::model::presets::{self, MertonParams};
use pidex_core::model::{DriverSpec, ModelSpec, ObstacleSpec, TerminalSpec};
use pidex_core::oracle::{fd_solve_pide, merton_price, merton_put, FdGrid, MertonQuote};
use pidex_core::regression::RegressionBasis;
use pidex_core::Error;

const STRIKE: f64 = 100.0;
const SERIES_TERMS: usize = 60;

/// Market parameters shared by the exports.
#[derive(Debug, Clone, Copy)]
pub struct Market {
    pub rate: f64,
    pub vol: f64,
    pub maturity: f64,
    /// Jump intensity; zero gives Black–Scholes.
    pub intensity: f64,
    pub mark_mean: f64,
    pub mark_sd: f64,
}

impl Market {
    fn params(&self) -> MertonParams {
        MertonParams {
            rate: self.rate,
            vol: self.vol,
            intensity: self.intensity,
            mark_mean: self.mark_mean,
            mark_sd: self.mark_sd,
        }
    }

    fn model(&self) -> Result<ModelSpec, Error> {
        if self.intensity > 0.0 {
            presets::merton(&self.params())
        } else {
            Ok(presets::black_scholes(self.rate, self.vol))
        }
    }

    fn quote(&self, spot: f64) -> MertonQuote {
        MertonQuote {
            spot,
            strike: STRIKE,
            rate: self.rate,
            vol: self.vol,
            maturity: self.maturity,
            intensity: self.intensity,
            mark_mean: self.mark_mean,
            mark_sd: self.mark_sd,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SeriesQuote {
    pub spot: f64,
    pub call: f64,
    pub put: f64,
    pub tail_bound: f64,
}

/// European call and put at strike 100 by the Poisson-weighted series.
pub fn series_quote(market: &Market, spot: f64) -> Result<SeriesQuote, Error> {
    let q = market.quote(spot);
    let call = merton_price(&q, SERIES_TERMS)?;
    let put = merton_put(&q, SERIES_TERMS)?;
    Ok(SeriesQuote { spot, call: call.price, put: put.price, tail_bound: call.tail_bound })
}

#[derive(Debug, Serialize)]
pub struct PutCurve {
    pub american: bool,
    pub spot: Vec<f64>,
    pub value: Vec<f64>,
    pub payoff: Vec<f64>,
}

/// Put value at time 0 for spots in `[40, 200]` from the finite-difference
/// solver on `[-4, 4]`; the American curve projects onto the payoff.
pub fn put_curve(market: &Market, american: bool, nodes: usize, steps: usize) -> Result<PutCurve, Error> {
    let model = market.model()?;
    let obstacle = american.then(|| ObstacleSpec::put(STRIKE));
    let grid = FdGrid::new(-4.0, 4.0, nodes, steps, market.maturity);
    let sol = fd_solve_pide(
        &model,
        &DriverSpec::discount(market.rate),
        &TerminalSpec::put(STRIKE),
        obstacle.as_ref(),
        &grid,
    )?;
    let mut curve = PutCurve { american, spot: Vec::new(), value: Vec::new(), payoff: Vec::new() };
    for (&x, &u) in sol.xs().iter().zip(sol.initial()) {
        let spot = STRIKE * x.exp();
        if (40.0..=200.0).contains(&spot) {
            curve.spot.push(spot);
            curve.value.push(u);
            curve.payoff.push((STRIKE - spot).max(0.0));
        }
    }
    Ok(curve)
}

#[derive(Debug, Serialize)]
pub struct MonteCarloQuote {
    pub spot: f64,
    pub put: f64,
    pub std_error: f64,
    pub reference: f64,
    pub paths: usize,
    pub steps: usize,
}

/// European put by forward simulation and regression-based backward
/// induction, next to the series price.
pub fn bsde_put(market: &Market, spot: f64, paths: usize, steps: usize, seed: u64) -> Result<MonteCarloQuote, Error> {
    let model = market.model()?;
    let grid = TimeGrid::new(0.0, market.maturity, steps)?;
    let bundle = simulate_paths(&model, &grid, &[(spot / STRIKE).ln()], paths, seed)?;
    let options = BsdeOptions::with_basis(RegressionBasis::local(16));
    let sol = solve_bsde(&model, &DriverSpec::discount(market.rate), &TerminalSpec::put(STRIKE), &bundle, &options)?;
    let y0 = sol.y0();
    let reference = merton_put(&market.quote(spot), SERIES_TERMS)?.price;
    Ok(MonteCarloQuote { spot, put: y0.mean, std_error: y0.std_error, reference, paths, steps })
}

fn to_js<T: Serialize>(r: Result<T, Error>) -> Result<String, JsError> {
    match r {
        Ok(v) => serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())),
        Err(e) => Err(JsError::new(&format!("{}: {e}", e.code()))),
    }
}

fn market(rate: f64, vol: f64, maturity: f64, intensity: f64, mark_mean: f64, mark_sd: f64) -> Market {
    Market { rate, vol, maturity, intensity, mark_mean, mark_sd }
}

/// JSON `{spot, call, put, tail_bound}`.
#[wasm_bindgen(js_name = seriesQuote)]
#[allow(clippy::too_many_arguments)]
pub fn series_quote_js(
    rate: f64,
    vol: f64,
    maturity: f64,
    intensity: f64,
    mark_mean: f64,
    mark_sd: f64,
    spot: f64,
) -> Result<String, JsError> {
    to_js(series_quote(&market(rate, vol, maturity, intensity, mark_mean, mark_sd), spot))
}

/// JSON `{american, spot[], value[], payoff[]}`.
#[wasm_bindgen(js_name = putCurve)]
#[allow(clippy::too_many_arguments)]
pub fn put_curve_js(
    rate: f64,
    vol: f64,
    maturity: f64,
    intensity: f64,
    mark_mean: f64,
    mark_sd: f64,
    american: bool,
    nodes: usize,
    steps: usize,
) -> Result<String, JsError> {
    to_js(put_curve(&market(rate, vol, maturity, intensity, mark_mean, mark_sd), american, nodes, steps))
}

/// JSON `{spot, put, std_error, reference, paths, steps}`.
#[wasm_bindgen(js_name = bsdePut)]
#[allow(clippy::too_many_arguments)]
pub fn bsde_put_js(
    rate: f64,
    vol: f64,
    maturity: f64,
    intensity: f64,
    mark_mean: f64,
    mark_sd: f64,
    spot: f64,
    paths: usize,
    steps: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(bsde_put(&market(rate, vol, maturity, intensity, mark_mean, mark_sd), spot, paths, steps, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merton() -> Market {
        let p = MertonParams::default();
        Market { rate: p.rate, vol: p.vol, maturity: 1.0, intensity: p.intensity, mark_mean: p.mark_mean, mark_sd: p.mark_sd }
    }

    #[test]
    fn series_quote_satisfies_parity() {
        let m = merton();
        let q = series_quote(&m, 110.0).unwrap();
        let parity = q.call - q.put - (110.0 - STRIKE * (-m.rate).exp());
        assert!(parity.abs() < 1e-9, "{parity}");
    }

    #[test]
    fn american_curve_dominates_european_and_payoff() {
        let m = merton();
        let eu = put_curve(&m, false, 401, 100).unwrap();
        let am = put_curve(&m, true, 401, 100).unwrap();
        assert_eq!(eu.spot, am.spot);
        assert!(!am.spot.is_empty());
        for i in 0..am.spot.len() {
            assert!(am.value[i] >= eu.value[i] - 1e-9);
            assert!(am.value[i] >= am.payoff[i] - 1e-9);
        }
        let atm = eu.spot.iter().position(|&s| s >= STRIKE).unwrap();
        let series = series_quote(&m, eu.spot[atm]).unwrap().put;
        assert!((eu.value[atm] - series).abs() / series < 0.01);
    }

    #[test]
    fn bsde_put_is_near_the_series_price() {
        let m = Market { intensity: 0.0, ..merton() };
        let q = bsde_put(&m, 100.0, 20_000, 20, 7).unwrap();
        assert!((q.put - q.reference).abs() < 4.0 * q.std_error + 0.05, "{q:?}");
    }

    #[test]
    fn errors_carry_codes() {
        let m = Market { maturity: -1.0, ..merton() };
        assert!(bsde_put(&m, 100.0, 100, 10, 1).is_err());
    }
}
