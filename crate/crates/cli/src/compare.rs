//! Pointwise comparison of a solver CSV against an oracle CSV.
//!
//! Both files need `x` and `u` columns. When a `step` column is present only
//! the rows of the first step are used, so the `u`-grid exports of the
//! solvers and the oracles can be compared directly.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use pidex_core::model::WeightFunction;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub x: f64,
    pub solver: f64,
    pub oracle: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub sup_rel_error: f64,
    /// `sqrt(Σ ρ (s - o)² / Σ ρ o²)` over the region points.
    pub l2_rho_rel_error: f64,
    pub tol_rel: f64,
    pub pass: bool,
}

impl CompareTable {
    /// CSV `x,solver,oracle,rel_error,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,solver,oracle,rel_error,pass")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.x, r.solver, r.oracle, r.rel_error, r.rel_error <= self.tol_rel)?;
        }
        Ok(())
    }
}

/// Reads `(x, u)` pairs.
pub fn read_curve<R: Read>(reader: R) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(xi), Some(ui)) = (col("x"), col("u")) else {
        return Err(CliError::GridMismatch(format!("CSV needs x and u columns, found {headers:?}")));
    };
    let si = col("step");
    let mut rows = Vec::new();
    let mut first_step = None;
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| CliError::GridMismatch(format!("unparsable value in row {rec:?}")))
        };
        if let Some(si) = si {
            let step = num(si)?;
            match first_step {
                None => first_step = Some(step),
                Some(s) if s != step => continue,
                _ => {}
            }
        }
        rows.push((num(xi)?, num(ui)?));
    }
    Ok(rows)
}

/// Per-point relative errors `|s - o| / max(|o|, floor)` on the region
/// `[lo, hi]`, where `floor` is 1e-12 times the largest `|o|` there. Passes
/// iff the sup error is at most `tol_rel`.
pub fn compare_report(
    solver: &[(f64, f64)],
    oracle: &[(f64, f64)],
    tol_rel: f64,
    region: (f64, f64),
    weight: &WeightFunction,
) -> Result<CompareTable, CliError> {
    let inside = |c: &[(f64, f64)]| -> Vec<(f64, f64)> {
        c.iter().copied().filter(|&(x, _)| x >= region.0 && x <= region.1).collect()
    };
    let (s, o) = (inside(solver), inside(oracle));
    if s.is_empty() {
        return Err(CliError::GridMismatch(format!("no solver points in [{}, {}]", region.0, region.1)));
    }
    if s.len() != o.len() {
        return Err(CliError::GridMismatch(format!(
            "{} solver points vs {} oracle points in the region",
            s.len(),
            o.len()
        )));
    }
    let floor = 1e-12 * o.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(s.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (&(xs, us), &(xo, uo)) in s.iter().zip(&o) {
        if (xs - xo).abs() > 1e-9 * (1.0 + xs.abs()) {
            return Err(CliError::GridMismatch(format!("solver x = {xs} vs oracle x = {xo}")));
        }
        let scale = uo.abs().max(floor);
        let rel = if scale > 0.0 { (us - uo).abs() / scale } else { (us - uo).abs() };
        let rho = weight.eval(&[xs]);
        num += rho * (us - uo).powi(2);
        den += rho * uo * uo;
        rows.push(CompareRow { x: xs, solver: us, oracle: uo, rel_error: rel });
    }
    let sup = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(CompareTable { rows, sup_rel_error: sup, l2_rho_rel_error: l2, tol_rel, pass: sup <= tol_rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..21).map(|i| -1.0 + 0.1 * i as f64).map(|x| (x, f(x))).collect()
    }

    fn weight() -> WeightFunction {
        WeightFunction::new(3.0).unwrap()
    }

    #[test]
    fn identical_curves_pass_with_zero_error() {
        let c = curve(|x| 1.0 + x * x);
        let t = compare_report(&c, &c, 0.01, (-0.5, 0.5), &weight()).unwrap();
        assert!(t.pass);
        assert_eq!(t.sup_rel_error, 0.0);
        assert_eq!(t.l2_rho_rel_error, 0.0);
        assert_eq!(t.rows.len(), 11);
    }

    #[test]
    fn ten_percent_shift_fails_at_five_percent() {
        let s = curve(|x| 1.0 + x * x);
        let o: Vec<_> = s.iter().map(|&(x, u)| (x, 1.1 * u)).collect();
        let t = compare_report(&s, &o, 0.05, (-1.0, 1.0), &weight()).unwrap();
        assert!(!t.pass);
        assert!((t.sup_rel_error - 0.1 / 1.1).abs() < 1e-12);
        let t = compare_report(&o, &s, 0.05, (-1.0, 1.0), &weight()).unwrap();
        assert!((t.sup_rel_error - 0.1).abs() < 1e-12 && !t.pass);
    }

    #[test]
    fn shifted_grid_is_a_mismatch() {
        let s = curve(|x| x);
        let o: Vec<_> = s.iter().map(|&(x, u)| (x + 0.01, u)).collect();
        let err = compare_report(&s, &o, 0.05, (-0.55, 0.55), &weight()).unwrap_err();
        assert_eq!(err.code(), "E_GRIDMISMATCH");
        let short = &s[..5];
        assert!(compare_report(short, &s, 0.05, (-1.0, 1.0), &weight()).is_err());
    }

    #[test]
    fn reads_first_step_of_a_u_grid() {
        let text = "step,time,x,u\n0,0,-0.5,1\n0,0,0.5,2\n1,0.1,-0.5,9\n";
        let c = read_curve(text.as_bytes()).unwrap();
        assert_eq!(c, vec![(-0.5, 1.0), (0.5, 2.0)]);
        assert!(read_curve("a,b\n1,2\n".as_bytes()).is_err());
    }
}
