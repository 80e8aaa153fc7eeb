use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::bsde::FittedField;
use crate::error::{Error, Result};
use crate::model::WeightFunction;

/// One `(t, x)` histogram cell of the penalty measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureCell {
    pub t_bin: usize,
    pub x_bin: usize,
    /// Mean of `n (h - u_n)⁺` over the cell's sample points.
    pub density: f64,
    /// `∫ ρ ν_n` over the sampled part of the cell.
    pub weighted_mass: f64,
    /// Mean of `u_n - h` over the cell's sample points.
    pub mean_gap: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionMeasureEstimate {
    pub level: f64,
    pub t_bins: usize,
    pub x_bins: usize,
    pub x_range: (f64, f64),
    pub cells: Vec<MeasureCell>,
    /// Weighted total mass `π_n`.
    pub weighted_mass: f64,
}

/// Histogram of `ν_n = n (u_n - h)⁻ dt dx` from a penalized field in one
/// space dimension. Every step `k < N` contributes `x_bins × sub` points
/// spread over `x_range`; points outside the step's data box are skipped,
/// so the mass covers the region the paths explore.
pub fn estimate_reflection_measure(
    field: &FittedField,
    weight: &WeightFunction,
    t_bins: usize,
    x_bins: usize,
    x_range: (f64, f64),
    sub: usize,
) -> Result<ReflectionMeasureEstimate> {
    if field.dim() != 1 {
        return Err(Error::invalid("the reflection histogram is one-dimensional"));
    }
    let level = field
        .penalty_level()
        .ok_or_else(|| Error::invalid("reflection measure needs a penalized field"))?;
    let obstacle = field.constraint.obstacle().expect("penalized field has an obstacle");
    let (lo, hi) = x_range;
    if t_bins == 0 || x_bins == 0 || sub == 0 || !(hi > lo) {
        return Err(Error::invalid("need positive bin counts and a nonempty x range"));
    }
    let grid = field.grid();
    let n = grid.steps();
    let width = (hi - lo) / x_bins as f64;
    let vol = grid.dt() * width / sub as f64;
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize); t_bins * x_bins];
    for k in 0..n {
        let t = grid.time(k);
        let tb = ((k as f64 / n as f64) * t_bins as f64).floor() as usize;
        let tb = tb.min(t_bins - 1);
        for xb in 0..x_bins {
            for s in 0..sub {
                let x = [lo + (xb as f64 + (s as f64 + 0.5) / sub as f64) * width];
                if !field.contains(k, &x) {
                    continue;
                }
                let u = field.evaluate_u(k, &x)?;
                let h = obstacle.eval(t, &x);
                let density = level * (h - u).max(0.0);
                let cell = &mut acc[tb * x_bins + xb];
                cell.0 += density;
                cell.1 += weight.eval(&x) * density * vol;
                cell.2 += u - h;
                cell.3 += 1;
            }
        }
    }
    let mut cells = Vec::with_capacity(acc.len());
    let mut total = 0.0;
    for (i, (dens, mass, gap, count)) in acc.into_iter().enumerate() {
        total += mass;
        let c = count.max(1) as f64;
        cells.push(MeasureCell {
            t_bin: i / x_bins,
            x_bin: i % x_bins,
            density: dens / c,
            weighted_mass: mass,
            mean_gap: if count == 0 { f64::NAN } else { gap / c },
            samples: count,
        });
    }
    Ok(ReflectionMeasureEstimate { level, t_bins, x_bins, x_range, cells, weighted_mass: total })
}

impl ReflectionMeasureEstimate {
    /// CSV `t_bin,x_bin,density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_bin,x_bin,density")?;
        for c in &self.cells {
            writeln!(w, "{},{},{}", c.t_bin, c.x_bin, c.density)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    /// Share of weighted mass in cells with mean `u_n - h > δ`.
    pub off_contact_fraction: f64,
    /// Set when the measure has no mass (the fraction is then 0 by convention).
    pub trivial: bool,
}

pub fn support_check(measure: &ReflectionMeasureEstimate, delta: f64) -> Result<SupportReport> {
    if !(delta > 0.0) {
        return Err(Error::invalid("contact tolerance must be > 0"));
    }
    if measure.weighted_mass == 0.0 {
        return Ok(SupportReport { off_contact_fraction: 0.0, trivial: true });
    }
    let off: f64 = measure
        .cells
        .iter()
        .filter(|c| c.samples > 0 && c.mean_gap > delta)
        .map(|c| c.weighted_mass)
        .sum();
    Ok(SupportReport { off_contact_fraction: off / measure.weighted_mass, trivial: false })
}
