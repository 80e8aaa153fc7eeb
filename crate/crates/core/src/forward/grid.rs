use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = t0 + k Δ`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Grid("need at least one step".into()));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::Grid(format!("need t0 < T, got [{t0}, {t_end}]")));
        }
        Ok(TimeGrid { t0, dt: (t_end - t0) / steps as f64, steps })
    }

    /// Grid with an explicit step, so that sub-grids of a common lattice share
    /// bit-identical step sizes.
    pub fn with_step(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(dt > 0.0) {
            return Err(Error::Grid("need steps >= 1 and dt > 0".into()));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.t_end() - self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Index of the node at time `t`, if `t` lies on the grid.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.dt;
        let r = k.round();
        if (k - r).abs() <= 1e-9 * (1.0 + k.abs()) && r >= 0.0 && r as usize <= self.steps {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Absolute lattice slot of step 0: noise of step `k` is keyed by
    /// `noise_offset() + k`, so grids on the same lattice share noise.
    pub fn noise_offset(&self) -> u64 {
        (self.t0 / self.dt).round() as i64 as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_located() {
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        assert_eq!(g.dt(), 0.02);
        assert_eq!(g.node_index(0.5), Some(25));
        assert_eq!(g.node_index(0.51), None);
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        let sub = TimeGrid::with_step(0.5, g.dt(), 25).unwrap();
        assert_eq!(sub.noise_offset(), 25);
    }
}
