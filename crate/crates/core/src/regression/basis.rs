use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family of regressors used for conditional expectations at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisKind {
    /// Tensor Legendre polynomials of total degree `≤ degree` on the scaled data box.
    Polynomial { degree: usize },
    /// `cells` quantile cells per axis with an affine fit in each cell.
    Local { cells: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionBasis {
    pub kind: BasisKind,
    /// Ridge added to the normal matrix, relative to `trace / size`.
    pub ridge: f64,
    /// Cells with fewer points fall back to the global affine fit.
    pub min_cell_points: usize,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis { kind: BasisKind::Polynomial { degree: 4 }, ridge: 1e-8, min_cell_points: 40 }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        RegressionBasis { kind: BasisKind::Polynomial { degree }, ..Default::default() }
    }

    pub fn local(cells: usize) -> Self {
        RegressionBasis { kind: BasisKind::Local { cells }, ..Default::default() }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    /// Nominal number of regressors in dimension `dim`.
    pub fn size(&self, dim: usize) -> usize {
        match self.kind {
            BasisKind::Polynomial { degree } => binomial(dim + degree, degree),
            BasisKind::Local { cells } => cells.pow(dim as u32) * (dim + 1) + dim + 1,
        }
    }

    /// Basis must be nonempty, ridge nonnegative, and leave at least ten paths per regressor.
    pub fn validate(&self, dim: usize, paths: usize) -> Result<()> {
        if let BasisKind::Local { cells: 0 } = self.kind {
            return Err(Error::invalid("local basis needs at least one cell"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::invalid("ridge must be finite and >= 0"));
        }
        let size = self.size(dim);
        if size * 10 > paths {
            return Err(Error::invalid(format!(
                "basis has {size} functions but only {paths} paths (need >= 10 per function)"
            )));
        }
        Ok(())
    }
}

/// Legendre values `P_0..=P_n` at `u`.
pub(crate) fn legendre(u: f64, n: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = u;
    }
    for k in 1..n {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * u * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Multi-indices over `vars` variables with total degree `≤ degree`, graded order.
pub(crate) fn exponents(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0u32; vars];
        fill(&mut out, &mut cur, 0, total as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 >= cur.len() {
        if let Some(last) = cur.last_mut() {
            *last = left;
            out.push(cur.clone());
        } else if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}
