//! Gauss quadrature rules built with the Golub–Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine map of a rule on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }
}

fn golub_welsch(diag: &[f64], offdiag_sq: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            let b = offdiag_sq[i].sqrt();
            jac[(i, i + 1)] = b;
            jac[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        })
        .collect();
    golub_welsch(&diag, &off, 2.0)
}

/// Gauss–Hermite for the standard normal law: weights sum to one.
pub fn gauss_hermite_normal(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Gauss–Laguerre for the unit exponential law: weights sum to one.
pub fn gauss_laguerre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| (k * k) as f64).collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Composite Gauss–Legendre with `panels` equal panels on `[a, b]`.
pub fn composite_legendre(a: f64, b: f64, panels: usize, per_panel: usize) -> Rule {
    let base = gauss_legendre(per_panel);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * per_panel);
    let mut weights = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let r = base.mapped(lo, lo + width);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Rule { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(5);
        // degree 9 is the exactness limit for 5 nodes
        assert_relative_eq!(r.integrate(|x| x.powi(8)), 2.0 / 9.0, epsilon = 1e-13);
        assert_relative_eq!(r.integrate(|x| x.powi(9)), 0.0, epsilon = 1e-13);
        assert_relative_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn hermite_reproduces_normal_moments() {
        let r = gauss_hermite_normal(32);
        assert_relative_eq!(r.integrate(|_| 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.integrate(|x| x * x), 1.0, epsilon = 1e-11);
        assert_relative_eq!(r.integrate(|x| x.powi(4)), 3.0, epsilon = 1e-10);
        // E[e^X] = e^{1/2}
        assert_relative_eq!(r.integrate(f64::exp), 0.5f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn laguerre_reproduces_exponential_moments() {
        let r = gauss_laguerre(32);
        assert_relative_eq!(r.integrate(|_| 1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.integrate(|x| x), 1.0, epsilon = 1e-11);
        assert_relative_eq!(r.integrate(|x| x * x * x), 6.0, epsilon = 1e-9);
    }

    #[test]
    fn composite_rule_handles_kinks_on_panel_edges() {
        let r = composite_legendre(-2.0, 2.0, 4, 3);
        assert_relative_eq!(r.integrate(f64::abs), 4.0, epsilon = 1e-13);
    }
}
