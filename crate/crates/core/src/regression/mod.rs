//! Per-step least-squares estimation of conditional expectations.
//!
//! A [`Design`] is built once per time step from the states of all paths.
//! Each target (continuation value, martingale-increment products) is then
//! fitted against the same factorized normal equations. Local layouts split
//! every axis at data quantiles and fit an affine function per cell; cells
//! with too few points use a global affine fit instead.

mod basis;
mod fit;

pub use basis::{BasisKind, RegressionBasis};
pub use fit::StepFit;

pub(crate) use fit::Design;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.random_range(-2.0..3.0)).collect()
    }

    #[test]
    fn polynomial_reproduces_quadratic_exactly() {
        let xs = sample(500, 1);
        let y: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x).collect();
        let d = Design::new(&xs, 1, &RegressionBasis::polynomial(4).with_ridge(0.0), 0).unwrap();
        let (fit, fitted) = d.fit(&y);
        for (a, b) in fitted.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
        let sf = d.finish(vec![fit]);
        assert!((sf.predict(0, &[0.7]) - (1.0 - 1.4 + 0.245)).abs() < 1e-9);
        assert!(sf.contains(&[0.0]) && !sf.contains(&[3.5]));
        assert!(sf.predict_se(0, &[0.0]) < 1e-6);
    }

    #[test]
    fn local_cells_reproduce_piecewise_affine() {
        let xs = sample(4000, 2);
        let y: Vec<f64> = xs.iter().map(|&x| 3.0 * x + 1.0).collect();
        let d = Design::new(&xs, 1, &RegressionBasis::local(8), 0).unwrap();
        let (fit, fitted) = d.fit(&y);
        assert!(fitted.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-6));
        let sf = d.finish(vec![fit]);
        assert_eq!(sf.fallback_cells(), 0);
        assert!((sf.predict(0, &[2.2]) - 7.6).abs() < 1e-6);
    }

    #[test]
    fn degenerate_data_uses_the_mean() {
        let xs = vec![0.3; 100];
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for basis in [RegressionBasis::polynomial(3), RegressionBasis::local(5)] {
            let d = Design::new(&xs, 1, &basis, 0).unwrap();
            let (fit, fitted) = d.fit(&y);
            assert!((fitted[0] - 49.5).abs() < 1e-9);
            let sf = d.finish(vec![fit]);
            assert!(sf.contains(&[0.3]) && !sf.contains(&[0.31]));
        }
    }

    #[test]
    fn sparse_cells_fall_back_to_global_affine() {
        // Nearly collinear axes leave the off-diagonal product cells sparse.
        let u = sample(2000, 3);
        let xs: Vec<f64> = u.iter().enumerate().flat_map(|(i, &v)| [v, v + 1e-3 * (i % 7) as f64]).collect();
        let y: Vec<f64> = xs.chunks(2).map(|r| 2.0 * r[0] - r[1]).collect();
        let mut basis = RegressionBasis::local(8);
        basis.min_cell_points = 20;
        let d = Design::new(&xs, 2, &basis, 0).unwrap();
        let (fit, _) = d.fit(&y);
        let sf = d.finish(vec![fit]);
        assert!(sf.fallback_cells() > 0);
        assert!((sf.predict(0, &[0.2, 0.2]) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn two_dimensional_polynomial_fit() {
        let raw = sample(2000, 4);
        let y: Vec<f64> = raw.chunks(2).map(|r| r[0] * r[1] + r[1]).collect();
        let d = Design::new(&raw, 2, &RegressionBasis::polynomial(2).with_ridge(0.0), 0).unwrap();
        let (fit, _) = d.fit(&y);
        let sf = d.finish(vec![fit]);
        assert!((sf.predict(0, &[0.5, -1.0]) - (-1.5)).abs() < 1e-8);
    }
}
