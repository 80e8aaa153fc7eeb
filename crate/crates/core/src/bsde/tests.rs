use std::sync::Arc;

use super::*;
use crate::forward::{simulate_paths, PathBundle, TimeGrid};
use crate::model::{presets, DriverSpec, Functional, ModelSpec, TerminalSpec, WeightFunction};
use crate::oracle::{merton_price, MertonQuote};
use crate::regression::{Design, RegressionBasis};
use crate::Error;

fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, steps).unwrap()
}

fn bundle(model: &ModelSpec, x0: f64, paths: usize, seed: u64) -> PathBundle {
    simulate_paths(model, &grid(50), &[x0], paths, seed).unwrap()
}

fn solve(model: &ModelSpec, driver: &DriverSpec, g: &TerminalSpec, paths: &PathBundle) -> BsdeSolution {
    solve_bsde(model, driver, g, paths, &BsdeOptions::default()).unwrap()
}

#[test]
fn constant_terminal_is_reproduced_exactly() {
    let model = presets::toy_uniform();
    let one: Functional = Arc::new(|_| 1.0);
    let driver = DriverSpec::new("zero-with-jumps", |_, _, _, _, _| 0.0, vec![one], 0.0, 0.0).unwrap();
    let paths = bundle(&model, 0.0, 4000, 1);
    let sol = solve(&model, &driver, &TerminalSpec::constant(2.5), &paths);
    for k in 0..=50 {
        for p in (0..4000).step_by(97) {
            assert!((sol.y(k, p) - 2.5).abs() < 1e-9);
            if k < 50 {
                assert!(sol.z(k, p)[0].abs() < 1e-9);
                assert!(sol.vbar(k, p)[0].abs() < 1e-9);
            }
        }
    }
    assert!((sol.evaluate_u(20, &[0.1]).unwrap() - 2.5).abs() < 1e-9);
    let z = check_z_representation(&sol, &paths, &model, &WeightFunction::new(2.0).unwrap(), None, 500).unwrap();
    assert_eq!(z, 0.0);
}

#[test]
fn terminal_values_are_exact() {
    let model = presets::heat();
    let paths = bundle(&model, 0.0, 2000, 2);
    let sol = solve(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths);
    for p in 0..2000 {
        let x = paths.state(50, p)[0];
        assert_eq!(sol.y(50, p), x * x);
    }
}

#[test]
fn discount_ode_and_refinement() {
    let model = presets::heat();
    let driver = DriverSpec::discount(0.05);
    let g = TerminalSpec::constant(1.0);
    let y0 = |steps: usize| {
        let paths = simulate_paths(&model, &grid(steps), &[0.0], 500, 3).unwrap();
        solve(&model, &driver, &g, &paths).y0().mean
    };
    assert!((y0(50) - (-0.05f64).exp()).abs() < 2e-3);
    let values: Vec<f64> = [10, 20, 40, 80].iter().map(|&n| y0(n)).collect();
    let gaps: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
    // First order: each gap roughly halves.
    assert!(gaps.windows(2).all(|g| (g[0] / g[1] - 2.0).abs() < 0.2), "{gaps:?}");
}

#[test]
fn heat_value_and_gradient() {
    let model = presets::heat();
    let paths = bundle(&model, 0.0, 100_000, 4);
    let sol = solve(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths);
    let y0 = sol.y0();
    assert!(y0.covers(1.0, 3.0), "{y0:?}");
    let u = sol.evaluate_u(0, &[0.0]).unwrap();
    assert!((u - 1.0).abs() < 3.0 * y0.std_error.max(sol.u_std_error(0, &[0.0]).unwrap()) + 0.01);
    let err = check_z_representation(&sol, &paths, &model, &WeightFunction::new(4.0).unwrap(), None, 2000)
        .unwrap();
    assert!(err <= 0.1, "z error {err}");
    // Z_k ≈ 2 X_k on a path.
    let z = sol.evaluate_z(25, &[0.5]).unwrap()[0];
    assert!((z - 1.0).abs() < 0.05, "z {z}");
}

#[test]
fn toy_uniform_value() {
    let model = presets::toy_uniform();
    let paths = bundle(&model, 0.0, 100_000, 5);
    let sol = solve(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths);
    assert!(sol.y0().covers(4.0 / 3.0, 3.0), "{:?}", sol.y0());
}

#[test]
fn merton_call_matches_series() {
    let params = presets::MertonParams::default();
    let model = presets::merton(&params).unwrap();
    let paths = bundle(&model, 0.0, 100_000, 6);
    let sol = solve(&model, &DriverSpec::discount(0.05), &TerminalSpec::call(100.0), &paths);
    let quote = MertonQuote {
        spot: 100.0,
        strike: 100.0,
        rate: params.rate,
        vol: params.vol,
        maturity: 1.0,
        intensity: params.intensity,
        mark_mean: params.mark_mean,
        mark_sd: params.mark_sd,
    };
    let oracle = merton_price(&quote, 60).unwrap().price;
    let y0 = sol.y0().mean;
    assert!((y0 - oracle).abs() / oracle < 0.01, "{y0} vs {oracle}");
}

#[test]
fn comparison_on_grid() {
    let model = presets::toy_uniform();
    let paths = bundle(&model, 0.0, 20_000, 7);
    let g1 = TerminalSpec::new("square+1", |x| x[0] * x[0] + 1.0);
    let high = solve(&model, &DriverSpec::zero(), &g1, &paths);
    let low = solve(&model, &DriverSpec::discount(0.05), &TerminalSpec::square(), &paths);
    for k in [10, 25, 40] {
        for i in 0..9 {
            let x = [-0.8 + 0.2 * i as f64];
            let se = high.u_std_error(k, &x).unwrap().hypot(low.u_std_error(k, &x).unwrap());
            assert!(high.evaluate_u(k, &x).unwrap() >= low.evaluate_u(k, &x).unwrap() - 3.0 * se);
        }
    }
}

#[test]
fn linear_in_terminal_condition() {
    let model = presets::toy_uniform();
    let paths = bundle(&model, 0.0, 5000, 8);
    let g1 = TerminalSpec::square();
    let g2 = TerminalSpec::new("cos", |x| x[0].cos());
    let a = -1.7;
    let mix = TerminalSpec::new("mix", move |x| a * x[0] * x[0] + x[0].cos());
    let (u1, u2, u) = (
        solve(&model, &DriverSpec::zero(), &g1, &paths),
        solve(&model, &DriverSpec::zero(), &g2, &paths),
        solve(&model, &DriverSpec::zero(), &mix, &paths),
    );
    for k in [0, 20, 49] {
        for p in (0..5000).step_by(131) {
            let lin = a * u1.y(k, p) + u2.y(k, p);
            assert!((u.y(k, p) - lin).abs() < 1e-8 * (1.0 + lin.abs()));
        }
    }
}

#[test]
fn no_jump_solution_matches_plain_regression_loop() {
    let model = presets::heat();
    let paths = bundle(&model, 0.0, 3000, 9);
    let g = TerminalSpec::new("cubic", |x| x[0].powi(3) - x[0]);
    let sol = solve(&model, &DriverSpec::zero(), &g, &paths);
    let (m, n) = (3000, 50);
    let mut y: Vec<f64> = (0..m).map(|p| g.eval(paths.state(n, p))).collect();
    for k in (0..n).rev() {
        let design = Design::new(paths.states_at(k), 1, &RegressionBasis::default(), k).unwrap();
        let (_, fitted) = design.fit(&y);
        y = fitted;
        for (p, v) in y.iter().enumerate() {
            assert_eq!(sol.y(k, p).to_bits(), v.to_bits(), "step {k} path {p}");
        }
    }
}

#[test]
fn apriori_estimate_cases() {
    let model = presets::heat();
    let weight = WeightFunction::new(4.0).unwrap();
    let zero = TerminalSpec::constant(0.0);
    let paths = bundle(&model, 0.0, 2000, 10);
    let sol = solve(&model, &DriverSpec::zero(), &zero, &paths);
    let rep = check_apriori_estimate(&[(&sol, &paths)], &zero, &DriverSpec::zero(), &weight).unwrap();
    assert_eq!(rep.numerator, 0.0);
    assert_eq!(rep.ratio, 0.0);

    let g = TerminalSpec::square();
    let g2 = g.scaled(2.0);
    let s1 = solve(&model, &DriverSpec::zero(), &g, &paths);
    let s2 = solve(&model, &DriverSpec::zero(), &g2, &paths);
    let r1 = check_apriori_estimate(&[(&s1, &paths)], &g, &DriverSpec::zero(), &weight).unwrap();
    let r2 = check_apriori_estimate(&[(&s2, &paths)], &g2, &DriverSpec::zero(), &weight).unwrap();
    assert!((r2.numerator / r1.numerator - 4.0).abs() < 1e-9);

    let ratio_over = |xs: &[f64]| {
        let runs: Vec<(BsdeSolution, PathBundle)> = xs
            .iter()
            .map(|&x0| {
                let b = bundle(&model, x0, 20_000, 11);
                (solve(&model, &DriverSpec::zero(), &g, &b), b)
            })
            .collect();
        let refs: Vec<(&BsdeSolution, &PathBundle)> = runs.iter().map(|(s, b)| (s, b)).collect();
        check_apriori_estimate(&refs, &g, &DriverSpec::zero(), &weight).unwrap().ratio
    };
    let small = ratio_over(&[-1.0, 0.0, 1.0]);
    let large = ratio_over(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
    assert!(small.is_finite() && large.is_finite());
    assert!((large / small - 1.0).abs() <= 0.2, "{small} vs {large}");
}

#[test]
fn input_errors() {
    let model = presets::heat();
    let paths = bundle(&model, 0.0, 200, 12);
    let stiff = DriverSpec::discount(100.0);
    assert!(matches!(
        solve_bsde(&model, &stiff, &TerminalSpec::square(), &paths, &BsdeOptions::default()),
        Err(Error::Contraction { .. })
    ));
    // 15 regressors need at least 150 paths; 6th-degree in 1-D needs 70.
    let big = BsdeOptions::with_basis(RegressionBasis::polynomial(30));
    assert!(solve_bsde(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths, &big).is_err());
    let no_sweeps = BsdeOptions { picard_iters: 0, ..BsdeOptions::default() };
    assert!(solve_bsde(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths, &no_sweeps).is_err());
    let sol = solve(&model, &DriverSpec::zero(), &TerminalSpec::square(), &paths);
    assert!(matches!(sol.evaluate_u(25, &[50.0]), Err(Error::Domain { .. })));
}

#[test]
fn csv_export_has_documented_columns() {
    let model = presets::toy_uniform();
    let driver = DriverSpec::jump_linear(0.05, 0.1);
    let paths = bundle(&model, 0.0, 3000, 13);
    let sol = solve(&model, &driver, &TerminalSpec::square(), &paths);
    let mut buf = Vec::new();
    sol.write_csv(&mut buf, &[vec![0.0], vec![0.2]]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,time,x,u,z,vbar_1");
    let summary = sol.diagnostics_summary();
    assert_eq!(summary.steps.len(), 50);
    assert!(summary.max_condition.is_finite());
}
