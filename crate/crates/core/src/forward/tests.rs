use approx::assert_relative_eq;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::model::{presets, JumpMeasure, ModelSpec};
use crate::stats::Estimate;

fn jumpy(intensity: f64) -> ModelSpec {
    ModelSpec::builder(1)
        .diffusion(|_, o| o[0] = 0.3)
        .additive_jump(|e, o| o[0] = e[0])
        .jump_measure(JumpMeasure::uniform(intensity, -0.5, 0.5, 16).unwrap())
        .bounds(1.0, 1.0)
        .build()
        .unwrap()
}

#[test]
fn zero_model_stays_put() {
    let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let b = simulate_paths(&presets::zero(2), &g, &[0.3, -1.0], 50, 7).unwrap();
    for k in 0..=10 {
        for p in 0..50 {
            assert_eq!(b.state(k, p), &[0.3, -1.0]);
        }
    }
}

#[test]
fn brownian_terminal_variance() {
    let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let m = 100_000;
    let b = simulate_paths(&presets::heat(), &g, &[0.0], m, 11).unwrap();
    let xs: Vec<f64> = (0..m).map(|p| b.state(10, p)[0]).collect();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn jump_counts_match_intensity() {
    let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
    let m = 100_000;
    let b = simulate_paths(&jumpy(2.0), &g, &[0.0], m, 3).unwrap();
    let counts: Vec<f64> = (0..m).map(|p| b.total_jumps(p) as f64).collect();
    let mean = counts.iter().sum::<f64>() / m as f64;
    assert!((mean - 2.0).abs() < 0.02, "mean count {mean}");
    // Per-step counts are Poisson(ΛΔ).
    let step: Vec<f64> = (0..m).map(|p| b.jump_count(3, p) as f64).collect();
    let est = Estimate::from_samples(&step);
    assert!(est.covers(2.0 / 8.0, 4.0));
    // Jump times lie in their step.
    for p in 0..100 {
        for &t in b.jump_times(3, p) {
            assert!(t > g.time(3) && t <= g.time(4) + 1e-15);
        }
    }
}

#[test]
fn brownian_increments_are_centered_with_step_variance() {
    let g = TimeGrid::new(0.0, 0.5, 5).unwrap();
    let m = 40_000;
    let b = simulate_paths(&jumpy(3.0), &g, &[0.0], m, 5).unwrap();
    for k in 0..5 {
        let dw: Vec<f64> = (0..m).map(|p| b.dw(k, p)[0]).collect();
        let est = Estimate::from_samples(&dw);
        assert!(est.covers(0.0, 4.0), "step {k}: {est:?}");
        let sq: Vec<f64> = dw.iter().map(|v| v * v).collect();
        assert!(Estimate::from_samples(&sq).covers(g.dt(), 4.0));
    }
}

#[test]
fn compensated_increments_are_martingale_increments() {
    let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
    let m = 40_000;
    let model = jumpy(2.0);
    let fs: Vec<crate::model::Functional> = vec![
        std::sync::Arc::new(|_: &[f64]| 1.0),
        std::sync::Arc::new(|e: &[f64]| e[0] * e[0]),
    ];
    let inc = b_incs(&model, &g, m, &fs);
    for k in 0..4 {
        for i in 0..2 {
            let xs: Vec<f64> = (0..m).map(|p| inc[(k * m + p) * 2 + i]).collect();
            assert!(Estimate::from_samples(&xs).covers(0.0, 4.0), "k={k} i={i}");
        }
    }
}

fn b_incs(
    model: &ModelSpec,
    g: &TimeGrid,
    m: usize,
    fs: &[crate::model::Functional],
) -> Vec<f64> {
    simulate_paths(model, g, &[0.0], m, 9).unwrap().compensated_increments(model, fs)
}

#[test]
fn simulation_is_deterministic_and_thread_independent() {
    let g = TimeGrid::new(0.0, 1.0, 12).unwrap();
    let model = presets::merton(&presets::MertonParams::default()).unwrap();
    let a = simulate_paths(&model, &g, &[0.0], 5000, 42).unwrap();
    let b = simulate_paths(&model, &g, &[0.0], 5000, 42).unwrap();
    assert_eq!(a, b);
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| simulate_paths(&model, &g, &[0.0], 5000, 42).unwrap());
        assert_eq!(a, c);
    }
    let d = simulate_paths(&model, &g, &[0.0], 5000, 43).unwrap();
    assert_ne!(a, d);
}

#[test]
fn diffusion_only_matches_plain_euler_maruyama() {
    // Independent scheme reading the same noise streams.
    let model = ModelSpec::builder(1)
        .drift(|x, o| o[0] = 0.5 - x[0])
        .diffusion(|x, o| o[0] = 0.2 + 0.1 * x[0].sin())
        .build()
        .unwrap();
    let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let b = simulate_paths(&model, &g, &[0.1], 64, 17).unwrap();
    let noise = NoiseSource::new(17);
    for p in 0..64 {
        let mut x = 0.1f64;
        for k in 0..20 {
            let mut rng = noise.at(p as u64, k as u64);
            let z: f64 = StandardNormal.sample(&mut rng);
            let dw = g.dt().sqrt() * z;
            x += (0.5 - x) * g.dt() + (0.2 + 0.1 * x.sin()) * dw;
            assert_eq!(b.state(k + 1, p)[0], x);
            assert_eq!(b.dw(k, p)[0], dw);
        }
    }
}

#[test]
fn flow_composition_examples() {
    assert_eq!(
        check_flow_property(&presets::zero(1), 0.0, 0.5, 1.0, 0.1, &[0.2], 20, 1).unwrap(),
        0.0
    );
    let ode = presets::constant(1.0, 0.0);
    assert_eq!(check_flow_property(&ode, 0.0, 0.5, 1.0, 0.05, &[0.0], 4, 1).unwrap(), 0.0);
    let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let b = simulate_paths(&ode, &g, &[0.0], 1, 1).unwrap();
    assert_relative_eq!(b.state(20, 0)[0], 1.0, epsilon = 1e-12);
    let merton = presets::merton(&presets::MertonParams::default()).unwrap();
    let gap = check_flow_property(&merton, 0.0, 0.5, 1.0, 0.02, &[0.0], 2000, 5).unwrap();
    assert!(gap < 1e-12, "gap {gap}");
}

#[test]
fn moment_ratio_examples() {
    let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let zero = simulate_paths(&presets::zero(1), &g, &[0.0], 100, 1).unwrap();
    assert_eq!(moment_report(&zero, &[0.0], 2.0).unwrap().ratio, 0.0);

    // Discrete-grid E[max_k W_k²] with 50 steps, 10⁶-path reference 1.6387 ± 0.0015.
    let b = simulate_paths(&presets::heat(), &g, &[0.0], 40_000, 2).unwrap();
    let r0 = moment_report(&b, &[0.0], 2.0).unwrap();
    assert!((r0.ratio - 1.6387).abs() < 4.0 * r0.std_error + 0.0015, "{r0:?}");
    let b10 = simulate_paths(&presets::heat(), &g, &[10.0], 40_000, 2).unwrap();
    let r10 = moment_report(&b10, &[10.0], 2.0).unwrap();
    assert!(r10.ratio <= r0.ratio);
    assert!(moment_report(&b, &[0.0], 1.0).is_err());
}

#[test]
fn standard_error_halves_per_fourfold_paths() {
    let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let model = jumpy(1.0);
    let se = |m: usize| {
        let b = simulate_paths(&model, &g, &[0.0], m, 8).unwrap();
        let xs: Vec<f64> = (0..m).map(|p| b.state(10, p)[0]).collect();
        Estimate::from_samples(&xs).std_error
    };
    let ratio = se(8000) / se(32000);
    assert!((ratio - 2.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn tangent_examples() {
    let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let z = tangent_flow(&presets::zero(2), &g, &[0.0, 1.0], 10, 1).unwrap();
    assert_eq!((z.min, z.max), (1.0, 1.0));

    let decay = ModelSpec::builder(1).drift(|x, o| o[0] = -x[0]).build().unwrap();
    let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let t = tangent_flow(&decay, &g, &[0.7], 1, 1).unwrap();
    assert!((t.mean - (-1.0f64).exp()).abs() <= 1e-3, "{t:?}");

    // State-dependent jumps: small-time Jacobian stays within 2√(K h).
    let wobble = ModelSpec::builder(1)
        .drift(|x, o| o[0] = 0.3 * x[0].sin())
        .diffusion(|x, o| o[0] = 0.2 + 0.1 * x[0].cos())
        .jump(|x, e, o| o[0] = 0.5 * x[0].sin() * e[0].abs().min(1.0))
        .jump_measure(JumpMeasure::uniform(2.0, -1.0, 1.0, 16).unwrap())
        .bounds(1.0, 0.5)
        .build()
        .unwrap();
    let k = wobble.jump_bound().max(wobble.coef_bound()).powi(2);
    for h in [1e-3, 1e-2, 1e-1] {
        let g = TimeGrid::new(0.0, h, 10).unwrap();
        let t = tangent_flow(&wobble, &g, &[0.4], 4000, 3).unwrap();
        assert!((t.mean - 1.0).abs() <= 2.0 * (k * h).sqrt(), "h={h}: {t:?}");
        assert!(t.min > 0.0);
    }
}

#[test]
fn dumps_round_trip() {
    let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
    let b = simulate_paths(&jumpy(1.0), &g, &[0.5], 4, 1).unwrap();
    let mut bin = Vec::new();
    b.write_binary(&mut bin).unwrap();
    assert_eq!(&bin[..5], b"PIDE1");
    let back = read_binary(bin.as_slice()).unwrap();
    assert_eq!((back.dim, back.paths, back.nodes), (1, 4, 4));
    assert_eq!(back.states[..4], [0.5; 4]);
    assert_eq!(back.states[3 * 4 + 2], b.state(3, 2)[0]);
    let mut csv = Vec::new();
    b.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("path,step,time,x0,n_jumps\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_composes_exactly_on_aligned_grids(
        seed in 0u64..1000,
        x in -1.0f64..1.0,
        split in 1usize..9,
    ) {
        let model = jumpy(1.5);
        let s = split as f64 * 0.1;
        let gap = check_flow_property(&model, 0.0, s, 1.0, 0.1, &[x], 16, seed).unwrap();
        prop_assert_eq!(gap, 0.0);
    }

    #[test]
    fn same_seed_same_bundle(seed in 0u64..1000, m in 1usize..40) {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let model = jumpy(2.0);
        let a = simulate_paths(&model, &g, &[0.1], m, seed).unwrap();
        let b = simulate_paths(&model, &g, &[0.1], m, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
