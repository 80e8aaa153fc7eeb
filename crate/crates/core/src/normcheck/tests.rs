use super::*;
use crate::model::presets::{self, MertonParams};

fn grid() -> TimeGrid {
    TimeGrid::new(0.0, 1.0, 20).unwrap()
}

fn weight() -> WeightFunction {
    WeightFunction::new(4.0).unwrap()
}

fn quad() -> XQuadrature {
    XQuadrature::for_weight(&weight())
}

#[test]
fn quadrature_radius_follows_weight_tail() {
    let q = quad();
    assert!((q.radius - 9.0).abs() < 1e-9);
    assert_eq!(q.panels, 36);
}

#[test]
fn zero_model_ratio_is_exactly_one() {
    let family = shipped_family();
    let rep = norm_ratio(&presets::zero(1), &weight(), &family, &grid(), &[0.5, 1.0], &quad(), 2000, 1).unwrap();
    for r in &rep.rows {
        assert_eq!(r.ratio, 1.0, "{}", r.phi_id);
        assert_eq!(r.std_error, 0.0);
    }
}

#[test]
fn constant_function_ratio_is_one() {
    let one = [TestFunction::new("one", |_| 1.0)];
    let rep = norm_ratio(&presets::heat(), &weight(), &one, &grid(), &[1.0], &quad(), 4000, 3).unwrap();
    assert!((rep.rows[0].ratio - 1.0).abs() < 1e-12);
}

#[test]
fn brownian_indicator_ratio_is_bounded() {
    let phi = [TestFunction::new("ind", |x: f64| if x.abs() <= 1.0 { 1.0 } else { 0.0 })];
    let rep = norm_ratio(&presets::heat(), &weight(), &phi, &grid(), &[1.0], &quad(), 40_000, 5).unwrap();
    let r = &rep.rows[0];
    assert!(r.ratio > 0.3 && r.ratio < 3.0, "{r:?}");
    assert!(r.std_error < 0.05 * r.ratio);
}

#[test]
fn spacetime_ratio_is_time_average_of_slices() {
    let family = vec![TestFunction::new("gauss", |x: f64| (-x * x).exp())];
    let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
    let model = presets::heat();
    let s_list: Vec<f64> = (0..8).map(|k| g.time(k)).collect();
    let slices = norm_ratio(&model, &weight(), &family, &g, &s_list, &quad(), 8000, 11).unwrap();
    let psi = [SpaceTimeFunction::from_space(&family[0])];
    let st = spacetime_norm_ratio(&model, &weight(), &psi, &g, &quad(), 8000, 11).unwrap();
    let mean = slices.rows.iter().map(|r| r.ratio).sum::<f64>() / 8.0;
    assert!((st.rows[0].ratio - mean).abs() < 1e-12, "{} vs {mean}", st.rows[0].ratio);
}

#[test]
fn merton_spacetime_ratio_is_bounded() {
    let model = presets::merton(&MertonParams::default()).unwrap();
    let psi = [SpaceTimeFunction::new("gauss", |_, x: f64| (-x * x).exp())];
    let rep = spacetime_norm_ratio(&model, &weight(), &psi, &grid(), &quad(), 20_000, 7).unwrap();
    let r = rep.rows[0].ratio;
    assert!(r > 0.3 && r < 3.0, "{r}");
}

#[test]
fn heavy_tail_is_rejected() {
    let flat = [TestFunction::new("flat", |x: f64| (1.0 + x.abs()).powi(3))];
    let err = norm_ratio(&presets::heat(), &weight(), &flat, &grid(), &[1.0], &quad(), 100, 1).unwrap_err();
    assert!(matches!(err, Error::Quadrature { .. }), "{err:?}");
}

#[test]
fn off_grid_time_is_rejected() {
    let family = shipped_family();
    let err = norm_ratio(&presets::heat(), &weight(), &family, &grid(), &[0.517], &quad(), 100, 1).unwrap_err();
    assert!(matches!(err, Error::Grid(_)), "{err:?}");
}

#[test]
fn bracket_is_stable_in_path_budget() {
    let family = shipped_family();
    let model = presets::heat();
    let a = norm_ratio(&model, &weight(), &family, &grid(), &[0.5, 1.0], &quad(), 10_000, 2).unwrap().summary();
    let b = norm_ratio(&model, &weight(), &family, &grid(), &[0.5, 1.0], &quad(), 20_000, 2).unwrap().summary();
    assert!((a.min - b.min).abs() < 0.1 * a.min, "{a:?} {b:?}");
    assert!((a.max - b.max).abs() < 0.1 * a.max, "{a:?} {b:?}");
}

#[test]
fn report_csv_header() {
    let rep = NormRatioReport { rows: vec![RatioRow { phi_id: "a".into(), s: 1.0, ratio: 1.0, std_error: 0.0 }] };
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("phi_id,s,ratio,stderr\n"));
}
