//! Acceptance suite. Each test runs a shipped config from `configs/` through
//! the experiment runner, prints one `PASS`/`FAIL` line and asserts.
//!
//! Tests hold a global lock so that wall-clock budgets are measured without
//! competing solves. Expensive runs shared by several criteria are cached.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use serde_json::Value;

use pidex_cli::report::Criterion;
use pidex_cli::{run_experiment, validate_config, Invocation, Overrides, Report};

const SEED: u64 = 42;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Value {
    let raw = std::fs::read_to_string(configs().join(name)).expect("shipped config");
    serde_json::from_str(&raw).expect("valid JSON")
}

/// Runs `config` with `edit` applied, in a fresh temporary directory.
fn run_with(name: &str, edit: impl FnOnce(&mut Value)) -> Report {
    let mut cfg = load(name);
    edit(&mut cfg);
    assert_eq!(cfg["seed"], SEED, "{name} uses the fixed seed");
    let dir = tempfile::tempdir().expect("tempdir");
    let overrides = Overrides { output: Some(dir.path().display().to_string()), ..Overrides::default() };
    let cfg = validate_config(&cfg.to_string(), &overrides).expect("config validates");
    let report = run_experiment(&cfg, dir.path(), &Invocation::default(), Instant::now());
    assert!(report.body.error.is_none(), "{name}: {:?}", report.body.error);
    report
}

fn run(name: &str) -> Report {
    run_with(name, |_| {})
}

fn criterion<'a>(r: &'a Report, name: &str) -> &'a Criterion {
    r.body
        .criteria
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("criterion {name} missing from {}", r.body.task))
}

fn head(r: &Report, key: &str) -> f64 {
    r.body.headline[key].as_f64().unwrap_or_else(|| panic!("headline {key}"))
}

/// Prints the verdict line outside the test harness capture, then asserts.
fn verdict(id: u32, title: &str, checks: &[(String, bool)]) {
    let pass = checks.iter().all(|(_, ok)| *ok);
    let detail: Vec<&str> = checks.iter().map(|(d, _)| d.as_str()).collect();
    let line = format!(
        "{} criterion {id:>2}: {title} | {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.join("; ")
    );
    let _ = std::io::stdout().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn check(c: &Criterion) -> (String, bool) {
    (format!("{} = {:.4e} (limit {:.4e})", c.name, c.value, c.threshold), c.pass)
}

fn bs_american() -> &'static Report {
    static CELL: OnceLock<Report> = OnceLock::new();
    CELL.get_or_init(|| run("american_put_bs.json"))
}

fn merton_call() -> &'static Report {
    static CELL: OnceLock<Report> = OnceLock::new();
    CELL.get_or_init(|| run("merton_call.json"))
}

#[test]
fn criterion_01_heat_square_terminal() {
    let _g = serial();
    let r = run("heat_solve.json");
    let secs = r.meta.runtime_seconds;
    verdict(
        1,
        "heat equation with g = x², u(0,0) = 1",
        &[
            (format!("u0 = {:.5} ± {:.5}", head(&r, "u0"), head(&r, "u0_std_error")), true),
            check(criterion(&r, "abs_error")),
            check(criterion(&r, "se_coverage")),
            (format!("runtime {secs:.1}s (limit 30s)"), secs <= 30.0),
        ],
    );
}

#[test]
fn criterion_02_uniform_jumps_square_terminal() {
    let _g = serial();
    let r = run("toy_uniform_solve.json");
    let fd = run_with("toy_uniform_solve.json", |c| {
        c["task"] = "oracle".into();
        c["oracle"] = serde_json::json!({"method": "fd", "x_lo": -8, "x_hi": 8, "nodes": 801, "steps": 400});
    });
    let u0 = head(&r, "u0");
    let price = head(&fd, "price");
    let gap = (u0 - price).abs() / price;
    verdict(
        2,
        "uniform jumps with g = x², u(0,0) = 4/3",
        &[
            (format!("u0 = {u0:.5} ± {:.5}", head(&r, "u0_std_error")), true),
            check(criterion(&r, "rel_error")),
            check(criterion(&r, "se_coverage")),
            (format!("FD u(0,0) = {price:.5}, relative gap {gap:.4e} (limit 1e-2)"), gap <= 0.01),
        ],
    );
}

#[test]
fn criterion_03_merton_call() {
    let _g = serial();
    let r = merton_call();
    let fd = run("merton_fd_oracle.json");
    let series = head(r, "reference");
    let fd_price = head(&fd, "price");
    let gap = (series - fd_price).abs() / fd_price;
    let secs = r.meta.runtime_seconds;
    verdict(
        3,
        "Merton European call vs series and FD",
        &[
            (format!("u0 = {:.4}, series = {series:.4}, FD = {fd_price:.4}", head(r, "u0")), true),
            check(criterion(r, "rel_error")),
            (format!("series vs FD {gap:.4e} (limit 2e-3)"), gap <= 0.002),
            (format!("runtime {secs:.1}s (limit 120s)"), secs <= 120.0),
        ],
    );
}

#[test]
fn criterion_04_bs_american_put() {
    let _g = serial();
    let r = bs_american();
    verdict(
        4,
        "Black-Scholes American put by penalization vs binomial tree",
        &[
            (format!("u0 = {:.4}, tree = {:.4}", head(r, "u0"), head(r, "reference")), true),
            check(criterion(r, "rel_error")),
        ],
    );
}

#[test]
fn criterion_05_merton_american_put_curve() {
    let _g = serial();
    let r = run("american_put_merton_compare.json");
    verdict(
        5,
        "Merton American put curve vs projected FD",
        &[
            (format!("points = {}", r.body.headline["points"]), true),
            check(criterion(&r, "sup_rel_error")),
        ],
    );
}

#[test]
fn criterion_06_penalty_convergence() {
    let _g = serial();
    let r = bs_american();
    verdict(
        6,
        "penalty norm decreases and u_n increases in n",
        &[
            check(criterion(r, "penalty_norm_non_increasing")),
            check(criterion(r, "penalty_norm_below_tol")),
            check(criterion(r, "u_monotone_in_n")),
        ],
    );
}

#[test]
fn criterion_07_skorokhod_defect() {
    let _g = serial();
    let r = bs_american();
    verdict(
        7,
        "normalized Skorokhod defect",
        &[check(criterion(r, "skorokhod_defect_final")), check(criterion(r, "skorokhod_defect_decreasing"))],
    );
}

#[test]
fn criterion_08_reflection_measure() {
    let _g = serial();
    let r = bs_american();
    verdict(
        8,
        "reflection measure support and total mass",
        &[check(criterion(r, "measure_on_contact")), check(criterion(r, "pi_n_stable"))],
    );
}

#[test]
fn criterion_09_z_representation() {
    let _g = serial();
    let r = merton_call();
    let z = head(r, "z_rel_discrepancy");
    verdict(
        9,
        "Z against the spatial gradient of u",
        &[(format!("relative discrepancy {z:.4e} (limit 0.15)"), z <= 0.15)],
    );
}

#[test]
fn criterion_10_apriori_ratio() {
    let _g = serial();
    let ratio = |r: &Report| r.body.headline["apriori"]["ratio"].as_f64().expect("a-priori ratio");
    let at = |x0: f64, paths: u64| {
        run_with("merton_call.json", |c| {
            c["x0"] = x0.into();
            c["numerics"] = serde_json::json!({ "paths": paths });
            c.as_object_mut().expect("object").remove("expect");
        })
    };
    let mut ratios = Vec::new();
    for x0 in [(80.0f64 / 100.0).ln(), (120.0f64 / 100.0).ln()] {
        ratios.push(ratio(&at(x0, 100_000)));
    }
    let base = ratio(merton_call());
    ratios.insert(1, base);
    let doubled = ratio(&at(0.0, 200_000));
    let finite = ratios.iter().chain([&doubled]).all(|r| r.is_finite() && *r > 0.0);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo;
    let drift = (doubled / base).max(base / doubled);
    verdict(
        10,
        "a-priori estimate ratio",
        &[
            (format!("ratios at S0 = 80, 100, 120: {ratios:.4?}"), finite),
            (format!("max/min across S0 {spread:.3} (limit 2)"), spread <= 2.0),
            (format!("ratio at 2M {doubled:.4}, change factor {drift:.3} (limit 2)"), drift <= 2.0),
        ],
    );
}

#[test]
fn criterion_11_norm_equivalence() {
    let _g = serial();
    let r = run("merton_normcheck.json");
    let zero = run_with("merton_normcheck.json", |c| {
        c["model"] = serde_json::json!({ "preset": "zero" });
        c["normcheck"]["doubling"] = false.into();
    });
    verdict(
        11,
        "norm equivalence ratios",
        &[
            (format!("Merton bracket [{:.4}, {:.4}]", head(&r, "min_ratio"), head(&r, "max_ratio")), true),
            (
                format!("at 2M [{:.4}, {:.4}]", head(&r, "doubled_min_ratio"), head(&r, "doubled_max_ratio")),
                true,
            ),
            check(criterion(&r, "ratios_positive_finite")),
            check(criterion(&r, "bracket_stable_under_doubling")),
            check(criterion(&zero, "zero_model_unit_ratio")),
        ],
    );
}

#[test]
fn criterion_12_flow_and_reproducibility() {
    let _g = serial();
    let r = run("merton_simulate.json");
    let dir = tempfile::tempdir().expect("tempdir");
    let body = |out: &str| -> Value {
        let out = dir.path().join(out);
        let run = Command::new(env!("CARGO_BIN_EXE_solver"))
            .arg("solve")
            .arg("--config")
            .arg(configs().join("heat_solve.json"))
            .arg("--deterministic")
            .arg("--out")
            .arg(&out)
            .env_remove("SOLVER_THREADS")
            .output()
            .expect("solver runs");
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).expect("report")).expect("JSON")
    };
    let (a, b) = (body("a"), body("b"));
    let same_body = serde_json::to_string(&a["body"]).ok() == serde_json::to_string(&b["body"]).ok();
    let same_hash = a["meta"]["body_sha256"] == b["meta"]["body_sha256"];
    verdict(
        12,
        "flow composition and reproducible reports",
        &[
            check(criterion(&r, "flow_composition")),
            ("report bodies byte-identical across two runs".to_string(), same_body),
            (format!("body hash {}", a["meta"]["body_sha256"]), same_hash),
        ],
    );
}
