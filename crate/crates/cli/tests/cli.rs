use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn solver() -> Command {
    Command::new(env!("CARGO_BIN_EXE_solver"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(task: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    solver()
        .arg(task)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("SOLVER_THREADS")
        .output()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

const HEAT: &str = r#"{
    "seed": 3,
    "model": {"preset": "heat"},
    "numerics": {"paths": 4000, "steps": 10},
    "eval": {"x_lo": -1, "x_hi": 1, "points": 5}
}"#;

#[test]
fn heat_solve_succeeds_and_lists_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", HEAT);
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let body = &r["body"];
    assert_eq!(body["status"], "ok");
    let u0 = body["headline"]["u0"].as_f64().unwrap();
    assert!((u0 - 1.0).abs() < 0.1, "{u0}");
    let listed: Vec<String> =
        body["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk, "no orphan or missing artifacts");
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(csv.starts_with("step,time,x,u,z\n"), "{}", &csv[..40]);
}

#[test]
fn deterministic_runs_give_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", HEAT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("solve", &cfg, &a, &["--deterministic"]).status.code(), Some(0));
    assert_eq!(run("solve", &cfg, &b, &["--deterministic", "--threads", "1"]).status.code(), Some(0));
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(
        serde_json::to_string(&ra["body"]).unwrap(),
        serde_json::to_string(&rb["body"]).unwrap()
    );
    assert_eq!(ra["meta"]["body_sha256"], rb["meta"]["body_sha256"]);
    assert_eq!(rb["meta"]["threads"], 1);
    assert_eq!(ra["body"]["flags"]["deterministic"], true);
    assert_eq!(
        fs::read(a.join("solution.csv")).unwrap(),
        fs::read(b.join("solution.csv")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config_and_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", HEAT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("solve", &cfg, &a, &[]);
    run("solve", &cfg, &b, &["--seed", "4"]);
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(rb["body"]["flags"]["seed"], 4);
    assert_ne!(ra["body"]["config_hash"], rb["body"]["config_hash"]);
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", HEAT);
    let out = dir.path().join("out");
    let o = solver()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("SOLVER_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["meta"]["threads"], 1);
}

#[test]
fn failed_expectation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = HEAT.replacen("\"seed\": 3,", "\"seed\": 3, \"expect\": {\"value\": 5.0, \"abs_tol\": 0.01},", 1);
    let cfg = write_config(dir.path(), "heat.json", &body);
    let out = dir.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["body"]["status"], "criterion_failed");
    assert_eq!(r["body"]["criteria"][0]["pass"], false);
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"modle": {"preset": "heat"}, "seed": 1}"#);
    let o = run("solve", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("E_CONFIG") && err.contains("modle"), "{err}");
    let o = run("frobnicate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_errors_are_reported_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fd.json",
        r#"{"seed": 1, "model": {"preset": "toy-uniform"},
            "oracle": {"nodes": 41, "steps": 1, "x_lo": -2, "x_hi": 2},
            "numerics": {"horizon": 2.0}}"#,
    );
    let out = dir.path().join("out");
    let o = run("oracle", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["body"]["status"], "error");
    assert_eq!(r["body"]["error"]["code"], "E_STABILITY");
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", HEAT);
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".solver.lock"), "1").unwrap();
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("E_LOCKED"));
}

#[test]
fn zero_model_normcheck_passes_with_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nc.json",
        r#"{"seed": 1, "model": {"preset": "zero"}, "weight": {"p": 4},
            "numerics": {"paths": 2000, "steps": 10}, "normcheck": {"s_list": [0.5, 1.0]}}"#,
    );
    let out = dir.path().join("out");
    let o = run("normcheck", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("normcheck.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("phi_id,s,ratio,stderr"));
    for line in lines {
        assert_eq!(line.split(',').nth(2), Some("1"), "{line}");
    }
    let r = report(&out);
    assert_eq!(r["body"]["headline"]["min_ratio"], 1.0);
    assert!(out.join("normcheck_summary.json").exists());
}

#[test]
fn compare_task_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.csv");
    let o10 = dir.path().join("o.csv");
    let xs: Vec<f64> = (0..11).map(|i| -0.5 + 0.1 * i as f64).collect();
    let mut a = String::from("x,u\n");
    let mut b = String::from("x,u\n");
    for x in &xs {
        a += &format!("{x},{}\n", 2.0 + x);
        b += &format!("{x},{}\n", 1.1 * (2.0 + x));
    }
    fs::write(&s, a).unwrap();
    fs::write(&o10, b).unwrap();
    let body = |o: &Path| {
        format!(
            r#"{{"seed": 1, "model": {{"preset": "heat"}},
                "compare": {{"solver_csv": "{}", "oracle_csv": "{}", "tol_rel": 0.05, "region": [-0.5, 0.5]}}}}"#,
            s.display(),
            o.display()
        )
    };
    let out = dir.path().join("same");
    let cfg = write_config(dir.path(), "same.json", &body(&s));
    assert_eq!(run("compare", &cfg, &out, &[]).status.code(), Some(0));
    assert_eq!(report(&out)["body"]["headline"]["sup_rel_error"], 0.0);
    let out = dir.path().join("shift");
    let cfg = write_config(dir.path(), "shift.json", &body(&o10));
    assert_eq!(run("compare", &cfg, &out, &[]).status.code(), Some(2));
    let sup = report(&out)["body"]["headline"]["sup_rel_error"].as_f64().unwrap();
    assert!((sup - 0.1 / 1.1).abs() < 1e-9, "{sup}");
    assert!(fs::read_to_string(out.join("compare.csv")).unwrap().starts_with("x,solver,oracle,rel_error,pass"));
}

#[test]
fn simulate_writes_dumps_and_checks_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"seed": 5, "model": {"preset": "merton"}, "numerics": {"paths": 500, "steps": 20},
            "simulate": {"csv_paths": 3}}"#,
    );
    let out = dir.path().join("out");
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 21);
    let dump = pidex_core::forward::read_binary(fs::File::open(out.join("paths.bin")).unwrap()).unwrap();
    assert_eq!((dump.paths, dump.nodes, dump.dim), (500, 21, 1));
    let r = report(&out);
    assert!(r["body"]["headline"]["flow_discrepancy"].as_f64().unwrap() < 1e-12);
    for (i, line) in csv.lines().skip(1).take(21).enumerate() {
        let x: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(x, dump.states[i * 500], "CSV head equals the full bundle");
    }
}

#[test]
fn oracle_task_writes_price_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bs.json",
        r#"{"seed": 1, "model": {"preset": "bs", "rate": 0.0, "vol": 0.2},
            "terminal": {"kind": "call", "strike": 100},
            "oracle": {"method": "binomial", "tree_steps": 400},
            "eval": {"x_lo": -0.1, "x_hi": 0.1, "points": 3}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run("oracle", &cfg, &out, &[]).status.code(), Some(0));
    let p: Value = serde_json::from_str(&fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert!((p["price"].as_f64().unwrap() - 7.9656).abs() < 0.02);
    assert!(p["error_estimate"].as_f64().unwrap() < 0.02);
    let grid = fs::read_to_string(out.join("u_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 4);
}
