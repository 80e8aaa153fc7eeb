//! Task pipelines. Each task writes its artifacts into the output directory
//! and fills the headline numbers and criteria of the report body.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use pidex_core::bsde::{check_apriori_estimate, check_z_representation, solve_bsde};
use pidex_core::forward::{check_flow_property, moment_report, simulate_paths, TimeGrid};
use pidex_core::normcheck::{
    norm_ratio, shipped_family, spacetime_norm_ratio, NormRatioReport, SpaceTimeFunction, XQuadrature,
};
use pidex_core::obstacle::{estimate_reflection_measure, solve_reflected, support_check};
use pidex_core::oracle::{
    binomial_american, binomial_european, complementarity_defect, fd_solve_pide, merton_price, merton_put,
    MertonQuote, OptionKind, OraclePrice,
};

use crate::compare::{compare_report, read_curve};
use crate::config::{Built, ExperimentConfig, OracleMethod, Overrides, Task, TerminalConfig};
use crate::error::CliError;
use crate::report::{Criterion, ErrorInfo, Flags, Report, ReportBody, ReportMeta, Status};

/// Command-line invocation.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub task: Option<Task>,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

/// Outputs collected while a task runs.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub built: Built,
    out: PathBuf,
    artifacts: Vec<String>,
    headline: Map<String, Value>,
    criteria: Vec<Criterion>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig, out: &Path) -> Result<Self, CliError> {
        Ok(Context {
            cfg,
            built: cfg.build()?,
            out: out.to_path_buf(),
            artifacts: Vec::new(),
            headline: Map::new(),
            criteria: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn head(&mut self, key: &str, value: impl Serialize) {
        self.headline.insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
    }

    /// Records `value <= threshold` (or `>=` when `at_least`).
    fn check(&mut self, name: &str, value: f64, threshold: f64, at_least: bool, detail: impl Into<String>) {
        let pass = if at_least { value >= threshold } else { value <= threshold };
        self.criteria.push(Criterion {
            name: name.to_string(),
            value,
            threshold,
            pass,
            detail: detail.into(),
        });
    }

    fn grid(&self) -> Result<TimeGrid, CliError> {
        let n = &self.cfg.numerics;
        Ok(TimeGrid::new(n.t0, n.horizon, n.steps)?)
    }

    fn eval_points(&self) -> Vec<Vec<f64>> {
        self.cfg.eval.xs().into_iter().map(|x| vec![x]).collect()
    }
}

/// Removes the lock file when dropped.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Lock, CliError> {
        let path = dir.join(".solver.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(format!(
                "{} exists; another run is using this directory",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Runs one invocation end to end and returns the report (when the config
/// was valid enough to name an output directory) and the exit code.
pub fn execute(inv: &Invocation) -> (Option<Report>, i32) {
    let started = Instant::now();
    let raw = match fs::read_to_string(&inv.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("E_IO: cannot read {}: {e}", inv.config.display());
            return (None, crate::error::exit::ERROR);
        }
    };
    let overrides = Overrides {
        task: inv.task,
        seed: inv.seed,
        output: inv.out.as_ref().map(|p| p.display().to_string()),
    };
    let cfg = match crate::config::validate_config(&raw, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return (None, crate::error::exit::ERROR);
        }
    };
    let out = PathBuf::from(cfg.output.clone().unwrap_or_else(|| "out".to_string()));
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("E_IO: cannot create {}: {e}", out.display());
        return (None, crate::error::exit::ERROR);
    }
    let _lock = match Lock::acquire(&out) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return (None, crate::error::exit::ERROR);
        }
    };
    let report = run_experiment(&cfg, &out, inv, started);
    let code = report.exit_code();
    if let Some(e) = &report.body.error {
        eprintln!("{}: {}", e.code, e.message);
    }
    (Some(report), code)
}

/// Executes the configured task and writes `report.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, inv: &Invocation, started: Instant) -> Report {
    let mut ctx = None;
    let result = Context::new(cfg, out).and_then(|c| {
        let c = ctx.insert(c);
        log::info!("task {} with config {}", cfg.task(), cfg.hash());
        match cfg.task() {
            Task::Simulate => simulate(c),
            Task::Solve => solve(c),
            Task::SolveObstacle => solve_obstacle(c),
            Task::Oracle => oracle(c),
            Task::Normcheck => normcheck(c),
            Task::Compare => compare(c),
        }
    });
    let (mut artifacts, headline, criteria) = match ctx {
        Some(c) => (c.artifacts, c.headline, c.criteria),
        None => (Vec::new(), Map::new(), Vec::new()),
    };
    artifacts.push("report.json".to_string());
    let (status, error) = match result {
        Err(e) => (Status::Error, Some(ErrorInfo { code: e.code().to_string(), message: e.to_string() })),
        Ok(()) if criteria.iter().all(|c| c.pass) => (Status::Ok, None),
        Ok(()) => (Status::CriterionFailed, None),
    };
    let body = ReportBody {
        task: cfg.task().to_string(),
        config_hash: cfg.hash(),
        config: ExperimentConfig { output: None, ..cfg.clone() },
        flags: Flags { seed: cfg.seed(), deterministic: inv.deterministic },
        status,
        headline,
        criteria,
        artifacts,
        error,
    };
    let meta = ReportMeta {
        body_sha256: body.sha256(),
        timestamp: time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .unwrap_or_default(),
        host: gethostname::gethostname().to_string_lossy().into_owned(),
        runtime_seconds: started.elapsed().as_secs_f64(),
        threads: inv.threads,
        out: out.display().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let report = Report { body, meta };
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(out.join("report.json"))?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()
    };
    if let Err(e) = write() {
        eprintln!("E_IO: cannot write report: {e}");
    }
    report
}

fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = ctx.grid()?;
    let x0 = [cfg.x0];
    let m = cfg.numerics.paths;
    let paths = simulate_paths(&ctx.built.model, &grid, &x0, m, cfg.seed())?;
    let shown = cfg.simulate.csv_paths.min(m);
    if shown > 0 {
        let head = if shown == m { None } else { Some(simulate_paths(&ctx.built.model, &grid, &x0, shown, cfg.seed())?) };
        let mut w = ctx.create("paths.csv")?;
        head.as_ref().unwrap_or(&paths).write_csv(&mut w)?;
        w.flush()?;
    }
    if cfg.simulate.write_binary {
        let mut w = ctx.create("paths.bin")?;
        paths.write_binary(&mut w)?;
        w.flush()?;
    }
    let terminal = paths.terminal_states();
    let mean = terminal.iter().sum::<f64>() / m as f64;
    let var = terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m.max(2) - 1) as f64;
    let jumps = (0..m).map(|p| paths.total_jumps(p)).sum::<usize>() as f64 / m as f64;
    let moments = moment_report(&paths, &x0, cfg.simulate.moment_exponent)?;
    ctx.head("paths", m);
    ctx.head("terminal_mean", mean);
    ctx.head("terminal_variance", var);
    ctx.head("mean_jumps", jumps);
    ctx.head("moment_ratio", moments);
    if grid.steps() >= 2 {
        let mid = grid.time(grid.steps() / 2);
        let gap = check_flow_property(
            &ctx.built.model,
            grid.t0(),
            mid,
            grid.t_end(),
            grid.dt(),
            &x0,
            m.min(2000),
            cfg.seed(),
        )?;
        ctx.head("flow_discrepancy", gap);
        ctx.check("flow_composition", gap, 1e-12, false, format!("X_(t,r) vs X_(s,r)∘X_(t,s) at s = {mid}"));
    }
    Ok(())
}

fn solve(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let b = &ctx.built;
    let grid = ctx.grid()?;
    let paths = simulate_paths(&b.model, &grid, &[cfg.x0], cfg.numerics.paths, cfg.seed())?;
    let sol = solve_bsde(&b.model, &b.driver, &b.terminal, &paths, &cfg.numerics.bsde_options())?;
    let z_gap = check_z_representation(&sol, &paths, &b.model, &b.weight, None, 20_000)?;
    let apriori = check_apriori_estimate(&[(&sol, &paths)], &b.terminal, &b.driver, &b.weight);
    let y0 = sol.y0();
    let points = ctx.eval_points();
    let mut w = ctx.create("solution.csv")?;
    sol.write_csv(&mut w, &points)?;
    w.flush()?;
    ctx.write_json("diagnostics.json", &sol.diagnostics_summary())?;
    ctx.head("u0", y0.mean);
    ctx.head("u0_std_error", y0.std_error);
    ctx.head("u0_plain", sol.y0_plain().mean);
    ctx.head("z_rel_discrepancy", z_gap);
    match apriori {
        Ok(r) => ctx.head("apriori", r),
        Err(e) => ctx.head("apriori", json!({ "error": e.code(), "message": e.to_string() })),
    }
    expectation(ctx, y0.mean, y0.std_error)
}

fn solve_obstacle(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let ocfg = cfg.obstacle.as_ref().expect("validated");
    let b = &ctx.built;
    let obstacle = b.obstacle.as_ref().expect("validated");
    let grid = ctx.grid()?;
    let paths = simulate_paths(&b.model, &grid, &[cfg.x0], cfg.numerics.paths, cfg.seed())?;
    let rs = solve_reflected(&b.model, &b.driver, &b.terminal, obstacle, &paths, &cfg.numerics.reflected_options(b.weight))?;
    let hist = ocfg.histogram;
    let range = (cfg.eval.x_lo, cfg.eval.x_hi);
    let mut pis = Vec::with_capacity(rs.fields.len());
    let mut measures = Vec::with_capacity(rs.fields.len());
    for field in &rs.fields {
        let m = estimate_reflection_measure(field, &b.weight, hist.t_bins, hist.x_bins, range, hist.sub)?;
        pis.push(m.weighted_mass);
        measures.push(m);
    }
    let points = ctx.eval_points();
    for (i, field) in rs.fields.iter().enumerate() {
        let mut w = ctx.create(&format!("u_level_{i:02}.csv"))?;
        field.write_csv(&mut w, &points)?;
        w.flush()?;
    }
    let last = measures.last().expect("at least one level");
    let mut w = ctx.create("measure.csv")?;
    last.write_csv(&mut w)?;
    w.flush()?;
    let support = support_check(last, ocfg.contact_delta)?;
    let trace: Vec<Value> = rs
        .levels
        .iter()
        .zip(&pis)
        .map(|(r, pi)| {
            json!({
                "n": r.level,
                "penalty_norm": r.penalty_norm,
                "penalty_norm_std_error": r.penalty_norm_std_error,
                "skorokhod_defect": r.skorokhod_defect,
                "normalized_defect": r.normalized_defect,
                "pi_n": pi,
                "y0": r.y0,
                "y0_std_error": r.y0_std_error,
                "mean_k_total": r.mean_k_total,
            })
        })
        .collect();
    ctx.write_json("convergence.json", &trace)?;

    let fin = *rs.final_level();
    ctx.head("u0", fin.y0);
    ctx.head("u0_std_error", fin.y0_std_error);
    ctx.head("u0_reflected", rs.reference.y0().mean);
    ctx.head("final_level", fin.level);
    ctx.head("levels_solved", rs.levels.len());
    ctx.head("penalty_norm", fin.penalty_norm);
    ctx.head("tolerance", rs.tol);
    ctx.head("obstacle_norm", rs.obstacle_norm);
    ctx.head("field_gap", rs.field_gap);
    ctx.head("normalized_defect", fin.normalized_defect);
    ctx.head("pi_n", *pis.last().expect("nonempty"));
    ctx.head("off_contact_fraction", support.off_contact_fraction);

    let levels = &rs.levels;
    let rise = levels
        .windows(2)
        .map(|w| {
            let se = w[0].penalty_norm_std_error.hypot(w[1].penalty_norm_std_error);
            w[1].penalty_norm - w[0].penalty_norm - 3.0 * se
        })
        .fold(f64::NEG_INFINITY, f64::max);
    ctx.check("penalty_norm_non_increasing", rise.max(0.0), 0.0, false, "largest rise beyond 3 SE");
    ctx.check("penalty_norm_below_tol", fin.penalty_norm, rs.tol, false, "final level vs tolerance");
    ctx.check("skorokhod_defect_final", fin.normalized_defect, 0.02, false, "normalized defect");
    let strictly = levels.windows(2).all(|w| w[1].normalized_defect < w[0].normalized_defect);
    ctx.check(
        "skorokhod_defect_decreasing",
        if strictly { 1.0 } else { 0.0 },
        1.0,
        true,
        "1 when strictly decreasing along the schedule",
    );
    ctx.check(
        "measure_on_contact",
        1.0 - support.off_contact_fraction,
        0.95,
        true,
        format!("share of ν mass with u - h <= {}", ocfg.contact_delta),
    );
    let changes: Vec<f64> = pis.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE)).collect();
    let tail = changes.iter().rev().take(2).copied().fold(0.0, f64::max);
    ctx.check("pi_n_stable", tail, 0.10, false, "largest relative change over the last two levels");
    let dip = monotonicity_dip(&rs.fields, &grid, &points)?;
    ctx.check("u_monotone_in_n", dip, 0.0, false, "largest decrease of u_n in n beyond 3 SE on the eval grid");
    expectation(ctx, fin.y0, fin.y0_std_error)
}

/// Largest `u_n - u_{n'} - 3 SE` over consecutive levels `n < n'`, at steps
/// N/5, N/2 and 4N/5 and the eval points inside both data boxes.
fn monotonicity_dip(
    fields: &[pidex_core::bsde::FittedField],
    grid: &TimeGrid,
    points: &[Vec<f64>],
) -> Result<f64, CliError> {
    let n = grid.steps();
    let steps = [n / 5, n / 2, 4 * n / 5];
    let mut worst: f64 = 0.0;
    for pair in fields.windows(2) {
        for &k in &steps {
            for x in points {
                if !(pair[0].contains(k, x) && pair[1].contains(k, x)) {
                    continue;
                }
                let (a, b) = (pair[0].evaluate_u(k, x)?, pair[1].evaluate_u(k, x)?);
                let se = pair[0].u_std_error(k, x)?.hypot(pair[1].u_std_error(k, x)?);
                worst = worst.max(a - b - 3.0 * se);
            }
        }
    }
    Ok(worst)
}

fn expectation(ctx: &mut Context, value: f64, std_error: f64) -> Result<(), CliError> {
    let Some(exp) = ctx.cfg.expect else { return Ok(()) };
    let (reference, source) = match exp.value {
        Some(v) => (v, "configured value".to_string()),
        None => {
            let (prices, _) = oracle_curve(ctx, &[ctx.cfg.x0])?;
            (prices[0].price, format!("{:?} oracle", ctx.cfg.oracle.method))
        }
    };
    let gap = (value - reference).abs();
    ctx.head("reference", reference);
    if let Some(tol) = exp.abs_tol {
        ctx.check("abs_error", gap, tol, false, format!("|u0 - ref|, ref from {source}"));
    }
    if let Some(tol) = exp.rel_tol {
        ctx.check("rel_error", gap / reference.abs(), tol, false, format!("|u0 - ref| / |ref|, ref from {source}"));
    }
    if let Some(k) = exp.se_mult {
        ctx.check("se_coverage", gap / std_error.max(f64::MIN_POSITIVE), k, false, "|u0 - ref| in standard errors");
    }
    Ok(())
}

/// Oracle prices at time 0 for each `x`, with the artifact rows
/// `(step, time, x, u)` of the method's grid.
fn oracle_curve(ctx: &Context, xs: &[f64]) -> Result<(Vec<OraclePrice>, Vec<(f64, f64)>), CliError> {
    let cfg = ctx.cfg;
    let b = &ctx.built;
    let oc = &cfg.oracle;
    let maturity = cfg.numerics.horizon - cfg.numerics.t0;
    match oc.method {
        OracleMethod::Fd => {
            let grid = oc.fd_grid(maturity);
            let fine = fd_solve_pide(&b.model, &b.driver, &b.terminal, b.obstacle.as_ref(), &grid)?;
            let mut coarse_grid = grid.clone();
            coarse_grid.nodes = grid.nodes.div_ceil(2).max(3);
            coarse_grid.steps = grid.steps.div_ceil(2).max(1);
            let coarse = fd_solve_pide(&b.model, &b.driver, &b.terminal, b.obstacle.as_ref(), &coarse_grid)?;
            let mut prices = Vec::with_capacity(xs.len());
            for &x in xs {
                let outside = || CliError::config("oracle", format!("x = {x} outside the FD grid"));
                let p = fine.interpolate(0, x).ok_or_else(outside)?;
                let q = coarse.interpolate(0, x).ok_or_else(outside)?;
                prices.push(OraclePrice { price: p, error_estimate: (p - q).abs() });
            }
            let rows = fine.xs().iter().copied().zip(fine.initial().iter().copied()).collect();
            Ok((prices, rows))
        }
        OracleMethod::MertonSeries => {
            let params = cfg.model.merton_params().ok_or_else(|| {
                CliError::config("oracle.method", "merton_series needs the merton model preset")
            })?;
            let (kind, strike) = option_terminal(&cfg.terminal)?;
            let prices = xs
                .iter()
                .map(|&x| {
                    let quote = MertonQuote {
                        spot: strike * x.exp(),
                        strike,
                        rate: params.rate,
                        vol: params.vol,
                        maturity,
                        intensity: params.intensity,
                        mark_mean: params.mark_mean,
                        mark_sd: params.mark_sd,
                    };
                    let s = match kind {
                        OptionKind::Call => merton_price(&quote, oc.series_terms)?,
                        OptionKind::Put => merton_put(&quote, oc.series_terms)?,
                    };
                    Ok(OraclePrice { price: s.price, error_estimate: s.tail_bound })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let rows = xs.iter().zip(&prices).map(|(&x, p)| (x, p.price)).collect();
            Ok((prices, rows))
        }
        OracleMethod::Binomial => {
            let (rate, vol) = cfg.model.black_scholes_params().ok_or_else(|| {
                CliError::config("oracle.method", "binomial needs the bs model preset")
            })?;
            let (kind, strike) = option_terminal(&cfg.terminal)?;
            let american = b.obstacle.is_some();
            let tree = |spot: f64, steps: usize| {
                if american {
                    binomial_american(spot, strike, rate, vol, maturity, steps, kind)
                } else {
                    binomial_european(spot, strike, rate, vol, maturity, steps, kind)
                }
            };
            let prices: Vec<OraclePrice> = xs
                .iter()
                .map(|&x| {
                    let spot = strike * x.exp();
                    let fine = tree(spot, oc.tree_steps.max(1));
                    let coarse = tree(spot, (oc.tree_steps / 2).max(1));
                    OraclePrice { price: fine, error_estimate: (fine - coarse).abs() }
                })
                .collect();
            let rows = xs.iter().zip(&prices).map(|(&x, p)| (x, p.price)).collect();
            Ok((prices, rows))
        }
    }
}

fn option_terminal(t: &TerminalConfig) -> Result<(OptionKind, f64), CliError> {
    match *t {
        TerminalConfig::Call { strike } => Ok((OptionKind::Call, strike)),
        TerminalConfig::Put { strike } => Ok((OptionKind::Put, strike)),
        _ => Err(CliError::config("terminal", "closed-form and tree oracles need a call or put terminal")),
    }
}

fn write_curve(ctx: &mut Context, name: &str, time: f64, rows: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = ctx.create(name)?;
    writeln!(w, "step,time,x,u")?;
    for (x, u) in rows {
        writeln!(w, "0,{time},{x},{u}")?;
    }
    w.flush()?;
    Ok(())
}

fn oracle(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let (prices, _) = oracle_curve(ctx, &[cfg.x0])?;
    let price = prices[0];
    if cfg.oracle.method == OracleMethod::Fd {
        let b = &ctx.built;
        let grid = cfg.oracle.fd_grid(cfg.numerics.horizon - cfg.numerics.t0);
        let sol = fd_solve_pide(&b.model, &b.driver, &b.terminal, b.obstacle.as_ref(), &grid)?;
        let defect = match &b.obstacle {
            Some(h) if b.driver.num_functionals() == 0 => {
                Some(complementarity_defect(&b.model, &b.driver, &b.terminal, h, &grid, &sol)?)
            }
            _ => None,
        };
        ctx.head("stability_number", sol.stability_number());
        if let Some(d) = defect {
            ctx.head("complementarity_defect", d);
        }
        let mut w = ctx.create("u_grid.csv")?;
        sol.write_csv(&mut w)?;
        w.flush()?;
    } else {
        let xs = cfg.eval.xs();
        let (_, rows) = oracle_curve(ctx, &xs)?;
        write_curve(ctx, "u_grid.csv", cfg.numerics.t0, &rows)?;
    }
    ctx.write_json("oracle.json", &price)?;
    ctx.head("price", price.price);
    ctx.head("error_estimate", price.error_estimate);
    ctx.head("method", cfg.oracle.method);
    Ok(())
}

fn normcheck(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let nc = &cfg.normcheck;
    let b = &ctx.built;
    let grid = ctx.grid()?;
    let quad = XQuadrature::for_weight(&b.weight);
    let family = shipped_family();
    let paths = nc.paths.unwrap_or(cfg.numerics.paths);
    let rep = norm_ratio(&b.model, &b.weight, &family, &grid, &nc.s_list, &quad, paths, cfg.seed())?;
    let spacetime = if nc.spacetime {
        let mut psi: Vec<SpaceTimeFunction> = family.iter().map(SpaceTimeFunction::from_space).collect();
        psi.push(SpaceTimeFunction::new("one", |_, _| 1.0));
        Some(spacetime_norm_ratio(&b.model, &b.weight, &psi, &grid, &quad, paths, cfg.seed())?)
    } else {
        None
    };
    let doubled = if nc.doubling {
        Some(norm_ratio(&b.model, &b.weight, &family, &grid, &nc.s_list, &quad, 2 * paths, cfg.seed())?)
    } else {
        None
    };
    let summary = rep.summary();
    let mut w = ctx.create("normcheck.csv")?;
    rep.write_csv(&mut w)?;
    w.flush()?;
    if let Some(st) = &spacetime {
        let mut w = ctx.create("normcheck_spacetime.csv")?;
        st.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut json_summary = json!({ "quadrature": quad, "paths": paths, "ratio": summary });
    if let Some(st) = &spacetime {
        json_summary["spacetime"] = serde_json::to_value(st.summary()).expect("serializable");
    }
    if let Some(d) = &doubled {
        json_summary["doubled"] = serde_json::to_value(d.summary()).expect("serializable");
    }
    ctx.write_json("normcheck_summary.json", &json_summary)?;
    ctx.head("min_ratio", summary.min);
    ctx.head("max_ratio", summary.max);
    ctx.head("spread", summary.spread);
    ctx.head("max_std_error", summary.max_std_error);

    let all: Vec<&NormRatioReport> = [Some(&rep), spacetime.as_ref(), doubled.as_ref()].into_iter().flatten().collect();
    let finite = all.iter().flat_map(|r| &r.rows).all(|r| r.ratio.is_finite() && r.ratio > 0.0);
    ctx.check("ratios_positive_finite", if finite { 1.0 } else { 0.0 }, 1.0, true, "every ratio in (0, ∞)");
    if matches!(cfg.model, crate::config::ModelConfig::Zero) {
        let off = all.iter().flat_map(|r| &r.rows).map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
        ctx.check("zero_model_unit_ratio", off, 0.0, false, "largest |ratio - 1|");
    }
    if let Some(d) = &doubled {
        let s = d.summary();
        ctx.head("doubled_min_ratio", s.min);
        ctx.head("doubled_max_ratio", s.max);
        let excess = (summary.min / 2.0 - s.min).max(s.max - 2.0 * summary.max).max(0.0);
        ctx.check("bracket_stable_under_doubling", excess, 0.0, false, "excursion outside [min/2, 2 max] at 2M");
    }
    Ok(())
}

fn compare(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let cc = &cfg.compare;
    let region = cc.region.map_or((cfg.eval.x_lo, cfg.eval.x_hi), |r| (r[0], r[1]));
    let (solver, oracle) = match (&cc.solver_csv, &cc.oracle_csv) {
        (Some(s), Some(o)) => (read_curve(File::open(s)?)?, read_curve(File::open(o)?)?),
        _ => {
            let xs: Vec<f64> = cfg.eval.xs().into_iter().filter(|&x| x >= region.0 && x <= region.1).collect();
            let solver = solver_curve(ctx, &xs)?;
            let (prices, _) = oracle_curve(ctx, &xs)?;
            let oracle: Vec<(f64, f64)> = xs.iter().zip(&prices).map(|(&x, p)| (x, p.price)).collect();
            write_curve(ctx, "solver.csv", cfg.numerics.t0, &solver)?;
            write_curve(ctx, "oracle.csv", cfg.numerics.t0, &oracle)?;
            (solver, oracle)
        }
    };
    let table = compare_report(&solver, &oracle, cc.tol_rel, region, &ctx.built.weight)?;
    let mut w = ctx.create("compare.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    ctx.head("points", table.rows.len());
    ctx.head("sup_rel_error", table.sup_rel_error);
    ctx.head("l2_rho_rel_error", table.l2_rho_rel_error);
    ctx.check("sup_rel_error", table.sup_rel_error, cc.tol_rel, false, format!("region [{}, {}]", region.0, region.1));
    Ok(())
}

/// Point-start solves `u(t0, x)` for each `x`, reflected when an obstacle is set.
fn solver_curve(ctx: &Context, xs: &[f64]) -> Result<Vec<(f64, f64)>, CliError> {
    let cfg = ctx.cfg;
    let b = &ctx.built;
    let grid = ctx.grid()?;
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let paths = simulate_paths(&b.model, &grid, &[x], cfg.numerics.paths, cfg.seed())?;
        let u = match &b.obstacle {
            Some(h) => {
                let rs = solve_reflected(&b.model, &b.driver, &b.terminal, h, &paths, &cfg.numerics.reflected_options(b.weight))?;
                rs.final_level().y0
            }
            None => solve_bsde(&b.model, &b.driver, &b.terminal, &paths, &cfg.numerics.bsde_options())?.y0().mean,
        };
        log::info!("u({}, {x}) = {u}", cfg.numerics.t0);
        out.push((x, u));
    }
    Ok(out)
}
