//! Experiment configuration: JSON schema, defaults and validation.
//!
//! Every block rejects unknown keys. Parsing goes through
//! `serde_path_to_error`, so errors carry the path of the offending key.
//! The state is one-dimensional log-moneyness for the financial presets.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pidex_core::bsde::BsdeOptions;
use pidex_core::model::presets::{self, MertonParams};
use pidex_core::model::{
    DriverSpec, JumpMeasure, ModelSpec, ObstacleSpec, TerminalSpec, WeightFunction, DEFAULT_NODES,
};
use pidex_core::obstacle::{geometric_schedule, ReflectedOptions, Tolerance};
use pidex_core::oracle::{FdBoundary, FdGrid};
use pidex_core::regression::RegressionBasis;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Solve,
    SolveObstacle,
    Oracle,
    Normcheck,
    Compare,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Solve => "solve",
            Task::SolveObstacle => "solve-obstacle",
            Task::Oracle => "oracle",
            Task::Normcheck => "normcheck",
            Task::Compare => "compare",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(default)]
    pub driver: DriverConfig,
    #[serde(default)]
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub obstacle: Option<ObstacleConfig>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub weight: WeightConfig,
    /// Starting point of the forward paths.
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub eval: EvalGrid,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub normcheck: NormcheckConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub expect: Option<Expectation>,
    /// Output directory; not part of the config hash.
    #[serde(default)]
    pub output: Option<String>,
}

/// Named preset or explicit affine coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Zero,
    Heat,
    ToyUniform,
    Constant {
        drift: f64,
        vol: f64,
    },
    Bs {
        #[serde(default = "default_rate")]
        rate: f64,
        #[serde(default = "default_vol")]
        vol: f64,
    },
    Merton {
        #[serde(default = "default_rate")]
        rate: f64,
        #[serde(default = "default_vol")]
        vol: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
        #[serde(default = "default_mark_mean")]
        mark_mean: f64,
        #[serde(default = "default_mark_sd")]
        mark_sd: f64,
    },
    Kou {
        #[serde(default = "default_rate")]
        rate: f64,
        #[serde(default = "default_vol")]
        vol: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
        #[serde(default = "default_p_up")]
        p_up: f64,
        #[serde(default = "default_eta_up")]
        eta_up: f64,
        #[serde(default = "default_eta_down")]
        eta_down: f64,
    },
    /// `b(x) = drift[0] + drift[1] x`, `σ(x) = vol[0] + vol[1] x`,
    /// `β(x, e) = jump_scale · e`.
    Affine {
        drift: [f64; 2],
        vol: [f64; 2],
        #[serde(default = "one")]
        jump_scale: f64,
        #[serde(default)]
        jumps: JumpConfig,
    },
}

fn default_rate() -> f64 {
    MertonParams::default().rate
}
fn default_vol() -> f64 {
    MertonParams::default().vol
}
fn default_intensity() -> f64 {
    MertonParams::default().intensity
}
fn default_mark_mean() -> f64 {
    MertonParams::default().mark_mean
}
fn default_mark_sd() -> f64 {
    MertonParams::default().mark_sd
}
fn default_p_up() -> f64 {
    0.4
}
fn default_eta_up() -> f64 {
    10.0
}
fn default_eta_down() -> f64 {
    5.0
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    #[default]
    None,
    Uniform {
        intensity: f64,
        lo: f64,
        hi: f64,
    },
    Normal {
        intensity: f64,
        mean: f64,
        sd: f64,
    },
    TwoPoint {
        intensity: f64,
        up: f64,
        down: f64,
        p_up: f64,
    },
}

impl JumpConfig {
    fn build(&self) -> pidex_core::Result<JumpMeasure> {
        match *self {
            JumpConfig::None => Ok(JumpMeasure::none()),
            JumpConfig::Uniform { intensity, lo, hi } => JumpMeasure::uniform(intensity, lo, hi, DEFAULT_NODES),
            JumpConfig::Normal { intensity, mean, sd } => JumpMeasure::normal(intensity, mean, sd, DEFAULT_NODES),
            JumpConfig::TwoPoint { intensity, up, down, p_up } => JumpMeasure::two_point(intensity, up, down, p_up),
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> pidex_core::Result<ModelSpec> {
        Ok(match *self {
            ModelConfig::Zero => presets::zero(1),
            ModelConfig::Heat => presets::heat(),
            ModelConfig::ToyUniform => presets::toy_uniform(),
            ModelConfig::Constant { drift, vol } => presets::constant(drift, vol),
            ModelConfig::Bs { rate, vol } => presets::black_scholes(rate, vol),
            ModelConfig::Merton { .. } => presets::merton(&self.merton_params().expect("merton"))?,
            ModelConfig::Kou { rate, vol, intensity, p_up, eta_up, eta_down } => {
                presets::kou(rate, vol, intensity, p_up, eta_up, eta_down)?
            }
            ModelConfig::Affine { drift, vol, jump_scale, ref jumps } => {
                let measure = jumps.build()?;
                let reach = measure.quadrature().iter().map(|q| q.mark[0].abs()).fold(1.0, f64::max);
                let coef = drift.iter().chain(&vol).fold(1e-12, |a: f64, v| a.max(v.abs()));
                ModelSpec::builder(1)
                    .name("affine")
                    .drift(move |x, out| out[0] = drift[0] + drift[1] * x[0])
                    .diffusion(move |x, out| out[0] = vol[0] + vol[1] * x[0])
                    .additive_jump(move |e, out| out[0] = jump_scale * e[0])
                    .jump_measure(measure)
                    .bounds((jump_scale.abs() * reach).max(1e-12), coef)
                    .build()?
            }
        })
    }

    pub fn merton_params(&self) -> Option<MertonParams> {
        match *self {
            ModelConfig::Merton { rate, vol, intensity, mark_mean, mark_sd } => {
                Some(MertonParams { rate, vol, intensity, mark_mean, mark_sd })
            }
            _ => None,
        }
    }

    /// `(rate, vol)` of a model without jumps that is Black–Scholes in log-moneyness.
    pub fn black_scholes_params(&self) -> Option<(f64, f64)> {
        match *self {
            ModelConfig::Bs { rate, vol } => Some((rate, vol)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    #[default]
    Zero,
    Discount {
        rate: f64,
    },
    Borrowing {
        rate: f64,
        borrow_rate: f64,
        theta: f64,
        sigma: f64,
    },
    JumpLinear {
        rate: f64,
        coupling: f64,
    },
}

impl DriverConfig {
    pub fn build(&self) -> pidex_core::Result<DriverSpec> {
        match *self {
            DriverConfig::Zero => Ok(DriverSpec::zero()),
            DriverConfig::Discount { rate } => Ok(DriverSpec::discount(rate)),
            DriverConfig::Borrowing { rate, borrow_rate, theta, sigma } => {
                DriverSpec::borrowing(rate, borrow_rate, theta, sigma)
            }
            DriverConfig::JumpLinear { rate, coupling } => Ok(DriverSpec::jump_linear(rate, coupling)),
        }
    }

    /// Constant discount rate when the driver is `-r y`.
    pub fn discount_rate(&self) -> Option<f64> {
        match *self {
            DriverConfig::Zero => Some(0.0),
            DriverConfig::Discount { rate } => Some(rate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    #[default]
    Square,
    Constant {
        value: f64,
    },
    Call {
        strike: f64,
    },
    Put {
        strike: f64,
    },
}

impl TerminalConfig {
    pub fn build(&self) -> TerminalSpec {
        match *self {
            TerminalConfig::Square => TerminalSpec::square(),
            TerminalConfig::Constant { value } => TerminalSpec::constant(value),
            TerminalConfig::Call { strike } => TerminalSpec::call(strike),
            TerminalConfig::Put { strike } => TerminalSpec::put(strike),
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match *self {
            TerminalConfig::Call { strike } | TerminalConfig::Put { strike } => Some(strike),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleShape {
    Put { strike: f64 },
    Constant { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub shape: ObstacleShape,
    /// Resolution `δ` of the contact set `{u - h ≤ δ}`.
    #[serde(default = "default_contact")]
    pub contact_delta: f64,
    #[serde(default)]
    pub histogram: Histogram,
}

fn default_contact() -> f64 {
    0.5
}

impl ObstacleConfig {
    pub fn build(&self) -> ObstacleSpec {
        match self.shape {
            ObstacleShape::Put { strike } => ObstacleSpec::put(strike),
            ObstacleShape::Constant { level } => ObstacleSpec::constant(level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Histogram {
    pub t_bins: usize,
    pub x_bins: usize,
    /// Sample points per x bin and time step.
    pub sub: usize,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram { t_bins: 10, x_bins: 40, sub: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub t0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub basis: RegressionBasis,
    pub picard_iters: usize,
    pub clamp: Option<f64>,
    pub schedule: Vec<f64>,
    pub tol: Tolerance,
}

impl Default for Numerics {
    fn default() -> Self {
        let bsde = BsdeOptions::default();
        let reflected = ReflectedOptions::default();
        Numerics {
            t0: 0.0,
            horizon: 1.0,
            steps: 50,
            paths: 100_000,
            basis: bsde.basis,
            picard_iters: bsde.picard_iters,
            clamp: bsde.clamp,
            schedule: geometric_schedule(12),
            tol: reflected.tol,
        }
    }
}

impl Numerics {
    pub fn bsde_options(&self) -> BsdeOptions {
        BsdeOptions { basis: self.basis, picard_iters: self.picard_iters, clamp: self.clamp }
    }

    pub fn reflected_options(&self, weight: WeightFunction) -> ReflectedOptions {
        ReflectedOptions { bsde: self.bsde_options(), schedule: self.schedule.clone(), tol: self.tol, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub p: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { p: 3.0 }
    }
}

/// Points `x_lo + i (x_hi - x_lo) / (points - 1)` used for CSV exports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid { x_lo: -1.0, x_hi: 1.0, points: 41 }
    }
}

impl EvalGrid {
    pub fn xs(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.x_lo];
        }
        let h = (self.x_hi - self.x_lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_lo + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Paths written to the CSV dump; the binary dump holds all of them.
    pub csv_paths: usize,
    pub write_binary: bool,
    /// Moment exponent of the sup-moment report.
    pub moment_exponent: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { csv_paths: 100, write_binary: true, moment_exponent: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Finite differences on the configured model, driver, terminal and obstacle.
    #[default]
    Fd,
    /// Merton series (European; needs the Merton preset with a call or put).
    MertonSeries,
    /// CRR tree (needs the Black–Scholes preset with a call or put).
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Linear,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub method: OracleMethod,
    pub x_lo: f64,
    pub x_hi: f64,
    pub nodes: usize,
    pub steps: usize,
    pub pad: Option<f64>,
    pub boundary: BoundaryKind,
    pub series_terms: usize,
    pub tree_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            method: OracleMethod::Fd,
            x_lo: -4.0,
            x_hi: 4.0,
            nodes: 801,
            steps: 400,
            pad: None,
            boundary: BoundaryKind::Linear,
            series_terms: 60,
            tree_steps: 2000,
        }
    }
}

impl OracleConfig {
    pub fn fd_grid(&self, maturity: f64) -> FdGrid {
        let boundary = match self.boundary {
            BoundaryKind::Linear => FdBoundary::Linear,
            BoundaryKind::Terminal => FdBoundary::Terminal,
        };
        let grid = FdGrid::new(self.x_lo, self.x_hi, self.nodes, self.steps, maturity).with_boundary(boundary);
        match self.pad {
            Some(p) => grid.with_pad(p),
            None => grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormcheckConfig {
    pub s_list: Vec<f64>,
    /// Path budget; defaults to `numerics.paths`.
    pub paths: Option<usize>,
    pub spacetime: bool,
    /// Rerun at twice the budget and require the bracket to stay within
    /// `[min / 2, 2 max]`.
    pub doubling: bool,
}

impl Default for NormcheckConfig {
    fn default() -> Self {
        NormcheckConfig { s_list: vec![0.1, 0.5, 1.0], paths: None, spacetime: true, doubling: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Existing CSVs to compare; when both are absent the task runs the
    /// solver and the oracle on `eval` itself.
    pub solver_csv: Option<String>,
    pub oracle_csv: Option<String>,
    pub tol_rel: f64,
    /// Comparison region `[lo, hi]`.
    pub region: Option<[f64; 2]>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { solver_csv: None, oracle_csv: None, tol_rel: 0.02, region: None }
    }
}

/// Expected headline value for `solve` and `solve-obstacle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Reference value; when absent the oracle block supplies it.
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    /// Required coverage in standard errors.
    #[serde(default)]
    pub se_mult: Option<f64>,
}

/// Everything the solvers need, built once from a validated config.
pub struct Built {
    pub model: ModelSpec,
    pub driver: DriverSpec,
    pub terminal: TerminalSpec,
    pub obstacle: Option<ObstacleSpec>,
    pub weight: WeightFunction,
}

impl ExperimentConfig {
    pub fn task(&self) -> Task {
        self.task.expect("validated config has a task")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn build(&self) -> Result<Built, CliError> {
        let at = |path: &'static str| move |e: pidex_core::Error| CliError::config(path, e.to_string());
        Ok(Built {
            model: self.model.build().map_err(at("model"))?,
            driver: self.driver.build().map_err(at("driver"))?,
            terminal: self.terminal.build(),
            obstacle: self.obstacle.as_ref().map(ObstacleConfig::build),
            weight: WeightFunction::new(self.weight.p).map_err(at("weight.p"))?,
        })
    }

    /// SHA-256 of the canonical JSON of the normalized config (sorted keys,
    /// output directory removed).
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Overrides applied on top of the file before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub output: Option<String>,
}

/// Parses and validates a config, fills defaults and applies overrides.
pub fn validate_config(raw: &str, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let structural = ["unknown field", "unknown variant", "missing field", "duplicate field"]
            .iter()
            .any(|p| msg.starts_with(p));
        if inner.is_syntax() || inner.is_eof() {
            CliError::config(&path, format!("not valid JSON: {msg}"))
        } else if structural {
            let key = msg.split('`').nth(1).unwrap_or_default();
            let path = if msg.starts_with("unknown field") && !path.ends_with(key) {
                if path == "." { key.to_string() } else { format!("{path}.{key}") }
            } else {
                path
            };
            CliError::config(&path, msg)
        } else {
            CliError::schema(&path, msg)
        }
    })?;
    match (cfg.task, overrides.task) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::config("task", format!("config task '{a}' conflicts with command '{b}'")));
        }
        (None, None) => return Err(CliError::config("task", "no task given")),
        (_, Some(b)) => cfg.task = Some(b),
        _ => {}
    }
    if let Some(s) = overrides.seed {
        cfg.seed = Some(s);
    }
    if cfg.seed.is_none() {
        return Err(CliError::config("seed", "a seed is required (config key or --seed)"));
    }
    if overrides.output.is_some() {
        cfg.output = overrides.output.clone();
    }
    check_ranges(&cfg)?;
    let built = cfg.build()?;
    if let Some(h) = &built.obstacle {
        let need = WeightFunction::required_exponent(h.kappa(), built.model.dim());
        if cfg.weight.p < need {
            return Err(CliError::config(
                "weight.p",
                format!(
                    "weight exponent p = {} violates the obstacle rule p >= kappa + d + 1 = {need}",
                    cfg.weight.p
                ),
            ));
        }
    }
    let task = cfg.task();
    if task == Task::SolveObstacle && cfg.obstacle.is_none() {
        return Err(CliError::config("obstacle", "solve-obstacle needs an obstacle block"));
    }
    if task == Task::Compare && cfg.compare.solver_csv.is_some() != cfg.compare.oracle_csv.is_some() {
        return Err(CliError::config("compare", "give both solver_csv and oracle_csv, or neither"));
    }
    Ok(cfg)
}

fn check_ranges(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let n = &cfg.numerics;
    let fail = |path: &str, msg: &str| Err(CliError::config(path, msg));
    if n.steps == 0 {
        return fail("numerics.steps", "must be >= 1");
    }
    if n.paths == 0 {
        return fail("numerics.paths", "must be >= 1");
    }
    if !(n.horizon > n.t0) {
        return fail("numerics.horizon", "must exceed t0");
    }
    if n.schedule.is_empty() || n.schedule.windows(2).any(|w| !(w[1] > w[0])) || n.schedule[0] < 0.0 {
        return fail("numerics.schedule", "must be a nonempty increasing list of levels >= 0");
    }
    if cfg.eval.points == 0 || !(cfg.eval.x_hi >= cfg.eval.x_lo) {
        return fail("eval", "needs points >= 1 and x_hi >= x_lo");
    }
    if !cfg.x0.is_finite() {
        return fail("x0", "must be finite");
    }
    if !(cfg.compare.tol_rel > 0.0) {
        return fail("compare.tol_rel", "must be > 0");
    }
    if let Some(o) = &cfg.obstacle {
        if !(o.contact_delta > 0.0) {
            return fail("obstacle.contact_delta", "must be > 0");
        }
    }
    if cfg.normcheck.s_list.is_empty() {
        return fail("normcheck.s_list", "must be nonempty");
    }
    Ok(())
}
