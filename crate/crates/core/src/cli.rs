//! Command-line front end for the `mcrkit` binary.
//!
//! Settings come from an optional flat `key = value` file (`--config`),
//! overridden by typed flags and by repeated `--set key=value`. Every output
//! file carries the resolved settings of its command together with the
//! seed; `output` and `threads` are excluded because they do not affect
//! results, so identical settings produce byte-identical files.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for data errors,
//! 4 for solver errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::dataset::{impute_residualize, load_csv, split, Dataset, SplitSpec};
use crate::error::{Error, ErrorCategory, Result};
use crate::estimators::{e_orig, reliance_from_losses, switched_loss, LossKind, PredictionModel, RelianceMode, SwitchEstimator};
use crate::inference::{bootstrap_mcr_ci, rashomon_phi_ci, ClassSpec, BootstrapConfig, Descriptor, PhiInterval, SamplingConfig};
use crate::linear_class::{EllipsoidConstraint, LinearModel};
use crate::mcr_search::{bound_curve, GammaProbe, SearchOptions, Side};
use crate::rkhs_class::{cross_validated_loss, select_bandwidth, select_radius, KernelSpec, RkhsClass};
use crate::simlab::{causal_identity_check, coverage_experiment, CausalDgp, CoverageConfig, CoverageReport, Focus};
use crate::theory_bounds::{b_ind_linear, b_ind_rkhs, estimate_r_d, estimate_r_x, TheoryConstants};

/// Environment variable overriding `--threads`.
pub const THREADS_ENV: &str = "MCRKIT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Reliance of a supplied linear model.
    Mr,
    /// MCR bounds over a grid of thresholds with the probe trace.
    McrCurve,
    /// Bootstrap interval for empirical MCR.
    BootstrapCi,
    /// Rashomon-set interval for a prediction at a point.
    PhiCi,
    /// Coverage simulation.
    SimulateCoverage,
    /// Causal reliance identity check.
    CausalCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mr => "mr",
            Command::McrCurve => "mcr-curve",
            Command::BootstrapCi => "bootstrap-ci",
            Command::PhiCi => "phi-ci",
            Command::SimulateCoverage => "simulate-coverage",
            Command::CausalCheck => "causal-check",
        }
    }

    /// Keys that affect this command's output.
    fn keys(self) -> Vec<&'static str> {
        const DATA: &[&str] = &["data", "outcome", "x1", "impute", "estimator", "mode"];
        const PIPELINE: &[&str] = &[
            "class", "intercept", "ridge_m", "ridge_r", "rkhs_sigma", "rkhs_rk", "folds", "epsilon_rel", "n_train", "seed",
        ];
        let mut k: Vec<&str> = Vec::new();
        match self {
            Command::Mr => {
                k.extend(DATA);
                k.extend(["beta", "beta0"]);
            }
            Command::McrCurve => {
                k.extend(DATA);
                k.extend(PIPELINE);
                k.push("curve_points");
            }
            Command::BootstrapCi => {
                k.extend(DATA);
                k.extend(PIPELINE);
                k.extend(["bootstrap_reps", "ci_level"]);
            }
            Command::PhiCi => {
                k.extend(DATA);
                k.extend(PIPELINE);
                k.extend(["phi_point", "phi_range", "phi_samples", "delta", "b_ind"]);
            }
            Command::SimulateCoverage => k.extend([
                "gammas",
                "n",
                "n_train",
                "reps",
                "bootstrap_reps",
                "population_size",
                "epsilon_factor",
                "var_x",
                "cov_x",
                "focus",
                "standard",
                "seed",
            ]),
            Command::CausalCheck => {
                k.extend(["causal_probs", "causal_propensity", "causal_means", "noise_sd", "n_mc", "seed"])
            }
        }
        k
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Command::Mr => &["data", "x1", "beta"],
            Command::McrCurve | Command::BootstrapCi => &["data", "x1"],
            Command::PhiCi => &["data", "x1", "phi_point"],
            Command::SimulateCoverage | Command::CausalCheck => &[],
        }
    }
}

/// Every recognized key with its default, if any.
const KEYS: &[(&str, Option<&str>)] = &[
    ("data", None),
    ("outcome", Some("y")),
    ("x1", None),
    ("impute", Some("false")),
    ("estimator", Some("switch")),
    ("mode", Some("ratio")),
    ("beta", None),
    ("beta0", Some("0")),
    ("class", Some("linear")),
    ("intercept", Some("true")),
    ("ridge_m", Some("identity")),
    ("ridge_r", Some("1")),
    ("rkhs_sigma", Some("auto")),
    ("rkhs_rk", Some("auto")),
    ("folds", Some("5")),
    ("epsilon_rel", Some("cv:0.1")),
    ("n_train", Some("half")),
    ("seed", Some("0")),
    ("curve_points", Some("11")),
    ("bootstrap_reps", Some("200")),
    ("ci_level", Some("95")),
    ("phi_point", None),
    ("phi_range", Some("false")),
    ("phi_samples", Some("2000")),
    ("delta", Some("0.05")),
    ("b_ind", Some("auto")),
    ("gammas", Some("0,0.1,0.5")),
    ("n", Some("400")),
    ("reps", Some("100")),
    ("population_size", Some("20000")),
    ("epsilon_factor", Some("0.1")),
    ("var_x", Some("1")),
    ("cov_x", Some("0.25")),
    ("focus", Some("x1")),
    ("standard", Some("true")),
    ("causal_probs", Some("0.5,0.5")),
    ("causal_propensity", Some("0.5")),
    ("causal_means", Some("0:0,0:1")),
    ("noise_sd", Some("0")),
    ("n_mc", Some("100000")),
    ("output", None),
    ("table", None),
    ("threads", None),
];

#[derive(Debug, Parser)]
#[command(name = "mcrkit", version, about = "Model reliance and model class reliance")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<String>,
    /// linear, ridge or rkhs.
    #[arg(long)]
    class: Option<String>,
    /// Comma-separated X1 column names.
    #[arg(long)]
    x1: Option<String>,
    /// Rashomon tolerance added to the reference loss: a number, or
    /// `cv:<fraction>` for a fraction of the reference's cross-validated loss.
    #[arg(long)]
    epsilon_rel: Option<String>,
    /// Replace X1 by its residual on X2 before analysis.
    #[arg(long)]
    impute: bool,
    /// switch or divide.
    #[arg(long)]
    estimator: Option<String>,
    /// ratio or difference.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output path (stdout when absent).
    #[arg(long)]
    output: Option<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<String>,
    /// Any other setting.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Parse a flat settings file: one `key = value` per line, `#` comments.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("config line {}: expected `key = value`", lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Fill defaults, reject unknown keys and check the command's required keys.
    pub fn resolve(command: Command, mut values: BTreeMap<String, String>) -> Result<Self> {
        for k in values.keys() {
            if !KEYS.iter().any(|(name, _)| name == k) {
                return Err(config_err(format!("unknown setting `{k}`")));
            }
        }
        for (k, d) in KEYS {
            if let Some(d) = d {
                values.entry((*k).to_string()).or_insert_with(|| (*d).to_string());
            }
        }
        for k in command.required() {
            if values.get(*k).is_none_or(|v| v.is_empty()) {
                return Err(config_err(format!("`{}` requires setting `{k}`", command.name())));
            }
        }
        Ok(Self { command, values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn str(&self, key: &str) -> &str {
        self.get(key).unwrap_or("")
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.str(key))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.str(key).parse().map_err(|_| config_err(format!("`{key}` must be a nonnegative integer, got `{}`", self.str(key))))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.str(key).parse().map_err(|_| config_err(format!("`{key}` must be a nonnegative integer, got `{}`", self.str(key))))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.str(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(config_err(format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.str(key).split(',').map(|s| parse_f64(key, s.trim())).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    /// Settings embedded in outputs.
    pub fn embedded(&self) -> BTreeMap<String, String> {
        self.command
            .keys()
            .into_iter()
            .filter_map(|k| self.values.get(k).map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn mode(&self) -> Result<RelianceMode> {
        match self.str("mode") {
            "ratio" => Ok(RelianceMode::Ratio),
            "difference" => Ok(RelianceMode::Difference),
            v => Err(config_err(format!("`mode` must be ratio or difference, got `{v}`"))),
        }
    }

    fn estimator(&self) -> Result<SwitchEstimator> {
        match self.str("estimator") {
            "switch" => Ok(SwitchEstimator::Switch),
            "divide" => Ok(SwitchEstimator::Divide),
            v => Err(config_err(format!("`estimator` must be switch or divide, got `{v}`"))),
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_err(format!("`{key}` must be a finite number, got `{s}`")))
}

/// Output envelope shared by every command.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub command: &'static str,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub result: T,
}

#[derive(Debug, Serialize)]
pub struct MrResult {
    pub n: usize,
    pub e_orig: f64,
    pub e_switch: f64,
    pub mr: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Selection {
    pub sigma: Option<f64>,
    pub r_k: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ReferenceSummary {
    pub params: Vec<f64>,
    /// Loss on the training rows the reference was fit on.
    pub train_loss: f64,
    pub e_orig: f64,
    pub e_switch: f64,
    pub reliance: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ToleranceSummary {
    /// Additive tolerance on the reference loss.
    pub epsilon: f64,
    /// Cross-validated loss used when the tolerance is relative to it.
    pub cv_loss: Option<f64>,
    pub eps_abs: f64,
}

#[derive(Debug, Serialize)]
pub struct PipelineSummary {
    pub n_train: usize,
    pub n_analysis: usize,
    pub selection: Selection,
    pub reference: ReferenceSummary,
    pub tolerance: ToleranceSummary,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub eps_abs: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_tight: bool,
    pub upper_tight: bool,
    pub lower_witness: Option<f64>,
    pub upper_witness: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TraceEntry {
    pub side: Side,
    pub gamma: f64,
    pub h_value: f64,
    pub e_orig: f64,
    pub e_switch: f64,
    pub params: Vec<f64>,
}

impl From<&GammaProbe> for TraceEntry {
    fn from(p: &GammaProbe) -> Self {
        Self { side: p.side, gamma: p.gamma, h_value: p.h_value, e_orig: p.e_orig, e_switch: p.e_switch, params: p.params.clone() }
    }
}

#[derive(Debug, Serialize)]
pub struct CurveResult {
    pub pipeline: PipelineSummary,
    pub mode: RelianceMode,
    pub curve: Vec<CurvePoint>,
    pub probes: Vec<TraceEntry>,
    pub unbounded: Vec<(Side, f64)>,
}

#[derive(Debug, Serialize)]
pub struct BootstrapResult {
    pub pipeline: PipelineSummary,
    pub level: f64,
    pub replicates: usize,
    pub lower: f64,
    pub upper: f64,
    pub excluded: usize,
    pub lower_draws: Vec<f64>,
    pub upper_draws: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct PhiResult {
    pub pipeline: PipelineSummary,
    pub point: Vec<f64>,
    pub constants: TheoryConstants,
    pub interval: PhiInterval,
}

#[derive(Debug, Serialize)]
pub struct CausalResult {
    pub dgp: CausalDgp,
    pub lhs: f64,
    pub rhs: f64,
    pub mc_se: f64,
}

/// Run the binary with its argument list and return the exit code.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_args(args) {
        Ok(()) => 0,
        Err(e) => {
            let category = e.category();
            let report = serde_json::json!({
                "error": { "category": category_name(category), "message": e.to_string() }
            });
            eprintln!("{report}");
            exit_code(category)
        }
    }
}

/// Exit code for an error category.
pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Solver => 4,
    }
}

fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Config => "config",
        ErrorCategory::Data => "data",
        ErrorCategory::Solver => "solver",
    }
}

fn run_args(args: Args) -> Result<()> {
    let mut values = match &args.config {
        Some(path) => parse_config_text(&std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read config {}: {e}", path.display()))
        })?)?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("data", &args.data),
        ("class", &args.class),
        ("x1", &args.x1),
        ("epsilon_rel", &args.epsilon_rel),
        ("estimator", &args.estimator),
        ("mode", &args.mode),
        ("seed", &args.seed),
        ("output", &args.output),
        ("threads", &args.threads),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            values.insert(k.to_string(), v.clone());
        }
    }
    if args.impute {
        values.insert("impute".into(), "true".into());
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        values.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Ok(t) = std::env::var(THREADS_ENV) {
        values.insert("threads".into(), t);
    }
    let cfg = RunConfig::resolve(args.command, values)?;
    let threads = match cfg.get("threads") {
        Some(t) => cfg.usize("threads").and_then(|n| {
            if n == 0 {
                Err(config_err(format!("`threads` must be positive, got `{t}`")))
            } else {
                Ok(n)
            }
        })?,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("cannot start thread pool: {e}")))?;
    pool.install(|| run(&cfg))
}

/// Execute a resolved configuration, writing its outputs.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let json = match cfg.command {
        Command::Mr => render(cfg, run_mr(cfg)?)?,
        Command::McrCurve => render(cfg, run_curve(cfg)?)?,
        Command::BootstrapCi => render(cfg, run_bootstrap(cfg)?)?,
        Command::PhiCi => render(cfg, run_phi(cfg)?)?,
        Command::SimulateCoverage => {
            let report = run_coverage(cfg)?;
            if let Some(table) = cfg.get("table") {
                write_table(cfg, &report, Path::new(table))?;
            }
            render(cfg, report)?
        }
        Command::CausalCheck => render(cfg, run_causal(cfg)?)?,
    };
    match cfg.get("output") {
        Some(path) => std::fs::write(path, json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    Ok(())
}

fn render<T: Serialize>(cfg: &RunConfig, result: T) -> Result<String> {
    let report = Report { command: cfg.command.name(), seed: cfg.seed()?, config: cfg.embedded(), result };
    let mut s = serde_json::to_string_pretty(&report).map_err(|e| config_err(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_table(cfg: &RunConfig, report: &CoverageReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# mcrkit {}", cfg.command.name())?;
    for (k, v) in cfg.embedded() {
        writeln!(f, "# {k}={v}")?;
    }
    report.write_csv(f)
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let x1: Vec<&str> = cfg.str("x1").split(',').map(str::trim).collect();
    let data = load_csv(cfg.str("data"), cfg.str("outcome"), &x1)?;
    if cfg.bool("impute")? {
        impute_residualize(&data)
    } else {
        Ok(data)
    }
}

fn run_mr(cfg: &RunConfig) -> Result<MrResult> {
    let data = load(cfg)?;
    let beta = cfg.f64_list("beta")?;
    if beta.len() != data.p1() + data.p2() {
        return Err(Error::DimensionMismatch(format!(
            "`beta` has {} entries, data has {} covariates",
            beta.len(),
            data.p1() + data.p2()
        )));
    }
    let model = LinearModel::from_stacked(&beta, data.p1(), cfg.f64("beta0")?);
    let eo = e_orig(&model, LossKind::SquaredError, &data);
    let es = switched_loss(&model, LossKind::SquaredError, &data, cfg.estimator()?);
    Ok(MrResult { n: data.n(), e_orig: eo, e_switch: es, mr: reliance_from_losses(eo, es, cfg.mode()?).ok() })
}

enum Setting {
    Auto,
    Value(f64),
}

fn setting(cfg: &RunConfig, key: &str) -> Result<Setting> {
    match cfg.str(key) {
        "auto" => Ok(Setting::Auto),
        _ => {
            let v = cfg.f64(key)?;
            if v > 0.0 {
                Ok(Setting::Value(v))
            } else {
                Err(config_err(format!("`{key}` must be positive or auto")))
            }
        }
    }
}

fn read_weights(path: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read ridge_m file {path}: {e}")))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64("ridge_m", s))
        .collect()
}

/// Reference model, Rashomon tolerance and bound class for the data commands.
struct Pipeline {
    spec: ClassSpec,
    analysis: Dataset,
    reference: Box<dyn PredictionModel>,
    summary: PipelineSummary,
}

fn prepare(cfg: &RunConfig) -> Result<Pipeline> {
    let data = load(cfg)?;
    let n = data.n();
    let n_train = match cfg.str("n_train") {
        "half" => n / 2,
        _ => cfg.usize("n_train")?,
    };
    let seed = cfg.seed()?;
    let (train, analysis) = split(&data, SplitSpec { n_train, seed })?;
    let folds = cfg.usize("folds")?;
    let estimator = cfg.estimator()?;
    let intercept = cfg.bool("intercept")?;
    let p = data.p1() + data.p2();
    let mut selection = Selection { sigma: None, r_k: None };
    let spec = match cfg.str("class") {
        "linear" => ClassSpec::Linear { intercept, constraint: None, estimator },
        "ridge" => {
            let r = cfg.f64("ridge_r")?;
            let constraint = match cfg.str("ridge_m") {
                "identity" => EllipsoidConstraint::identity(p, r),
                path => EllipsoidConstraint::diagonal(&read_weights(path)?, r)?,
            };
            if constraint.dim() != p {
                return Err(Error::DimensionMismatch(format!("ridge_m has {} weights, data has {p} covariates", constraint.dim())));
            }
            ClassSpec::Linear { intercept, constraint: Some(constraint), estimator }
        }
        "rkhs" => {
            let sigma = match setting(cfg, "rkhs_sigma")? {
                Setting::Auto => select_bandwidth(&train, folds)?,
                Setting::Value(v) => v,
            };
            let kernel = KernelSpec::rbf(sigma)?;
            let r_k = match setting(cfg, "rkhs_rk")? {
                Setting::Auto => select_radius(&train, kernel, folds)?,
                Setting::Value(v) => v,
            };
            selection = Selection { sigma: Some(sigma), r_k: Some(r_k) };
            ClassSpec::Rkhs { class: RkhsClass::from_training(&train, kernel, r_k)?, estimator }
        }
        v => return Err(config_err(format!("`class` must be linear, ridge or rkhs, got `{v}`"))),
    };

    let fitted = spec.bind(&train)?;
    let erm = fitted.minimize_combination(1.0, 0.0)?;
    let reference = fitted.prediction_model(&erm.params);

    let (epsilon, cv_loss) = match cfg.str("epsilon_rel").strip_prefix("cv:") {
        Some(frac) => {
            let frac = parse_f64("epsilon_rel", frac)?;
            let cv = match (&spec, &selection) {
                (ClassSpec::Rkhs { .. }, Selection { sigma: Some(s), r_k: Some(r) }) => {
                    cross_validated_loss(&train, KernelSpec::rbf(*s)?, *r, folds)?
                }
                _ => linear_cv_loss(&spec, &train, folds)?,
            };
            (frac * cv, Some(cv))
        }
        None => (cfg.f64("epsilon_rel")?, None),
    };
    if epsilon < 0.0 {
        return Err(config_err("`epsilon_rel` must be >= 0"));
    }

    let mode = cfg.mode()?;
    let eo = e_orig(reference.as_ref(), LossKind::SquaredError, &analysis);
    let es = switched_loss(reference.as_ref(), LossKind::SquaredError, &analysis, estimator);
    let summary = PipelineSummary {
        n_train: train.n(),
        n_analysis: analysis.n(),
        selection,
        reference: ReferenceSummary {
            params: erm.params,
            train_loss: erm.e_orig,
            e_orig: eo,
            e_switch: es,
            reliance: reliance_from_losses(eo, es, mode).ok(),
        },
        tolerance: ToleranceSummary { epsilon, cv_loss, eps_abs: eo + epsilon },
    };
    Ok(Pipeline { spec, analysis, reference, summary })
}

/// Round-robin k-fold squared error of the class's empirical risk minimizer.
fn linear_cv_loss(spec: &ClassSpec, train: &Dataset, folds: usize) -> Result<f64> {
    let n = train.n();
    if folds < 2 || folds > n {
        return Err(config_err(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    let mut total = 0.0;
    for f in 0..folds {
        let fit: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
        if fit.len() < 2 || test.is_empty() {
            continue;
        }
        let class = spec.bind(&train.select_rows(&fit)?)?;
        let m = class.minimize_combination(1.0, 0.0)?;
        let model = class.prediction_model(&m.params);
        let test = train.select_rows(&test)?;
        total += e_orig(model.as_ref(), LossKind::SquaredError, &test) * test.n() as f64;
    }
    Ok(total / n as f64)
}

fn run_curve(cfg: &RunConfig) -> Result<CurveResult> {
    let pipe = prepare(cfg)?;
    let points = cfg.usize("curve_points")?;
    if points == 0 {
        return Err(config_err("`curve_points` must be positive"));
    }
    let eps = pipe.summary.tolerance.epsilon;
    let base = pipe.summary.reference.e_orig;
    let rel: Vec<f64> =
        if points == 1 { vec![eps] } else { (0..points).map(|i| eps * i as f64 / (points - 1) as f64).collect() };
    let grid: Vec<f64> = rel.iter().map(|e| base + e).collect();
    let class = pipe.spec.bind(&pipe.analysis)?;
    let results = bound_curve(class.as_ref(), &grid, &SearchOptions::default())?;
    let mode = cfg.mode()?;
    let curve = rel
        .iter()
        .zip(&results)
        .map(|(&epsilon, r)| {
            let (lower, upper) = match mode {
                RelianceMode::Ratio => (r.lower, r.upper),
                RelianceMode::Difference => (r.lower_difference, r.upper_difference),
            };
            CurvePoint {
                epsilon,
                eps_abs: r.eps_abs,
                lower,
                upper,
                lower_tight: r.lower_tight,
                upper_tight: r.upper_tight,
                lower_witness: r.lower_witness,
                upper_witness: r.upper_witness,
            }
        })
        .collect();
    let last = results.last().expect("grid is nonempty");
    Ok(CurveResult {
        pipeline: pipe.summary,
        mode,
        curve,
        probes: last.probes.iter().map(TraceEntry::from).collect(),
        unbounded: last.unbounded_gammas.clone(),
    })
}

fn run_bootstrap(cfg: &RunConfig) -> Result<BootstrapResult> {
    if cfg.mode()? != RelianceMode::Ratio {
        return Err(config_err("bootstrap-ci supports mode=ratio only"));
    }
    let level = cfg.f64("ci_level")?;
    if !(level > 0.0 && level < 100.0) {
        return Err(config_err("`ci_level` must lie in (0, 100)"));
    }
    let pipe = prepare(cfg)?;
    let mut bc = BootstrapConfig::new(cfg.usize("bootstrap_reps")?, pipe.summary.tolerance.epsilon, cfg.seed()?);
    bc.lower_pct = (100.0 - level) / 2.0;
    bc.upper_pct = 100.0 - bc.lower_pct;
    let ci = bootstrap_mcr_ci(&pipe.spec, &pipe.analysis, pipe.reference.as_ref(), &bc)?;
    Ok(BootstrapResult {
        pipeline: pipe.summary,
        level,
        replicates: bc.replicates,
        lower: ci.lower,
        upper: ci.upper,
        excluded: ci.excluded.len(),
        lower_draws: ci.lower_draws,
        upper_draws: ci.upper_draws,
    })
}

fn run_phi(cfg: &RunConfig) -> Result<PhiResult> {
    let pipe = prepare(cfg)?;
    let point = cfg.f64_list("phi_point")?;
    let (p1, p) = (pipe.analysis.p1(), pipe.analysis.p1() + pipe.analysis.p2());
    if point.len() != p {
        return Err(Error::DimensionMismatch(format!("`phi_point` has {} entries, data has {p} covariates", point.len())));
    }
    let ys = pipe.analysis.y();
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x = pipe.analysis.covariate_matrix();
    let b_ind = match cfg.str("b_ind") {
        "auto" => match &pipe.spec {
            ClassSpec::Linear { intercept: false, constraint: Some(con), .. } => {
                b_ind_linear(con, estimate_r_x(con, &x)?, y_min, y_max)
            }
            ClassSpec::Rkhs { class, .. } => b_ind_rkhs(class, estimate_r_d(class, &x)?, y_min, y_max),
            _ => {
                return Err(config_err(
                    "b_ind=auto needs a bounded class (ridge without intercept, or rkhs); supply b_ind",
                ))
            }
        },
        _ => cfg.f64("b_ind")?,
    };
    let tc = TheoryConstants::from_individual_bound(b_ind, b_ind, pipe.analysis.n(), cfg.f64("delta")?);
    tc.validate(RelianceMode::Difference)?;
    let (descriptor, sampling) = match &pipe.spec {
        ClassSpec::Linear { intercept, .. } => {
            let mut weights = point.clone();
            if *intercept {
                weights.push(1.0);
            }
            (Descriptor::Linear { weights, offset: 0.0 }, None)
        }
        ClassSpec::Rkhs { .. } => {
            let at = point.clone();
            let f = move |m: &dyn PredictionModel| m.predict(&at[..p1], &at[p1..]);
            (
                Descriptor::Custom(Arc::new(f)),
                Some(SamplingConfig { samples: cfg.usize("phi_samples")?, seed: cfg.seed()? }),
            )
        }
    };
    let class = pipe.spec.bind(&pipe.analysis)?;
    let interval =
        rashomon_phi_ci(class.as_ref(), pipe.summary.reference.e_orig, &descriptor, &tc, cfg.bool("phi_range")?, sampling)?;
    Ok(PhiResult { pipeline: pipe.summary, point, constants: tc, interval })
}

fn run_coverage(cfg: &RunConfig) -> Result<CoverageReport> {
    let n = cfg.usize("n")?;
    let mut cc = CoverageConfig::new(cfg.f64_list("gammas")?, n, cfg.usize("reps")?, cfg.usize("bootstrap_reps")?, cfg.seed()?);
    if cfg.str("n_train") != "half" {
        cc.n_train = cfg.usize("n_train")?;
    }
    cc.population_size = cfg.usize("population_size")?;
    cc.epsilon_factor = cfg.f64("epsilon_factor")?;
    cc.var_x = cfg.f64("var_x")?;
    cc.cov_x = cfg.f64("cov_x")?;
    cc.include_standard = cfg.bool("standard")?;
    cc.focus = match cfg.str("focus") {
        "x1" => Focus::First,
        "x2" => Focus::Second,
        v => return Err(config_err(format!("`focus` must be x1 or x2, got `{v}`"))),
    };
    coverage_experiment(&cc)
}

fn run_causal(cfg: &RunConfig) -> Result<CausalResult> {
    let probs = cfg.f64_list("causal_probs")?;
    let mut propensity = cfg.f64_list("causal_propensity")?;
    if propensity.len() == 1 {
        propensity = vec![propensity[0]; probs.len()];
    }
    let means = cfg
        .str("causal_means")
        .split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| config_err(format!("`causal_means` entries are `y0:y1`, got `{pair}`")))?;
            Ok([parse_f64("causal_means", a.trim())?, parse_f64("causal_means", b.trim())?])
        })
        .collect::<Result<Vec<_>>>()?;
    let dgp = CausalDgp { profile_probs: probs, propensity, mean_outcome: means, noise_sd: cfg.f64("noise_sd")? };
    let r = causal_identity_check(&dgp, cfg.usize("n_mc")?, cfg.seed()?)?;
    Ok(CausalResult { dgp, lhs: r.lhs, rhs: r.rhs, mc_se: r.mc_se })
}
