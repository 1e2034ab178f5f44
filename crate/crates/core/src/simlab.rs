//! Simulation harnesses: the misspecified-quadratic data-generating process
//! with its bootstrap coverage study, and a Monte-Carlo check of the identity
//! linking the reliance of the true regression function on a binary
//! treatment to conditional average treatment effects.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::estimators::{e_orig, e_switch, LossKind, PredictionModel, SwitchEstimator};
use crate::inference::{bootstrap_mcr_ci, percentile, BootstrapConfig, ClassSpec};
use crate::linear_class::LinearClass;
use crate::mcr_search::{search_mcr, SearchOptions, SolvableClass};

/// `Y = sum_j (j x_j - gamma x_j^2) + E` with bivariate normal `X` and
/// Gaussian noise whose variance equals `Var(f0(X))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub gamma: f64,
    pub n: usize,
    pub seed: u64,
    pub var_x: f64,
    pub cov_x: f64,
}

impl DgpSpec {
    /// Unit variances and covariance 1/4.
    pub fn new(gamma: f64, n: usize, seed: u64) -> Self {
        Self { gamma, n, seed, var_x: 1.0, cov_x: 0.25 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.var_x > 0.0) || self.cov_x.abs() > self.var_x {
            return Err(Error::InvalidArgument(format!(
                "covariance [[{v}, {c}], [{c}, {v}]] is not positive semidefinite",
                v = self.var_x,
                c = self.cov_x
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        Ok(())
    }

    /// True regression function.
    pub fn f0(&self, x1: f64, x2: f64) -> f64 {
        x1 - self.gamma * x1 * x1 + 2.0 * x2 - self.gamma * x2 * x2
    }

    /// `Var(f0(X))`: the linear part contributes `5v + 4c`; the squares
    /// contribute `gamma^2 (4v^2 + 4c^2)`; odd Gaussian moments make the
    /// cross covariance vanish.
    pub fn noise_variance(&self) -> f64 {
        let (v, c) = (self.var_x, self.cov_x);
        5.0 * v + 4.0 * c + self.gamma * self.gamma * (4.0 * v * v + 4.0 * c * c)
    }

    /// Population reliance of `f0` on `X1`:
    /// `1 + 2 Var(x1 - gamma x1^2) / Var(E)`.
    pub fn analytic_mr_f0(&self) -> f64 {
        let v = self.var_x;
        let var_g1 = v + 2.0 * self.gamma * self.gamma * v * v;
        1.0 + 2.0 * var_g1 / self.noise_variance()
    }
}

/// True regression function of a [`DgpSpec`] as a prediction model.
#[derive(Debug, Clone, Copy)]
pub struct TrueRegression(pub DgpSpec);

impl PredictionModel for TrueRegression {
    fn predict(&self, x1: &[f64], x2: &[f64]) -> f64 {
        self.0.f0(x1[0], x2[0])
    }
}

/// Draw `spec.n` rows from the data-generating process.
pub fn simulate_dgp(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd1 = spec.var_x.sqrt();
    let rho = spec.cov_x / spec.var_x;
    let resid_sd = sd1 * (1.0 - rho * rho).max(0.0).sqrt();
    let noise_sd = spec.noise_variance().sqrt();
    let mut y = Vec::with_capacity(spec.n);
    let mut x1 = Vec::with_capacity(spec.n);
    let mut x2 = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let a = sd1 * z1;
        let b = rho * a + resid_sd * z2;
        y.push(spec.f0(a, b) + noise_sd * e);
        x1.push(a);
        x2.push(b);
    }
    Dataset::with_names(y, x1, 1, x2, 1, "y".into(), vec!["x1".into()], vec!["x2".into()])
}

/// All-pairs switched loss of `f0` in O(n) using its additive form
/// `f0 = g1(x1) + g2(x2)`: the switched residual of pair `(i, j)` is
/// `u_j - g1(x1_i)` with `u_j = y_j - g2(x2_j)`.
pub fn additive_switch_loss(spec: &DgpSpec, data: &Dataset) -> f64 {
    additive_switch_loss_with(|x| x - spec.gamma * x * x, |x| 2.0 * x - spec.gamma * x * x, data)
}

fn additive_switch_loss_with(g1: impl Fn(f64) -> f64, g2: impl Fn(f64) -> f64, data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let (mut su, mut su2, mut sa, mut sa2, mut sdiag) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..data.n() {
        let u = data.y()[i] - g2(data.x2_row(i)[0]);
        let a = g1(data.x1_row(i)[0]);
        su += u;
        su2 += u * u;
        sa += a;
        sa2 += a * a;
        sdiag += (u - a) * (u - a);
    }
    (n * su2 - 2.0 * su * sa + n * sa2 - sdiag) / (n * (n - 1.0))
}

/// Which simulated coordinate plays the role of the covariate of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    /// `x1` (coefficient 1).
    First,
    /// `x2` (coefficient 2); blocks are swapped before analysis.
    Second,
}

fn focused(data: &Dataset, focus: Focus) -> Result<Dataset> {
    match focus {
        Focus::First => Ok(data.clone()),
        Focus::Second => Dataset::with_names(
            data.y().to_vec(),
            (0..data.n()).map(|i| data.x2_row(i)[0]).collect(),
            1,
            (0..data.n()).map(|i| data.x1_row(i)[0]).collect(),
            1,
            "y".into(),
            vec!["x2".into()],
            vec!["x1".into()],
        ),
    }
}

/// Settings for [`coverage_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub gammas: Vec<f64>,
    pub n: usize,
    pub n_train: usize,
    pub reps: usize,
    pub boot_reps: usize,
    pub seed: u64,
    pub population_size: usize,
    /// Rashomon tolerance as a multiple of the noise variance.
    pub epsilon_factor: f64,
    pub var_x: f64,
    pub cov_x: f64,
    /// Also run the plain bootstrap of single-model reliance on each sample.
    pub include_standard: bool,
    pub focus: Focus,
}

impl CoverageConfig {
    pub fn new(gammas: Vec<f64>, n: usize, reps: usize, boot_reps: usize, seed: u64) -> Self {
        Self {
            gammas,
            n,
            n_train: n / 2,
            reps,
            boot_reps,
            seed,
            population_size: 20_000,
            epsilon_factor: 0.1,
            var_x: 1.0,
            cov_x: 0.25,
            include_standard: true,
            focus: Focus::First,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.boot_reps < 2 {
            return Err(Error::InvalidArgument("need reps >= 1 and boot_reps >= 2".into()));
        }
        if self.n_train == 0 || self.n_train + 2 > self.n {
            return Err(Error::InvalidSplitSize { n_train: self.n_train, n: self.n });
        }
        if self.population_size < 2 {
            return Err(Error::InvalidArgument("population must have at least 2 rows".into()));
        }
        Ok(())
    }
}

/// Outcome of one simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub gamma: f64,
    pub rep: usize,
    /// Bootstrap MCR interval, absent when too many replicates failed.
    pub mcr_ci: Option<(f64, f64)>,
    /// Population MCR for this sample's reference model.
    pub population_mcr: Option<(f64, f64)>,
    pub standard_ci: Option<(f64, f64)>,
}

/// One line of a coverage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub gamma: f64,
    pub target: String,
    pub n: usize,
    pub reps: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Coverage rows plus per-sample records and population reliance values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub records: Vec<RepRecord>,
    /// `(gamma, reliance of f0 on the finite population)`.
    pub population_mr: Vec<(f64, f64)>,
}

impl CoverageReport {
    pub fn row(&self, gamma: f64, target: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.gamma == gamma && r.target == target)
    }

    /// CSV with columns `gamma,target,n,reps,coverage,mean_width`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Table targets.
pub const TARGET_MR_F0: &str = "mr_f0";
pub const TARGET_POPULATION_MCR: &str = "population_mcr";
pub const TARGET_TRUTH_IN_POPULATION_MCR: &str = "truth_in_population_mcr";
pub const TARGET_STANDARD_MR_F0: &str = "standard_mr_f0";

fn sub_seed(seed: u64, cell: usize, rep: usize, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng.random()
}

fn linear_spec() -> ClassSpec {
    ClassSpec::Linear { intercept: true, constraint: None, estimator: SwitchEstimator::Switch }
}

fn fit_ols(data: &Dataset) -> Result<(LinearClass, Vec<f64>)> {
    let class = LinearClass::unconstrained(data, true)?;
    let erm = class.minimize_combination(1.0, 0.0)?;
    Ok((class, erm.params))
}

/// Plain bootstrap interval for the reliance of a single fitted linear
/// model: per replicate, resample `sample`, fit on the first `n_train`
/// resampled rows, estimate reliance on the rest.
pub fn standard_linear_ci(sample: &Dataset, n_train: usize, boot_reps: usize, seed: u64) -> Result<(f64, f64)> {
    let n = sample.n();
    if n_train == 0 || n_train + 2 > n {
        return Err(Error::InvalidSplitSize { n_train, n });
    }
    let draws: Vec<Result<f64>> = (0..boot_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let train = sample.select_rows(&rows[..n_train])?;
            let test = sample.select_rows(&rows[n_train..])?;
            let (class, params) = fit_ols(&train)?;
            let model = class.model(&params);
            let eo = e_orig(&model, LossKind::SquaredError, &test);
            let es = e_switch(&model, LossKind::SquaredError, &test);
            Ok(es / eo)
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok((percentile(&draws, 2.5), percentile(&draws, 97.5)))
}

struct Population {
    spec: DgpSpec,
    data: Dataset,
    class: LinearClass,
    mr_f0: f64,
}

fn build_population(cfg: &CoverageConfig, cell: usize, gamma: f64) -> Result<Population> {
    let spec = DgpSpec {
        gamma,
        n: cfg.population_size,
        seed: sub_seed(cfg.seed, cell, 0, 1),
        var_x: cfg.var_x,
        cov_x: cfg.cov_x,
    };
    let raw = simulate_dgp(&spec)?;
    let data = focused(&raw, cfg.focus)?;
    let g_first = move |x: f64| x - gamma * x * x;
    let g_second = move |x: f64| 2.0 * x - gamma * x * x;
    let e_switch_f0 = match cfg.focus {
        Focus::First => additive_switch_loss_with(g_first, g_second, &data),
        Focus::Second => additive_switch_loss_with(g_second, g_first, &data),
    };
    let mr_f0 = e_switch_f0 / e_orig(&TrueRegression(spec), LossKind::SquaredError, &raw);
    let class = LinearClass::unconstrained(&data, true)?;
    Ok(Population { spec, data, class, mr_f0 })
}

fn run_rep(cfg: &CoverageConfig, pop: &Population, cell: usize, rep: usize) -> Result<RepRecord> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, cell, rep, 2));
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..pop.data.n())).collect();
    let sample = pop.data.select_rows(&rows)?;
    let epsilon = cfg.epsilon_factor * pop.spec.noise_variance();
    let (train, analysis) = split(&sample, SplitSpec { n_train: cfg.n_train, seed: sub_seed(cfg.seed, cell, rep, 3) })?;
    let (train_class, params) = fit_ols(&train)?;
    let reference = train_class.model(&params);

    let mut boot = BootstrapConfig::new(cfg.boot_reps, epsilon, sub_seed(cfg.seed, cell, rep, 4));
    boot.search = SearchOptions::default();
    let mcr_ci = match bootstrap_mcr_ci(&linear_spec(), &analysis, &reference, &boot) {
        Ok(ci) => Some((ci.lower, ci.upper)),
        Err(Error::TooManyInfeasibleReplicates { .. }) => None,
        Err(e) => return Err(e),
    };

    let pop_eps = e_orig(&reference, LossKind::SquaredError, &pop.data) + epsilon;
    let population_mcr = match search_mcr(&pop.class, pop_eps, &SearchOptions::default()) {
        Ok(r) if r.lower.is_finite() && r.upper.is_finite() => Some((r.lower, r.upper)),
        Ok(_) | Err(Error::AllProbesUnbounded) => None,
        Err(e) => return Err(e),
    };

    let standard_ci = if cfg.include_standard {
        Some(standard_linear_ci(&sample, cfg.n_train, cfg.boot_reps, sub_seed(cfg.seed, cell, rep, 5))?)
    } else {
        None
    };
    Ok(RepRecord { gamma: pop.spec.gamma, rep, mcr_ci, population_mcr, standard_ci })
}

fn summarize(
    gamma: f64,
    target: &str,
    cfg: &CoverageConfig,
    records: &[&RepRecord],
    pick: impl Fn(&RepRecord) -> Option<(bool, f64)>,
) -> CoverageRow {
    let mut covered = 0usize;
    let mut widths = Vec::new();
    for r in records {
        if let Some((c, w)) = pick(r) {
            covered += usize::from(c);
            widths.push(w);
        }
    }
    let mean_width = if widths.is_empty() { f64::NAN } else { widths.iter().sum::<f64>() / widths.len() as f64 };
    CoverageRow {
        gamma,
        target: target.to_string(),
        n: cfg.n,
        reps: records.len(),
        coverage: covered as f64 / records.len().max(1) as f64,
        mean_width,
    }
}

fn cell_rows(cfg: &CoverageConfig, gamma: f64, mr: f64, recs: &[&RepRecord], mcr: bool) -> Vec<CoverageRow> {
    let covers = |(lo, hi): (f64, f64), t: f64| lo <= t && t <= hi;
    let mut rows = Vec::new();
    if mcr {
        rows.push(summarize(gamma, TARGET_MR_F0, cfg, recs, |r| {
            Some(r.mcr_ci.map_or((false, f64::NAN), |ci| (covers(ci, mr), ci.1 - ci.0)))
        }));
        rows.push(summarize(gamma, TARGET_POPULATION_MCR, cfg, recs, |r| {
            let ci = r.mcr_ci?;
            let pop = r.population_mcr?;
            Some((ci.0 <= pop.0 && pop.1 <= ci.1, ci.1 - ci.0))
        }));
        rows.push(summarize(gamma, TARGET_TRUTH_IN_POPULATION_MCR, cfg, recs, |r| {
            r.population_mcr.map(|p| (covers(p, mr), p.1 - p.0))
        }));
    }
    if cfg.include_standard {
        rows.push(summarize(gamma, TARGET_STANDARD_MR_F0, cfg, recs, |r| {
            r.standard_ci.map(|ci| (covers(ci, mr), ci.1 - ci.0))
        }));
    }
    rows
}

/// Coverage of bootstrap MCR intervals (and, optionally, of the plain
/// single-model bootstrap) for the reliance of `f0` on `X1`, per `gamma`.
/// Each cell draws a finite population, computes the reliance of `f0` on it,
/// and for each replicate samples `n` rows with replacement, fits a
/// least-squares reference on a training split, and bootstraps MCR on the
/// remaining rows. Population MCR uses the same search engine on the whole
/// population, anchored at the reference model's population loss.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut population_mr = Vec::new();
    for (cell, &gamma) in cfg.gammas.iter().enumerate() {
        let pop = build_population(cfg, cell, gamma)?;
        let recs: Vec<Result<RepRecord>> = (0..cfg.reps).into_par_iter().map(|rep| run_rep(cfg, &pop, cell, rep)).collect();
        let recs = recs.into_iter().collect::<Result<Vec<_>>>()?;
        let refs: Vec<&RepRecord> = recs.iter().collect();
        rows.extend(cell_rows(cfg, gamma, pop.mr_f0, &refs, true));
        population_mr.push((gamma, pop.mr_f0));
        records.extend(recs);
    }
    Ok(CoverageReport { rows, records, population_mr })
}

/// Coverage of the plain single-model bootstrap alone.
pub fn standard_linear_baseline(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let cfg = CoverageConfig { include_standard: true, ..cfg.clone() };
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut population_mr = Vec::new();
    for (cell, &gamma) in cfg.gammas.iter().enumerate() {
        let pop = build_population(&cfg, cell, gamma)?;
        let recs: Vec<Result<RepRecord>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, cell, rep, 2));
                let idx: Vec<usize> = (0..cfg.n).map(|_| rng.random_range(0..pop.data.n())).collect();
                let sample = pop.data.select_rows(&idx)?;
                let ci = standard_linear_ci(&sample, cfg.n_train, cfg.boot_reps, sub_seed(cfg.seed, cell, rep, 5))?;
                Ok(RepRecord { gamma, rep, mcr_ci: None, population_mcr: None, standard_ci: Some(ci) })
            })
            .collect();
        let recs = recs.into_iter().collect::<Result<Vec<_>>>()?;
        let refs: Vec<&RepRecord> = recs.iter().collect();
        rows.extend(cell_rows(&cfg, gamma, pop.mr_f0, &refs, false));
        population_mr.push((gamma, pop.mr_f0));
        records.extend(recs);
    }
    Ok(CoverageReport { rows, records, population_mr })
}

/// Binary treatment `T` (the covariate of interest) and discrete covariate
/// profile `C`, with outcome mean `mean_outcome[c][t]` plus Gaussian noise.
/// Treatment is drawn given the profile only, so potential outcomes are
/// independent of treatment given `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalDgp {
    pub profile_probs: Vec<f64>,
    /// `P(T = 1 | C = c)` per profile.
    pub propensity: Vec<f64>,
    /// `[E(Y_0 | C = c), E(Y_1 | C = c)]` per profile.
    pub mean_outcome: Vec<[f64; 2]>,
    pub noise_sd: f64,
}

impl CausalDgp {
    /// Treatment independent of the profile.
    pub fn with_constant_propensity(profile_probs: Vec<f64>, p_treat: f64, mean_outcome: Vec<[f64; 2]>, noise_sd: f64) -> Self {
        let k = profile_probs.len();
        Self { profile_probs, propensity: vec![p_treat; k], mean_outcome, noise_sd }
    }

    fn validate(&self) -> Result<()> {
        let k = self.profile_probs.len();
        if k == 0 || self.propensity.len() != k || self.mean_outcome.len() != k {
            return Err(Error::InvalidArgument("profile tables must be nonempty and equally long".into()));
        }
        if self.profile_probs.iter().any(|p| !(*p >= 0.0)) || self.profile_probs.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("profile probabilities must be nonnegative with positive sum".into()));
        }
        if self.propensity.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::InvalidArgument("propensities must lie strictly between 0 and 1".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        let total: f64 = self.profile_probs.iter().sum();
        self.profile_probs.iter().map(|p| p / total).collect()
    }

    /// `Var(T) sum_t E[CATE(C)^2 | T = t]`, computed by enumeration.
    pub fn exact_reliance_gap(&self) -> f64 {
        let w = self.weights();
        let p: f64 = w.iter().zip(&self.propensity).map(|(a, b)| a * b).sum();
        let q = 1.0 - p;
        let mut treated = 0.0;
        let mut control = 0.0;
        for ((wc, pc), m) in w.iter().zip(&self.propensity).zip(&self.mean_outcome) {
            let cate = m[1] - m[0];
            treated += wc * pc * cate * cate;
            control += wc * (1.0 - pc) * cate * cate;
        }
        // p q (treated / p + control / q), written to stay finite as p -> 0 or 1.
        q * treated + p * control
    }
}

/// Monte-Carlo estimate of `e_switch(f0) - e_orig(f0)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub mc_se: f64,
}

/// Estimate the switched-minus-original loss of the true regression function
/// from `n_mc` independent pairs of draws and compare it with the exact
/// treatment-variance expression.
pub fn causal_identity_check(dgp: &CausalDgp, n_mc: usize, seed: u64) -> Result<CausalCheck> {
    dgp.validate()?;
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least 2 Monte-Carlo pairs".into()));
    }
    let profiles = WeightedIndex::new(dgp.weights()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> (usize, usize, f64) {
        let c = profiles.sample(rng);
        let t = usize::from(rng.random_bool(dgp.propensity[c]));
        let e: f64 = rng.sample(StandardNormal);
        (c, t, dgp.mean_outcome[c][t] + dgp.noise_sd * e)
    };
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n_mc {
        let (_, t_a, _) = draw(&mut rng);
        let (c_b, t_b, y_b) = draw(&mut rng);
        let switched = (y_b - dgp.mean_outcome[c_b][t_a]).powi(2);
        let original = (y_b - dgp.mean_outcome[c_b][t_b]).powi(2);
        let d = switched - original;
        sum += d;
        sum2 += d * d;
    }
    let m = n_mc as f64;
    let lhs = sum / m;
    let var = ((sum2 - m * lhs * lhs) / (m - 1.0)).max(0.0);
    Ok(CausalCheck { lhs, rhs: dgp.exact_reliance_gap(), mc_se: (var / m).sqrt() })
}
