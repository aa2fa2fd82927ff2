//! Multi-trial experiments comparing the transfer pipeline with two baselines.
//!
//! Methods: `tla` (the full transfer pipeline), `only-target` and
//! `only-source` (one constrained solve on a single domain). Every method is
//! scored on the same held-out target test set, with the rule `1{h(x) >= 0}`
//! and with the surrogate loss.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::{make_g0s_fixed, make_g0t, Objective, RiskTerm, Tightening};
use crate::cp_solver::{cp_solve, CpProblem, SearchDomain, SolverSettings};
use crate::data::{
    gen_gaussian, generation_manifest, load_csv, persist_run, subsample, train_test_split,
    CsvSchema, DatasetBundle, GaussianSpec, RunRecord, Standardizer,
};
use crate::error::{Error, Result};
use crate::np_core::{
    empirical_risk, indicator_risk, make_error_budgets, ClassLabel, ClassSamples, Domain,
    ErrorBudgets, LossKind, LossSpec, ParamVector,
};
use crate::np_transfer::{
    default_grad_bound, default_smoothness, run_transfer, transfer_manifest, Branch, RValues,
    TrainingData, TransferConfig,
};
use crate::rng::derive_seed;
use crate::set_oracle::{oracle_procedure, tabulate_risks, FiniteClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Source and target share both class distributions.
    InformativeSource,
    /// Source class-1 mean is the negated target class-1 mean.
    UninformativeSource,
    /// Shared class-0 distribution; source class-1 mean moved by `shift`.
    SharedMu0,
    /// Data read from CSV files.
    Csv,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::InformativeSource => "informative-source",
            Scenario::UninformativeSource => "uninformative-source",
            Scenario::SharedMu0 => "shared-mu0",
            Scenario::Csv => "csv",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "informative-source" => Ok(Scenario::InformativeSource),
            "uninformative-source" => Ok(Scenario::UninformativeSource),
            "shared-mu0" => Ok(Scenario::SharedMu0),
            "csv" => Ok(Scenario::Csv),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// CSV inputs for the `csv` scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub label_column: String,
    pub feature_columns: Vec<String>,
    /// Standardize every column with target-training statistics.
    #[serde(default)]
    pub standardize: bool,
}

/// Full experiment configuration, readable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub trials: usize,
    /// Target training size per class.
    pub n_target: usize,
    /// Source training sizes per class, ascending.
    pub source_sizes: Vec<usize>,
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Held-out target rows per class (synthetic scenarios).
    pub test_size: usize,
    /// Feature dimension before the intercept (synthetic scenarios).
    pub dim: usize,
    /// Distance between the target class means.
    pub separation: f64,
    /// Source class-1 mean offset in the shared-mu0 scenario.
    pub shift: f64,
    pub delta: f64,
    /// Explicit `C~`; takes precedence over `b_h`.
    pub c_tilde: Option<f64>,
    /// Class complexity used to compute `C~` when `c_tilde` is unset.
    pub b_h: Option<f64>,
    pub loss: LossKind,
    pub radius: f64,
    pub r: RValues,
    pub grad_bound: Option<f64>,
    pub smoothness: Option<f64>,
    pub solver: SolverSettings,
    pub csv: Option<CsvSource>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            trials: 10,
            n_target: 40,
            source_sizes: vec![100, 400, 900],
            scenario: Scenario::InformativeSource,
            seed: 1,
            output_dir: PathBuf::from("nptl-out"),
            test_size: 1700,
            dim: 1,
            separation: 2.5,
            shift: 0.0,
            delta: 0.05,
            c_tilde: Some(0.05),
            b_h: None,
            loss: LossKind::ScaledLogistic,
            radius: 15.0,
            r: RValues::uniform(0.5),
            grad_bound: None,
            smoothness: None,
            solver: SolverSettings {
                step_constant: Some(0.5),
                k_n: None,
                max_iterations: Some(200_000),
            },
            csv: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.n_target == 0 {
            return Err(Error::Config("n_target must be >= 1".into()));
        }
        if self.source_sizes.is_empty()
            || self.source_sizes.contains(&0)
            || self.source_sizes.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "source_sizes must be nonempty, positive and strictly ascending: {:?}",
                self.source_sizes
            )));
        }
        if self.c_tilde.is_none() && self.b_h.is_none() {
            return Err(Error::Config("set either c_tilde or b_h".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be > 0, got {}", self.radius)));
        }
        match self.scenario {
            Scenario::Csv if self.csv.is_none() => {
                return Err(Error::Config("csv scenario needs a [csv] table".into()))
            }
            Scenario::Csv => {}
            _ => {
                if self.dim == 0 || self.test_size == 0 {
                    return Err(Error::Config("dim and test_size must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Generates or loads the data for one trial at one source size.
///
/// Target training and test data depend only on the trial; source rows for a
/// smaller size are a prefix of those for a larger size.
pub fn build_bundle(cfg: &ExperimentConfig, n_source: usize, trial: usize) -> Result<DatasetBundle> {
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    match cfg.scenario {
        Scenario::Csv => csv_bundle(cfg, n_source, trial_seed),
        _ => synthetic_bundle(cfg, n_source, trial_seed),
    }
}

fn synthetic_bundle(cfg: &ExperimentConfig, n_source: usize, trial_seed: u64) -> Result<DatasetBundle> {
    let k = cfg.dim;
    let unit = 1.0 / (k as f64).sqrt();
    let mu0 = vec![0.0; k];
    let mu1 = vec![cfg.separation * unit; k];
    let src_mu1 = match cfg.scenario {
        Scenario::InformativeSource => mu1.clone(),
        Scenario::UninformativeSource => mu1.iter().map(|m| -m).collect(),
        Scenario::SharedMu0 => mu1.iter().map(|m| m + cfg.shift * unit).collect(),
        Scenario::Csv => unreachable!(),
    };
    let spec = |mean: &[f64], n, stream| GaussianSpec::isotropic(mean.to_vec(), n, derive_seed(trial_seed, stream));
    let specs = [
        ("target0", spec(&mu0, cfg.n_target, 1), ClassLabel::Zero, Domain::Target),
        ("target1", spec(&mu1, cfg.n_target, 2), ClassLabel::One, Domain::Target),
        ("test0", spec(&mu0, cfg.test_size, 3), ClassLabel::Zero, Domain::Target),
        ("test1", spec(&mu1, cfg.test_size, 4), ClassLabel::One, Domain::Target),
        ("source0", spec(&mu0, n_source, 5), ClassLabel::Zero, Domain::Source),
        ("source1", spec(&src_mu1, n_source, 6), ClassLabel::One, Domain::Source),
    ];
    let sets = specs
        .iter()
        .map(|(_, s, c, d)| gen_gaussian(s, *c, *d).map(|x| x.with_intercept()))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = vec![("scenario".to_string(), cfg.scenario.name().to_string())];
    manifest.extend(generation_manifest(
        &specs.iter().map(|(n, s, _, _)| (*n, s)).collect::<Vec<_>>(),
    ));
    let [t0, t1, e0, e1, s0, s1]: [ClassSamples; 6] = sets.try_into().expect("six sets");
    DatasetBundle::new(TrainingData::new(s0, s1, t0, t1)?, e0, e1, manifest)
}

fn csv_bundle(cfg: &ExperimentConfig, n_source: usize, trial_seed: u64) -> Result<DatasetBundle> {
    let src = cfg.csv.as_ref().expect("validated");
    let schema = |domain| CsvSchema {
        label_column: src.label_column.clone(),
        feature_columns: src.feature_columns.clone(),
        domain,
    };
    let (t0, t1) = load_csv(&src.target_path, &schema(Domain::Target))?;
    let (s0, s1) = load_csv(&src.source_path, &schema(Domain::Source))?;
    let (t0, e0) = train_test_split(&t0, cfg.n_target, derive_seed(trial_seed, 1))?;
    let (t1, e1) = train_test_split(&t1, cfg.n_target, derive_seed(trial_seed, 2))?;
    let s0 = subsample(&s0, n_source, derive_seed(trial_seed, 5))?;
    let s1 = subsample(&s1, n_source, derive_seed(trial_seed, 6))?;
    let mut sets = [t0, t1, e0, e1, s0, s1];
    if src.standardize {
        let z = Standardizer::fit(&[&sets[0], &sets[1]])?;
        for s in sets.iter_mut() {
            *s = z.apply(s)?;
        }
    }
    let [t0, t1, e0, e1, s0, s1] = sets.map(|s| s.with_intercept());
    let manifest = vec![
        ("scenario".to_string(), "csv".to_string()),
        ("target_path".to_string(), src.target_path.display().to_string()),
        ("source_path".to_string(), src.source_path.display().to_string()),
        ("standardize".to_string(), src.standardize.to_string()),
    ];
    DatasetBundle::new(TrainingData::new(s0, s1, t0, t1)?, e0, e1, manifest)
}

/// Loss, budgets and solver constants for one data set.
pub fn transfer_config(cfg: &ExperimentConfig, data: &TrainingData, seed: u64) -> Result<TransferConfig> {
    let loss = LossSpec::for_ball(cfg.loss, cfg.radius, data.max_norm())?;
    let sizes = data.sizes();
    let budgets = match (cfg.c_tilde, cfg.b_h) {
        (Some(c), _) => ErrorBudgets::from_constant(c, sizes, cfg.delta)?,
        (None, Some(b_h)) => make_error_budgets(sizes, b_h, loss.lipschitz(), loss.bound(), cfg.delta)?,
        (None, None) => return Err(Error::Config("set either c_tilde or b_h".into())),
    };
    let grad_bound = cfg.grad_bound.unwrap_or_else(|| default_grad_bound(&loss, data));
    let smoothness = match cfg.smoothness.or_else(|| default_smoothness(&loss, data)) {
        Some(h) => h,
        None => {
            return Err(Error::Config(format!(
                "{} loss needs an explicit smoothness constant",
                loss.kind().name()
            )))
        }
    };
    let tc = TransferConfig {
        alpha: cfg.alpha,
        budgets,
        loss,
        radius: cfg.radius,
        r: cfg.r,
        grad_bound,
        smoothness,
        solver: cfg.solver,
        seed,
    };
    tc.validate()?;
    Ok(tc)
}

fn single_domain_solve(
    objective: &ClassSamples,
    constraint: crate::constraints::ConstraintFn,
    eps: f64,
    cfg: &TransferConfig,
    stream: u64,
) -> Result<ParamVector> {
    let c_g = constraint.value_bound();
    let problem = CpProblem::configured(
        Objective::Risk(RiskTerm::new(objective.clone(), cfg.loss)),
        constraint,
        SearchDomain::ball(objective.dim(), cfg.radius),
        0.0,
        eps,
        cfg.delta(),
        cfg.r.target,
        c_g,
        &cfg.solver,
        derive_seed(cfg.seed, stream),
    )?;
    Ok(cp_solve(&problem)?.theta())
}

/// `min R1T` s.t. `R0T <= alpha + eps_0T`, no slack, accuracy `eps_1T`.
pub fn baseline_only_target(data: &TrainingData, cfg: &TransferConfig) -> Result<ParamVector> {
    let g = make_g0t(
        data.target0.clone(),
        cfg.loss,
        cfg.alpha,
        cfg.budgets.eps_0t,
        Tightening::Relaxed,
    )?;
    single_domain_solve(&data.target1, g, cfg.budgets.eps_1t, cfg, 11)
}

/// `min R1S` s.t. `R0S <= alpha + eps_0S`, no slack, accuracy `eps_1S`.
pub fn baseline_only_source(data: &TrainingData, cfg: &TransferConfig) -> Result<ParamVector> {
    let g = make_g0s_fixed(data.source0.clone(), cfg.loss, cfg.alpha, cfg.budgets.eps_0s);
    single_domain_solve(&data.source1, g, cfg.budgets.eps_1s, cfg, 12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tla,
    OnlyTarget,
    OnlySource,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Tla, Method::OnlyTarget, Method::OnlySource];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tla => "tla",
            Method::OnlyTarget => "only-target",
            Method::OnlySource => "only-source",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Held-out scores of one fitted hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub method: Method,
    pub type1_test: f64,
    pub type2_test: f64,
    pub type1_surrogate: f64,
    pub type2_surrogate: f64,
    pub branch: Option<Branch>,
    pub alpha_hat: Option<f64>,
    pub seed: u64,
}

/// One method's outcome in one trial.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub n_source: usize,
    pub trial: usize,
    pub seed: u64,
    pub test_id: u64,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
    pub theta: Option<ParamVector>,
    /// Pipeline manifest (TLA only).
    pub manifest: Vec<(String, String)>,
}

impl MethodRun {
    pub fn record(&self, cfg: &ExperimentConfig) -> RunRecord {
        let mut r = RunRecord::new();
        r.push("method", self.method);
        r.push("scenario", cfg.scenario.name());
        r.push("n_source", self.n_source);
        r.push("n_target", cfg.n_target);
        r.push("trial", self.trial);
        r.push("seed", self.seed);
        r.push("base_seed", cfg.seed);
        r.push("test_id", format!("{:016x}", self.test_id));
        match (&self.metrics, &self.error) {
            (Some(m), _) => {
                r.push("status", "ok");
                r.push("type1_test", format!("{:?}", m.type1_test));
                r.push("type2_test", format!("{:?}", m.type2_test));
                r.push("type1_surrogate", format!("{:?}", m.type1_surrogate));
                r.push("type2_surrogate", format!("{:?}", m.type2_surrogate));
                if let Some(b) = m.branch {
                    r.push("branch", b);
                }
            }
            (None, e) => {
                r.push("status", "failed");
                r.push("error", e.as_deref().unwrap_or("unknown").replace('\n', " "));
            }
        }
        if let Some(t) = &self.theta {
            let v: Vec<String> = t.as_slice().iter().map(|x| format!("{x:?}")).collect();
            r.push("theta", v.join(";"));
        }
        for (k, v) in &self.manifest {
            r.push(format!("tla.{k}"), v.replace('\n', " "));
        }
        r
    }
}

fn evaluate(method: Method, theta: &ParamVector, bundle: &DatasetBundle, loss: &LossSpec, seed: u64) -> Result<TrialMetrics> {
    Ok(TrialMetrics {
        method,
        type1_test: indicator_risk(theta.as_slice(), bundle.test0())?,
        type2_test: indicator_risk(theta.as_slice(), bundle.test1())?,
        type1_surrogate: empirical_risk(theta, bundle.test0(), loss)?,
        type2_surrogate: empirical_risk(theta, bundle.test1(), loss)?,
        branch: None,
        alpha_hat: None,
        seed,
    })
}

/// Runs the three methods on one trial's data. A method's failure is recorded
/// in its [`MethodRun`] and does not stop the others.
pub fn run_trial(cfg: &ExperimentConfig, n_source: usize, trial: usize) -> Result<Vec<MethodRun>> {
    let bundle = build_bundle(cfg, n_source, trial)?;
    let seed = derive_seed(derive_seed(cfg.seed, trial as u64), 1000 + n_source as u64);
    let data = bundle.training();
    let tc = transfer_config(cfg, data, seed)?;
    let test_id = bundle.test_id();
    let mut runs = Vec::with_capacity(3);
    for method in Method::ALL {
        let mut manifest = Vec::new();
        let fitted: Result<(ParamVector, Option<Branch>, Option<f64>)> = match method {
            Method::Tla => run_transfer(data, &tc).map(|res| {
                manifest = transfer_manifest(&tc, &res);
                (res.theta_hat.clone(), Some(res.branch), Some(res.alpha_hat))
            }),
            Method::OnlyTarget => baseline_only_target(data, &tc).map(|t| (t, None, None)),
            Method::OnlySource => baseline_only_source(data, &tc).map(|t| (t, None, None)),
        };
        let outcome = fitted.and_then(|(theta, branch, alpha_hat)| {
            let mut m = evaluate(method, &theta, &bundle, &tc.loss, seed)?;
            m.branch = branch;
            m.alpha_hat = alpha_hat;
            Ok((m, theta))
        });
        let (metrics, theta, error) = match outcome {
            Ok((m, t)) => (Some(m), Some(t), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        runs.push(MethodRun {
            method,
            n_source,
            trial,
            seed,
            test_id,
            metrics,
            error,
            theta,
            manifest,
        });
    }
    Ok(runs)
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n_source: usize,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub median: f64,
    pub stderr: f64,
    pub count: usize,
}

pub const METRICS: [&str; 4] = ["type1_test", "type2_test", "type1_surrogate", "type2_surrogate"];

fn metric_value(m: &TrialMetrics, name: &str) -> f64 {
    match name {
        "type1_test" => m.type1_test,
        "type2_test" => m.type2_test,
        "type1_surrogate" => m.type1_surrogate,
        "type2_surrogate" => m.type2_surrogate,
        other => panic!("unknown metric {other}"),
    }
}

/// Median of a nonempty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean, median and standard error of the mean (zero for a single value).
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    (mean, median(values), stderr)
}

/// Aggregates successful runs per `(n_source, method, metric)`, in the order
/// of `source_sizes` then [`Method::ALL`] then [`METRICS`].
pub fn aggregate(runs: &[MethodRun], source_sizes: &[usize]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &n in source_sizes {
        for method in Method::ALL {
            let ok: Vec<&TrialMetrics> = runs
                .iter()
                .filter(|r| r.n_source == n && r.method == method)
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            if ok.is_empty() {
                continue;
            }
            for metric in METRICS {
                let values: Vec<f64> = ok.iter().map(|m| metric_value(m, metric)).collect();
                let (mean, median, stderr) = summarize(&values);
                rows.push(AggregateRow {
                    n_source: n,
                    method,
                    metric: metric.to_string(),
                    mean,
                    median,
                    stderr,
                    count: values.len(),
                });
            }
        }
    }
    rows
}

/// Writes the plot-ready aggregate CSV.
pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(["n_source", "method", "metric", "mean", "median", "stderr"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.n_source.to_string(),
            r.method.to_string(),
            r.metric.clone(),
            format!("{:?}", r.mean),
            format!("{:?}", r.median),
            format!("{:?}", r.stderr),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Output of [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<MethodRun>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.metrics.is_none()).count()
    }
}

/// Runs every `(source size, trial)` pair in order and aggregates.
///
/// With `out` set, writes `runs/*.txt`, `aggregate.csv` and `manifest.txt`
/// under it. Fails only if every method run failed.
pub fn run_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepResult> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for &n in &cfg.source_sizes {
        for t in 0..cfg.trials {
            match run_trial(cfg, n, t) {
                Ok(r) => runs.extend(r),
                Err(e) if e.is_config() => return Err(e),
                Err(e) => {
                    for method in Method::ALL {
                        runs.push(MethodRun {
                            method,
                            n_source: n,
                            trial: t,
                            seed: derive_seed(cfg.seed, t as u64),
                            test_id: 0,
                            metrics: None,
                            error: Some(e.to_string()),
                            theta: None,
                            manifest: Vec::new(),
                        });
                    }
                }
            }
        }
    }
    let aggregates = aggregate(&runs, &cfg.source_sizes);
    let result = SweepResult { runs, aggregates };
    if let Some(dir) = out {
        write_sweep(cfg, &result, dir)?;
    }
    if result.failures() == result.runs.len() {
        return Err(Error::AllTrialsFailed(result.runs.len()));
    }
    Ok(result)
}

fn write_sweep(cfg: &ExperimentConfig, res: &SweepResult, dir: &Path) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    for run in &res.runs {
        let name = format!("n{}_t{}_{}.txt", run.n_source, run.trial, run.method);
        persist_run(&run.record(cfg), &runs_dir.join(name))?;
    }
    write_aggregate_csv(&res.aggregates, &dir.join("aggregate.csv"))?;
    let mut m = RunRecord::new();
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    m.push("config_toml", text.replace('\n', "\\n"));
    m.push("runs", res.runs.len());
    m.push("failures", res.failures());
    persist_run(&m, &dir.join("manifest.txt"))
}

/// Solver-versus-oracle comparison on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub alpha_hat_oracle: f64,
    pub alpha_hat_solver: f64,
    /// Empirical target surrogate Type-II of the oracle's choice.
    pub type2_oracle: f64,
    /// Empirical target surrogate Type-II of the pipeline's output.
    pub type2_solver: f64,
    pub type1_target_solver: f64,
    pub type1_source_solver: f64,
    pub budgets: ErrorBudgets,
    pub grid_spacing: f64,
    pub lipschitz: f64,
    pub branch_oracle: Branch,
    pub branch_solver: Branch,
}

impl OracleCheck {
    /// Type-II tolerance `max(3 eps_1T, spacing * L)`.
    pub fn type2_tolerance(&self) -> f64 {
        (3.0 * self.budgets.eps_1t).max(self.grid_spacing * self.lipschitz)
    }

    pub fn type2_within_tolerance(&self) -> bool {
        self.type2_solver <= self.type2_oracle + self.type2_tolerance()
    }

    /// Both empirical Type-I constraints hold at `theta_hat`.
    pub fn constraints_hold(&self, alpha: f64) -> bool {
        self.type1_target_solver <= alpha + self.budgets.eps_0t
            && self.type1_source_solver <= self.alpha_hat_solver + self.budgets.eps_0s
    }
}

/// Runs the pipeline and the exhaustive oracle over a lattice of the
/// parameter ball on the same training data.
pub fn oracle_check(cfg: &ExperimentConfig, n_source: usize, trial: usize, grid_spacing: f64) -> Result<OracleCheck> {
    let bundle = build_bundle(cfg, n_source, trial)?;
    let data = bundle.training();
    let seed = derive_seed(derive_seed(cfg.seed, trial as u64), 2000 + n_source as u64);
    let tc = transfer_config(cfg, data, seed)?;
    let class = FiniteClass::ball_grid(data.dim(), cfg.radius, grid_spacing)?;
    let table = tabulate_risks(&class, data, &tc.loss)?;
    let oracle = oracle_procedure(&table, cfg.alpha, &tc.budgets)?;
    let res = run_transfer(data, &tc)?;
    let th = &res.theta_hat;
    Ok(OracleCheck {
        alpha_hat_oracle: oracle.alpha_hat_s,
        alpha_hat_solver: res.alpha_hat,
        type2_oracle: table.r1t[oracle.chosen_index],
        type2_solver: empirical_risk(th, &data.target1, &tc.loss)?,
        type1_target_solver: empirical_risk(th, &data.target0, &tc.loss)?,
        type1_source_solver: empirical_risk(th, &data.source0, &tc.loss)?,
        budgets: tc.budgets,
        grid_spacing,
        lipschitz: tc.loss.lipschitz(),
        branch_oracle: oracle.branch,
        branch_solver: res.branch,
    })
}
