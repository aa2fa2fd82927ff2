//! Two-stage transfer procedure built from solver calls.
//!
//! Stages, in order:
//!
//! 1. warm start: `min R1T` s.t. `R0T <= alpha - eps_0T`;
//! 2. `alpha_hat`: `min alpha'` over `(theta, alpha')` s.t.
//!    `max{g0T, g0S(theta, alpha'), g1T_hat} <= 0`, `alpha' in [alpha, 1]`;
//! 3. subproblems: `min R1T` and `min R1S` over the joint set at `alpha_hat`;
//! 4. final solve: `min R1S` over the joint set intersected with
//!    `R1T <= R1T(theta'_T) + 2 eps_1T`, then the selection rule.
//!
//! Reference risks are frozen when each constraint is built, so later stages
//! never change an earlier constraint.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    make_g0s_alpha, make_g0s_fixed, make_g0t, make_g1t_hat, max_compose, ConstraintFn, Objective,
    RiskTerm, StochasticFunction, Tightening,
};
use crate::cp_solver::{cp_solve, CpProblem, CpResult, Fallback, SearchDomain, SolverSettings};
use crate::error::{Error, Result};
use crate::np_core::{
    empirical_risk, norm, ClassLabel, ClassSamples, Domain, ErrorBudgets, LossSpec, ParamVector,
    SampleSizes,
};
use crate::rng::{derive_seed, seeded, RNG_ALGORITHM};

/// The four training sets.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub source0: ClassSamples,
    pub source1: ClassSamples,
    pub target0: ClassSamples,
    pub target1: ClassSamples,
}

impl TrainingData {
    pub fn new(
        source0: ClassSamples,
        source1: ClassSamples,
        target0: ClassSamples,
        target1: ClassSamples,
    ) -> Result<Self> {
        let expect = [
            (&source0, ClassLabel::Zero, Domain::Source),
            (&source1, ClassLabel::One, Domain::Source),
            (&target0, ClassLabel::Zero, Domain::Target),
            (&target1, ClassLabel::One, Domain::Target),
        ];
        for (s, class, domain) in expect {
            if s.class() != class || s.domain() != domain {
                return Err(Error::Config(format!(
                    "expected class {class:?} / domain {domain}, got {:?} / {}",
                    s.class(),
                    s.domain()
                )));
            }
            if s.dim() != source0.dim() {
                return Err(Error::DimensionMismatch {
                    expected: source0.dim(),
                    got: s.dim(),
                });
            }
        }
        Ok(Self {
            source0,
            source1,
            target0,
            target1,
        })
    }

    pub fn dim(&self) -> usize {
        self.source0.dim()
    }

    pub fn sizes(&self) -> SampleSizes {
        SampleSizes {
            n0s: self.source0.len(),
            n0t: self.target0.len(),
            n1s: self.source1.len(),
            n1t: self.target1.len(),
        }
    }

    /// Largest row norm over all four sets.
    pub fn max_norm(&self) -> f64 {
        [&self.source0, &self.source1, &self.target0, &self.target1]
            .iter()
            .map(|s| s.max_norm())
            .fold(0.0, f64::max)
    }
}

/// Lower bounds on constraint gradient norms along each constraint's boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RValues {
    /// Warm-start constraint.
    pub target: f64,
    /// Joint `(theta, alpha')` constraint.
    pub alpha_hat: f64,
    /// Source subproblem.
    pub source_prime: f64,
    /// Target subproblem.
    pub target_prime: f64,
    /// Final constraint.
    pub source_target: f64,
}

impl RValues {
    pub fn uniform(r: f64) -> Self {
        Self {
            target: r,
            alpha_hat: r,
            source_prime: r,
            target_prime: r,
            source_target: r,
        }
    }

    fn all(&self) -> [f64; 5] {
        [
            self.target,
            self.alpha_hat,
            self.source_prime,
            self.target_prime,
            self.source_target,
        ]
    }
}

/// Everything the pipeline needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub alpha: f64,
    pub budgets: ErrorBudgets,
    pub loss: LossSpec,
    pub radius: f64,
    pub r: RValues,
    /// `G`.
    pub grad_bound: f64,
    /// `H`, Lipschitz constant of the risk gradients.
    pub smoothness: f64,
    pub solver: SolverSettings,
    pub seed: u64,
}

/// `G = L * max ||x||`.
pub fn default_grad_bound(loss: &LossSpec, data: &TrainingData) -> f64 {
    loss.lipschitz() * data.max_norm()
}

/// `H = sup |phi''| * max ||x||^2`; `None` for losses without a second derivative.
pub fn default_smoothness(loss: &LossSpec, data: &TrainingData) -> Option<f64> {
    loss.smoothness().map(|h| h * data.max_norm().powi(2))
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.r.all().iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("all r values must be > 0: {:?}", self.r)));
        }
        if !(self.grad_bound > 0.0 && self.smoothness > 0.0 && self.radius > 0.0) {
            return Err(Error::Config(format!(
                "need G > 0, H > 0, B > 0; got {}, {}, {}",
                self.grad_bound, self.smoothness, self.radius
            )));
        }
        Ok(())
    }

    /// `G_lambda = 2C + max eps`.
    pub fn g_lambda(&self) -> f64 {
        2.0 * self.loss.bound() + self.budgets.max_eps()
    }

    pub fn delta(&self) -> f64 {
        self.budgets.delta
    }

    /// `xi(eps, r)` with this configuration's constants.
    pub fn xi(&self, eps: f64, r: f64) -> f64 {
        slackness_xi(
            eps,
            r,
            self.grad_bound,
            self.g_lambda(),
            self.smoothness,
            self.delta(),
        )
    }
}

/// `xi(eps, r) = min{1/(4H), eps / ((G + G_lambda sqrt(log(1/delta))) (2 + 2 H eps))} * r`.
pub fn slackness_xi(eps: f64, r: f64, g: f64, g_lambda: f64, h: f64, delta: f64) -> f64 {
    let first = 1.0 / (4.0 * h);
    let second = eps / ((g + g_lambda * (1.0 / delta).ln().sqrt()) * (2.0 + 2.0 * h * eps));
    first.min(second) * r
}

/// Stage accuracies and the slacks derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps_st: f64,
    pub eps_t_prime: f64,
    pub eps_s_prime: f64,
    pub eps_alpha_hat: f64,
    pub eps_warm: f64,
    pub xi_st: f64,
    pub xi_t_prime: f64,
    pub xi_s_prime: f64,
    pub xi_alpha_hat: f64,
}

/// Fills in the stage tolerances, each later one a min over more slack terms.
pub fn tolerance_cascade(budgets: &ErrorBudgets, cfg: &TransferConfig) -> Tolerances {
    let r = &cfg.r;
    let eps_st = budgets.eps_1s;
    let xi_st = cfg.xi(eps_st, r.source_target);
    let eps_t_prime = xi_st.min(budgets.eps_1t);
    let eps_s_prime = budgets.eps_1s;
    let xi_s_prime = cfg.xi(eps_s_prime, r.source_prime);
    let xi_t_prime = cfg.xi(eps_t_prime, r.target_prime);
    let eps_alpha_hat = xi_st.min(xi_s_prime).min(xi_t_prime);
    let xi_alpha_hat = cfg.xi(eps_alpha_hat, r.alpha_hat);
    let eps_warm = xi_st.min(xi_s_prime).min(xi_t_prime).min(xi_alpha_hat);
    Tolerances {
        eps_st,
        eps_t_prime,
        eps_s_prime,
        eps_alpha_hat,
        eps_warm,
        xi_st,
        xi_t_prime,
        xi_s_prime,
        xi_alpha_hat,
    }
}

/// Solver diagnostics for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub eps: f64,
    pub xi: f64,
    pub iterations: usize,
    pub objective_value: f64,
    pub constraint_value: f64,
    pub projection_distance: f64,
    pub lambda_final: f64,
    pub lambda_max: f64,
}

impl StageSummary {
    fn from_result(stage: &str, eps: f64, xi: f64, res: &CpResult) -> Self {
        Self {
            stage: stage.to_string(),
            eps,
            xi,
            iterations: res.iterations,
            objective_value: res.objective_value,
            constraint_value: res.constraint_value,
            projection_distance: res.projection_distance,
            lambda_final: res.lambda_final,
            lambda_max: res.lambda_max,
        }
    }
}

/// Output of one solver stage.
#[derive(Debug, Clone)]
pub struct Stage {
    pub theta: ParamVector,
    pub summary: StageSummary,
}

pub const STAGE_WARM: &str = "warm-start";
pub const STAGE_ALPHA: &str = "alpha-hat";
pub const STAGE_TARGET: &str = "target-subproblem";
pub const STAGE_SOURCE: &str = "source-subproblem";
pub const STAGE_FINAL: &str = "final";

#[allow(clippy::too_many_arguments)]
fn solve_stage<F: StochasticFunction>(
    stage: &str,
    objective: F,
    constraint: ConstraintFn,
    domain: SearchDomain,
    xi: f64,
    eps: f64,
    r: f64,
    cfg: &TransferConfig,
    stream: u64,
    fallback: Option<Fallback>,
) -> Result<(CpResult, StageSummary)> {
    let c_g = constraint.value_bound();
    let mut problem = CpProblem::configured(
        objective,
        constraint,
        domain,
        xi,
        eps,
        cfg.delta(),
        r,
        c_g,
        &cfg.solver,
        derive_seed(cfg.seed, stream),
    )?;
    problem.fallback = fallback;
    let res = cp_solve(&problem)?;
    let summary = StageSummary::from_result(stage, eps, res.xi, &res);
    Ok((res, summary))
}

fn risk_objective(samples: &ClassSamples, loss: LossSpec) -> Objective {
    Objective::Risk(RiskTerm::new(samples.clone(), loss))
}

fn check_sizing(cfg: &TransferConfig) -> Result<()> {
    let margin = cfg.alpha - cfg.budgets.eps_0t;
    if margin <= 0.0 {
        return Err(Error::Sizing { margin });
    }
    Ok(())
}

/// Warm start on the target: `min R1T` s.t. `R0T <= alpha - eps_0T`, no slack.
pub fn warm_start_target(data: &TrainingData, cfg: &TransferConfig) -> Result<Stage> {
    cfg.validate()?;
    check_sizing(cfg)?;
    let tol = tolerance_cascade(&cfg.budgets, cfg);
    let g = make_g0t(
        data.target0.clone(),
        cfg.loss,
        cfg.alpha,
        cfg.budgets.eps_0t,
        Tightening::Tightened,
    )?;
    let (res, summary) = solve_stage(
        STAGE_WARM,
        risk_objective(&data.target1, cfg.loss),
        g,
        SearchDomain::ball(data.dim(), cfg.radius),
        0.0,
        tol.eps_warm,
        cfg.r.target,
        cfg,
        1,
        None,
    )
    .map_err(|e| match e {
        e @ Error::InfeasibleConstraint { .. } => {
            e.in_stage(STAGE_WARM, "; increase n_0T or alpha")
        }
        e => e.in_stage(STAGE_WARM, ""),
    })?;
    Ok(Stage {
        theta: res.theta(),
        summary,
    })
}

fn g1t_hat(data: &TrainingData, cfg: &TransferConfig, theta_warm: &ParamVector) -> Result<ConstraintFn> {
    make_g1t_hat(data.target1.clone(), cfg.loss, theta_warm, cfg.budgets.eps_1t, 6.0)
}

fn g0t_relaxed(data: &TrainingData, cfg: &TransferConfig) -> Result<ConstraintFn> {
    make_g0t(
        data.target0.clone(),
        cfg.loss,
        cfg.alpha,
        cfg.budgets.eps_0t,
        Tightening::Relaxed,
    )
}

/// `max{g0T, g0S(theta, alpha'), g1T_hat}` over `(theta, alpha')`.
pub fn alpha_constraint(
    data: &TrainingData,
    cfg: &TransferConfig,
    theta_warm: &ParamVector,
) -> Result<ConstraintFn> {
    max_compose(vec![
        g0t_relaxed(data, cfg)?,
        make_g0s_alpha(data.source0.clone(), cfg.loss, cfg.budgets.eps_0s),
        g1t_hat(data, cfg, theta_warm)?,
    ])
}

/// `max{g0T, g0S(theta, alpha_hat), g1T_hat}` over `theta`.
pub fn joint_constraint(
    data: &TrainingData,
    cfg: &TransferConfig,
    theta_warm: &ParamVector,
    alpha_hat: f64,
) -> Result<ConstraintFn> {
    max_compose(vec![
        g0t_relaxed(data, cfg)?,
        make_g0s_fixed(data.source0.clone(), cfg.loss, alpha_hat, cfg.budgets.eps_0s),
        g1t_hat(data, cfg, theta_warm)?,
    ])
}

/// Smallest feasible source level `alpha_hat in [alpha, 1]`; the `theta` block is discarded.
pub fn compute_alpha_hat(
    data: &TrainingData,
    cfg: &TransferConfig,
    theta_warm: &ParamVector,
) -> Result<(f64, StageSummary)> {
    alpha_hat_stage(data, cfg, theta_warm).map(|(a, _, s)| (a, s))
}

/// [`compute_alpha_hat`] also returning the `theta` block of the solution.
pub fn alpha_hat_stage(
    data: &TrainingData,
    cfg: &TransferConfig,
    theta_warm: &ParamVector,
) -> Result<(f64, Vec<f64>, StageSummary)> {
    cfg.validate()?;
    let tol = tolerance_cascade(&cfg.budgets, cfg);
    let d = data.dim();
    let (res, summary) = solve_stage(
        STAGE_ALPHA,
        Objective::Coordinate(d),
        alpha_constraint(data, cfg, theta_warm)?,
        SearchDomain::ball_with_alpha(d, cfg.radius, cfg.alpha, 1.0),
        tol.xi_alpha_hat,
        tol.eps_alpha_hat,
        cfg.r.alpha_hat,
        cfg,
        2,
        None,
    )
    .map_err(|e| e.in_stage(STAGE_ALPHA, ""))?;
    let alpha_hat = res.alpha_coordinate().expect("joint problem has an alpha coordinate");
    Ok((alpha_hat, res.theta_hat[..d].to_vec(), summary))
}

/// Target and source subproblems over the joint set at `alpha_hat`.
///
/// `alpha_hat` is minimal, so the `g0S` piece is tight and `{g <= -xi}` can be
/// empty at the subproblem slack. `alpha_point`, the `theta` block of the
/// alpha-hat solution, satisfies `g <= -xi_alpha_hat`; when given, it anchors
/// the retraction at that smaller slack if the probe fails.
pub fn solve_subproblems(
    data: &TrainingData,
    cfg: &TransferConfig,
    alpha_hat: f64,
    theta_warm: &ParamVector,
    alpha_point: Option<&[f64]>,
) -> Result<(Stage, Stage)> {
    cfg.validate()?;
    let tol = tolerance_cascade(&cfg.budgets, cfg);
    let g = joint_constraint(data, cfg, theta_warm, alpha_hat)?;
    let domain = SearchDomain::ball(data.dim(), cfg.radius);
    let fallback = alpha_point.map(|p| Fallback {
        anchor: p.to_vec(),
        xi: tol.xi_alpha_hat,
    });
    let (rt, st) = solve_stage(
        STAGE_TARGET,
        risk_objective(&data.target1, cfg.loss),
        g.clone(),
        domain,
        tol.xi_t_prime,
        tol.eps_t_prime,
        cfg.r.target_prime,
        cfg,
        3,
        fallback.clone(),
    )
    .map_err(|e| e.in_stage(STAGE_TARGET, ""))?;
    let (rs, ss) = solve_stage(
        STAGE_SOURCE,
        risk_objective(&data.source1, cfg.loss),
        g,
        domain,
        tol.xi_s_prime,
        tol.eps_s_prime,
        cfg.r.source_prime,
        cfg,
        4,
        fallback,
    )
    .map_err(|e| e.in_stage(STAGE_SOURCE, ""))?;
    Ok((
        Stage {
            theta: rt.theta(),
            summary: st,
        },
        Stage {
            theta: rs.theta(),
            summary: ss,
        },
    ))
}

/// Which hypothesis the selection rule returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Intersection,
    TargetOnlyFallback,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Intersection => "intersection",
            Branch::TargetOnlyFallback => "target-only-fallback",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intersection" => Ok(Branch::Intersection),
            "target-only-fallback" | "fallback" => Ok(Branch::TargetOnlyFallback),
            other => Err(Error::Config(format!("unknown branch `{other}`"))),
        }
    }
}

/// Falls back to the target subproblem when the final source risk exceeds the
/// source subproblem's by more than `2 eps_1S`.
pub fn select_branch(r1s_tilde: f64, r1s_source_prime: f64, eps_1s: f64) -> Branch {
    if r1s_tilde - r1s_source_prime > 2.0 * eps_1s {
        Branch::TargetOnlyFallback
    } else {
        Branch::Intersection
    }
}

/// Intermediate outputs consumed by the final stage.
#[derive(Debug, Clone)]
pub struct TransferPieces {
    pub theta_warm: ParamVector,
    pub alpha_hat: f64,
    pub theta_t_prime: ParamVector,
    pub theta_s_prime: ParamVector,
    pub tolerances: Tolerances,
    pub stages: Vec<StageSummary>,
}

/// Final output of the pipeline.
#[derive(Debug, Clone)]
pub struct TransferResult {
    pub theta_hat: ParamVector,
    pub alpha_hat: f64,
    pub branch: Branch,
    pub theta_warm: ParamVector,
    pub theta_t_prime: ParamVector,
    pub theta_s_prime: ParamVector,
    /// `None` when the final solve was infeasible.
    pub theta_tilde: Option<ParamVector>,
    pub tolerances: Tolerances,
    pub stages: Vec<StageSummary>,
    /// `R1S(theta_tilde) - R1S(theta'_S)`.
    pub source_gap: Option<f64>,
    pub final_solve_failure: Option<String>,
}

/// Builds the final constraint, solves it and applies the selection rule.
pub fn final_solve_and_select(
    data: &TrainingData,
    cfg: &TransferConfig,
    pieces: TransferPieces,
) -> Result<TransferResult> {
    let tol = pieces.tolerances;
    let g_alpha = joint_constraint(data, cfg, &pieces.theta_warm, pieces.alpha_hat)?;
    let g_t_prime = make_g1t_hat(
        data.target1.clone(),
        cfg.loss,
        &pieces.theta_t_prime,
        cfg.budgets.eps_1t,
        2.0,
    )?;
    let g_st = max_compose(vec![g_alpha, g_t_prime])?;
    let outcome = solve_stage(
        STAGE_FINAL,
        risk_objective(&data.source1, cfg.loss),
        g_st,
        SearchDomain::ball(data.dim(), cfg.radius),
        tol.xi_st,
        tol.eps_st,
        cfg.r.source_target,
        cfg,
        5,
        None,
    );
    let mut stages = pieces.stages;
    let (theta_hat, theta_tilde, branch, source_gap, failure) = match outcome {
        Ok((res, summary)) => {
            stages.push(summary);
            let tilde = res.theta();
            let gap = empirical_risk(&tilde, &data.source1, &cfg.loss)?
                - empirical_risk(&pieces.theta_s_prime, &data.source1, &cfg.loss)?;
            let branch = select_branch(gap, 0.0, cfg.budgets.eps_1s);
            let hat = match branch {
                Branch::Intersection => tilde.clone(),
                Branch::TargetOnlyFallback => pieces.theta_t_prime.clone(),
            };
            (hat, Some(tilde), branch, Some(gap), None)
        }
        Err(e @ Error::InfeasibleConstraint { .. }) => (
            pieces.theta_t_prime.clone(),
            None,
            Branch::TargetOnlyFallback,
            None,
            Some(e.to_string()),
        ),
        Err(e) => return Err(e.in_stage(STAGE_FINAL, "")),
    };
    Ok(TransferResult {
        theta_hat,
        alpha_hat: pieces.alpha_hat,
        branch,
        theta_warm: pieces.theta_warm,
        theta_t_prime: pieces.theta_t_prime,
        theta_s_prime: pieces.theta_s_prime,
        theta_tilde,
        tolerances: tol,
        stages,
        source_gap,
        final_solve_failure: failure,
    })
}

/// Runs every stage in order.
pub fn run_transfer(data: &TrainingData, cfg: &TransferConfig) -> Result<TransferResult> {
    cfg.validate()?;
    check_sizing(cfg)?;
    let tolerances = tolerance_cascade(&cfg.budgets, cfg);
    let warm = warm_start_target(data, cfg)?;
    let (alpha_hat, alpha_point, alpha_summary) = alpha_hat_stage(data, cfg, &warm.theta)?;
    let (t_prime, s_prime) = solve_subproblems(data, cfg, alpha_hat, &warm.theta, Some(&alpha_point))?;
    let pieces = TransferPieces {
        theta_warm: warm.theta,
        alpha_hat,
        theta_t_prime: t_prime.theta,
        theta_s_prime: s_prime.theta,
        tolerances,
        stages: vec![warm.summary, alpha_summary, t_prime.summary, s_prime.summary],
    };
    final_solve_and_select(data, cfg, pieces)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

/// Key-value manifest of a run: constants, tolerances, seeds, stage counts and branch.
pub fn transfer_manifest(cfg: &TransferConfig, res: &TransferResult) -> Vec<(String, String)> {
    let mut m: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| m.push((k.to_string(), v));
    put("rng", RNG_ALGORITHM.to_string());
    put("seed", cfg.seed.to_string());
    put("alpha", format!("{:?}", cfg.alpha));
    put("delta", format!("{:?}", cfg.delta()));
    put("loss", cfg.loss.kind().name().to_string());
    put("loss_bound", format!("{:?}", cfg.loss.bound()));
    put("radius", format!("{:?}", cfg.radius));
    put("c_tilde", format!("{:?}", cfg.budgets.c_tilde));
    put("eps_0s", format!("{:?}", cfg.budgets.eps_0s));
    put("eps_0t", format!("{:?}", cfg.budgets.eps_0t));
    put("eps_1s", format!("{:?}", cfg.budgets.eps_1s));
    put("eps_1t", format!("{:?}", cfg.budgets.eps_1t));
    put("grad_bound", format!("{:?}", cfg.grad_bound));
    put("smoothness", format!("{:?}", cfg.smoothness));
    put("g_lambda", format!("{:?}", cfg.g_lambda()));
    put("r_target", format!("{:?}", cfg.r.target));
    put("r_alpha_hat", format!("{:?}", cfg.r.alpha_hat));
    put("r_source_prime", format!("{:?}", cfg.r.source_prime));
    put("r_target_prime", format!("{:?}", cfg.r.target_prime));
    put("r_source_target", format!("{:?}", cfg.r.source_target));
    let t = &res.tolerances;
    put("eps_st", format!("{:?}", t.eps_st));
    put("eps_t_prime", format!("{:?}", t.eps_t_prime));
    put("eps_s_prime", format!("{:?}", t.eps_s_prime));
    put("eps_alpha_hat", format!("{:?}", t.eps_alpha_hat));
    put("eps_warm", format!("{:?}", t.eps_warm));
    put("alpha_hat", format!("{:?}", res.alpha_hat));
    put("branch", res.branch.to_string());
    if let Some(gap) = res.source_gap {
        put("source_gap", format!("{gap:?}"));
    }
    if let Some(f) = &res.final_solve_failure {
        put("final_solve_failure", f.clone());
    }
    for s in &res.stages {
        put(&format!("stage.{}.iterations", s.stage), s.iterations.to_string());
        put(&format!("stage.{}.constraint", s.stage), format!("{:?}", s.constraint_value));
        put(&format!("stage.{}.projection", s.stage), format!("{:?}", s.projection_distance));
    }
    put("theta_hat", fmt_vec(res.theta_hat.as_slice()));
    m
}

/// Summary of sampled constraint-gradient norms on the zero boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct REstimate {
    pub min: f64,
    pub p05: f64,
    pub crossings: usize,
}

/// Estimates `r(g)` by bisecting `g = 0` along random rays from a strictly
/// feasible anchor and collecting subgradient norms at the crossings.
pub fn estimate_r<G: StochasticFunction + ?Sized>(
    g: &G,
    anchor: &[f64],
    domain: &SearchDomain,
    rays: usize,
    seed: u64,
) -> Result<REstimate> {
    if anchor.len() != domain.len() {
        return Err(Error::DimensionMismatch {
            expected: domain.len(),
            got: anchor.len(),
        });
    }
    if !(g.eval(anchor) < 0.0) {
        return Err(Error::Config("r estimation needs a strictly feasible anchor".into()));
    }
    let mut rng = seeded(seed);
    let mut norms = Vec::with_capacity(rays);
    let mut grad = vec![0.0; anchor.len()];
    for _ in 0..rays {
        let dir: Vec<f64> = (0..anchor.len()).map(|_| rng.sample(StandardNormal)).collect();
        let t_max = ray_exit(anchor, &dir, domain);
        let at = |t: f64| -> Vec<f64> { anchor.iter().zip(&dir).map(|(a, u)| a + t * u).collect() };
        if !(t_max > 0.0) || g.eval(&at(t_max)) <= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0, t_max);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if g.eval(&at(mid)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        g.subgradient_into(&at(hi), &mut grad);
        norms.push(norm(&grad));
    }
    if norms.is_empty() {
        return Err(Error::Config("no ray crossed the constraint boundary".into()));
    }
    norms.sort_by(f64::total_cmp);
    let idx = ((norms.len() as f64) * 0.05).floor() as usize;
    Ok(REstimate {
        min: norms[0],
        p05: norms[idx.min(norms.len() - 1)],
        crossings: norms.len(),
    })
}

/// Largest `t` keeping `anchor + t * dir` inside the domain.
fn ray_exit(anchor: &[f64], dir: &[f64], domain: &SearchDomain) -> f64 {
    let d = domain.dim;
    let (a, u) = (&anchor[..d], &dir[..d]);
    let uu: f64 = u.iter().map(|x| x * x).sum();
    let au: f64 = a.iter().zip(u).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let mut t = if uu > 0.0 {
        let disc = (au * au - uu * (aa - domain.radius * domain.radius)).max(0.0);
        (-au + disc.sqrt()) / uu
    } else {
        f64::INFINITY
    };
    if let Some((lo, hi)) = domain.alpha_box {
        let (x, v) = (anchor[d], dir[d]);
        if v > 0.0 {
            t = t.min((hi - x) / v);
        } else if v < 0.0 {
            t = t.min((lo - x) / v);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_reference_value() {
        let v = slackness_xi(0.1, 0.5, 1.0, 2.0, 1.0, 0.05);
        let expected = 0.5 * (0.1 / 2.2) / (1.0 + 2.0 * 20f64.ln().sqrt());
        assert!((v - expected).abs() < 1e-16);
        assert!((v - 0.0050939).abs() < 1e-7);
        assert_eq!(slackness_xi(0.1, 0.0, 1.0, 2.0, 1.0, 0.05), 0.0);
        assert_eq!(slackness_xi(0.1, 0.5, 1.0, 2.0, f64::INFINITY, 0.05), 0.0);
    }

    #[test]
    fn selection_rule_branches() {
        assert_eq!(select_branch(0.5, 0.2, 0.1), Branch::TargetOnlyFallback);
        assert_eq!(select_branch(0.2, 0.2, 0.1), Branch::Intersection);
        assert_eq!(select_branch(0.4, 0.2, 0.1), Branch::Intersection);
        assert_eq!("intersection".parse::<Branch>().unwrap(), Branch::Intersection);
    }

    #[test]
    fn ray_exit_hits_sphere_and_box() {
        let d = SearchDomain::ball(2, 2.0);
        assert!((ray_exit(&[0.0, 0.0], &[1.0, 0.0], &d) - 2.0).abs() < 1e-12);
        let j = SearchDomain::ball_with_alpha(1, 5.0, 0.1, 1.0);
        assert!((ray_exit(&[0.0, 0.5], &[0.0, 1.0], &j) - 0.5).abs() < 1e-12);
    }
}
