//! Stochastic primal-dual solver for `min f(theta) s.t. g(theta) <= 0` over a ball.
//!
//! Each iteration draws one sample for the objective and one for the
//! constraint, takes a projected gradient step on the Lagrangian
//! `f + lambda * g`, and a regularized ascent step on the multiplier:
//!
//! ```text
//! theta <- Proj_B(theta - eta * (grad f(theta; zf) + lambda * grad g(theta; zg)))
//! lambda <- max(0, (1 - gamma * eta) * lambda + eta * g(theta; zg))
//! ```
//!
//! with `eta = c_eta / sqrt(N)` and `gamma = G^2 * eta`. The average of the
//! iterates is then retracted onto `{g <= -xi}`: a Polyak-step feasibility
//! probe finds an anchor inside the set and bisection along the segment from
//! the anchor to the average finds the boundary crossing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constraints::{SelectionCache, StochasticFunction};
use crate::error::{Error, Result};
use crate::np_core::{norm, ParamVector};
use crate::rng::seeded;

/// Iteration budget of the feasibility probe.
pub const PROBE_ITERATIONS: usize = 500;
/// Width, in constraint value, at which the boundary bisection stops.
pub const PROJECTION_TOLERANCE: f64 = 1e-9;

/// Radially scales `theta` onto the ball of radius `radius`.
pub fn project_ball(theta: &[f64], radius: f64) -> Vec<f64> {
    let mut out = theta.to_vec();
    project_ball_in_place(&mut out, radius);
    out
}

fn project_ball_in_place(theta: &mut [f64], radius: f64) {
    let n = norm(theta);
    let scale = (n / radius).max(1.0);
    if scale > 1.0 {
        for x in theta.iter_mut() {
            *x /= scale;
        }
    }
}

/// Feasible region of the solver: a ball on the first `dim` coordinates,
/// optionally followed by one box-constrained `alpha'` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    pub dim: usize,
    pub radius: f64,
    pub alpha_box: Option<(f64, f64)>,
}

impl SearchDomain {
    pub fn ball(dim: usize, radius: f64) -> Self {
        Self {
            dim,
            radius,
            alpha_box: None,
        }
    }

    /// Ball in `theta` times `[lo, hi]` in `alpha'`.
    pub fn ball_with_alpha(dim: usize, radius: f64, lo: f64, hi: f64) -> Self {
        Self {
            dim,
            radius,
            alpha_box: Some((lo, hi)),
        }
    }

    /// Total number of coordinates.
    pub fn len(&self) -> usize {
        self.dim + usize::from(self.alpha_box.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ball projection on the `theta` block, clamp on the `alpha'` coordinate.
    pub fn project(&self, p: &mut [f64]) {
        project_ball_in_place(&mut p[..self.dim], self.radius);
        if let Some((lo, hi)) = self.alpha_box {
            p[self.dim] = p[self.dim].clamp(lo, hi);
        }
    }

    /// Starting point: the origin, projected.
    pub fn origin(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        self.project(&mut p);
        p
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) || self.dim == 0 {
            return Err(Error::Config(format!("invalid search domain {self:?}")));
        }
        if let Some((lo, hi)) = self.alpha_box {
            if !(lo <= hi) {
                return Err(Error::Config(format!("empty alpha box [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// `max(0, (1 - gamma * eta) * lambda + eta * g_sample)`.
pub fn dual_update(lambda: f64, gamma: f64, eta: f64, g_sample: f64) -> Result<f64> {
    let shrink = gamma * eta;
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::Config(format!(
            "dual regularization requires 0 < gamma * eta < 1, got {shrink}"
        )));
    }
    Ok(((1.0 - shrink) * lambda + eta * g_sample).max(0.0))
}

/// Result of [`project_constraint`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub value: f64,
    pub distance: f64,
}

/// Retracts `theta_bar` onto `{p in domain : g(p) <= -xi}`.
///
/// Returns `theta_bar` unchanged when it already satisfies the constraint.
/// Otherwise a projected Polyak-step probe looks for an anchor with
/// `g <= -xi`, and bisection along `[anchor, theta_bar]` stops within
/// [`PROJECTION_TOLERANCE`] of the boundary on the feasible side.
pub fn project_constraint<G: StochasticFunction + ?Sized>(
    theta_bar: &[f64],
    g: &G,
    xi: f64,
    domain: &SearchDomain,
) -> Result<Projection> {
    let target = -xi;
    let v0 = g.eval(theta_bar);
    if v0 <= target {
        return Ok(Projection {
            point: theta_bar.to_vec(),
            value: v0,
            distance: 0.0,
        });
    }

    let anchor = feasibility_probe(theta_bar, v0, g, target, domain)?;
    Ok(bisect_segment(&anchor, theta_bar, v0, g, target))
}

/// Retraction toward a known anchor with `g(anchor) <= -xi`.
pub fn project_toward<G: StochasticFunction + ?Sized>(
    theta_bar: &[f64],
    g: &G,
    xi: f64,
    anchor: &[f64],
) -> Result<Projection> {
    let target = -xi;
    let v0 = g.eval(theta_bar);
    if v0 <= target {
        return Ok(Projection {
            point: theta_bar.to_vec(),
            value: v0,
            distance: 0.0,
        });
    }
    let va = g.eval(anchor);
    if !(va <= target) {
        return Err(Error::InfeasibleConstraint {
            best: anchor.to_vec(),
            best_value: va,
            target,
        });
    }
    Ok(bisect_segment(anchor, theta_bar, v0, g, target))
}

/// Boundary point on `[anchor, theta_bar]`, where `g(anchor) <= target < g(theta_bar) = v0`.
fn bisect_segment<G: StochasticFunction + ?Sized>(
    anchor: &[f64],
    theta_bar: &[f64],
    v0: f64,
    g: &G,
    target: f64,
) -> Projection {
    // g(lo) <= target < g(hi) along the segment.
    let point_at = |t: f64| -> Vec<f64> {
        anchor
            .iter()
            .zip(theta_bar)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut g_lo = g.eval(anchor);
    let mut g_hi = v0;
    for _ in 0..200 {
        if g_hi - g_lo <= PROJECTION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g.eval(&point_at(mid));
        if v <= target {
            lo = mid;
            g_lo = v;
        } else {
            hi = mid;
            g_hi = v;
        }
    }
    let point = point_at(lo);
    let distance = norm(
        &point
            .iter()
            .zip(theta_bar)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Projection {
        point,
        value: g_lo,
        distance,
    }
}

fn feasibility_probe<G: StochasticFunction + ?Sized>(
    start: &[f64],
    start_value: f64,
    g: &G,
    target: f64,
    domain: &SearchDomain,
) -> Result<Vec<f64>> {
    let mut p = start.to_vec();
    let mut v = start_value;
    let mut best = p.clone();
    let mut best_value = v;
    let mut grad = vec![0.0; p.len()];
    for _ in 0..PROBE_ITERATIONS {
        g.subgradient_into(&p, &mut grad);
        let gn2: f64 = grad.iter().map(|x| x * x).sum();
        if gn2 == 0.0 {
            break;
        }
        // Polyak step toward a level slightly below the target. The floor on
        // the overshoot stops the probe from stalling at a kink of a max.
        let level = target - (0.25 * (v - target)).max(PROJECTION_TOLERANCE);
        let step = (v - level) / gn2;
        for (x, d) in p.iter_mut().zip(&grad) {
            *x -= step * d;
        }
        domain.project(&mut p);
        v = g.eval(&p);
        if v < best_value {
            best_value = v;
            best.clone_from(&p);
        }
        if v <= target {
            return Ok(p);
        }
    }
    Err(Error::InfeasibleConstraint {
        best,
        best_value,
        target,
    })
}

/// Tuning constants shared by every solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverSettings {
    /// `c_eta`; defaults to `rho / (12 sqrt(6) C_g sqrt(log(2/delta)))`.
    pub step_constant: Option<f64>,
    /// `K_N` in `N = ceil(K_N / eps^2)`; defaults to `400 (G + C_g)^2 rho^2`.
    pub k_n: Option<f64>,
    /// Hard cap on `N`.
    pub max_iterations: Option<usize>,
}

impl SolverSettings {
    pub fn default_step_constant(rho: f64, c_g: f64, delta: f64) -> f64 {
        rho / (12.0 * 6f64.sqrt() * c_g * (2.0 / delta).ln().sqrt())
    }

    pub fn default_k_n(grad_bound: f64, c_g: f64, rho_sq: f64) -> f64 {
        400.0 * (grad_bound + c_g).powi(2) * rho_sq
    }

    pub fn step_constant(&self, rho: f64, c_g: f64, delta: f64) -> f64 {
        self.step_constant
            .unwrap_or_else(|| Self::default_step_constant(rho, c_g, delta))
    }

    /// `N(eps)`, after the cap.
    pub fn iterations(&self, eps: f64, grad_bound: f64, c_g: f64, rho_sq: f64) -> usize {
        let k = self
            .k_n
            .unwrap_or_else(|| Self::default_k_n(grad_bound, c_g, rho_sq));
        let n = (k / (eps * eps)).ceil();
        let n = if n.is_finite() && n < usize::MAX as f64 {
            (n as usize).max(1)
        } else {
            usize::MAX
        };
        match self.max_iterations {
            Some(cap) => n.min(cap.max(1)),
            None => n,
        }
    }
}

/// One convex program handed to [`cp_solve`].
#[derive(Debug, Clone)]
pub struct CpProblem<F, G> {
    pub objective: F,
    pub constraint: G,
    pub domain: SearchDomain,
    /// Slack of the final retraction, `g <= -xi`.
    pub xi: f64,
    /// Target accuracy.
    pub eps: f64,
    pub delta: f64,
    /// `c_eta`.
    pub step_constant: f64,
    /// `N`.
    pub iterations: usize,
    /// `G`, bound on single-sample gradient norms.
    pub grad_bound: f64,
    pub seed: u64,
    /// Retraction used when the probe cannot reach `g <= -xi`.
    pub fallback: Option<Fallback>,
}

/// Known point with `g(anchor) <= -xi`; the retraction bisects toward it at slack `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fallback {
    pub anchor: Vec<f64>,
    pub xi: f64,
}

impl<F: StochasticFunction, G: StochasticFunction> CpProblem<F, G> {
    /// Fills in `G`, `c_eta` and `N` from the functions and the settings.
    ///
    /// `r` is the lower bound on the constraint subgradient norm along its
    /// boundary; it enters through `rho^2 = B^2 + G^2 / r^2`.
    #[allow(clippy::too_many_arguments)]
    pub fn configured(
        objective: F,
        constraint: G,
        domain: SearchDomain,
        xi: f64,
        eps: f64,
        delta: f64,
        r: f64,
        c_g: f64,
        settings: &SolverSettings,
        seed: u64,
    ) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Config(format!("constraint gradient bound r must be > 0, got {r}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("target accuracy must be > 0, got {eps}")));
        }
        let grad_bound = objective.gradient_bound().max(constraint.gradient_bound());
        let rho_sq = domain.radius * domain.radius + grad_bound * grad_bound / (r * r);
        let step_constant = settings.step_constant(rho_sq.sqrt(), c_g, delta);
        let iterations = settings.iterations(eps, grad_bound, c_g, rho_sq);
        Ok(Self {
            objective,
            constraint,
            domain,
            xi,
            eps,
            delta,
            step_constant,
            iterations,
            grad_bound,
            seed,
            fallback: None,
        })
    }
}

impl<F, G> CpProblem<F, G> {
    /// `eta = c_eta / sqrt(N)`.
    pub fn step_size(&self) -> f64 {
        self.step_constant / (self.iterations as f64).sqrt()
    }

    /// `gamma = G^2 * eta`.
    pub fn dual_regularization(&self) -> f64 {
        self.grad_bound * self.grad_bound * self.step_size()
    }

    /// `rho^2 = B^2 + G^2 / r^2`.
    pub fn rho_squared(&self, r: f64) -> f64 {
        self.domain.radius.powi(2) + self.grad_bound.powi(2) / (r * r)
    }

    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iteration count N must be >= 1".into()));
        }
        if !(self.xi >= 0.0) {
            return Err(Error::Config(format!("slack xi must be >= 0, got {}", self.xi)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.step_constant > 0.0 && self.grad_bound > 0.0) {
            return Err(Error::Config(format!(
                "need c_eta > 0 and G > 0, got {} and {}",
                self.step_constant, self.grad_bound
            )));
        }
        Ok(())
    }
}

/// Output of [`cp_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CpResult {
    /// Retracted average; includes the `alpha'` coordinate when present.
    pub theta_hat: Vec<f64>,
    pub averaged_theta: Vec<f64>,
    pub lambda_final: f64,
    pub lambda_max: f64,
    pub objective_value: f64,
    pub constraint_value: f64,
    pub projection_distance: f64,
    /// Slack actually enforced; the fallback slack when the fallback ran.
    pub xi: f64,
    pub iterations: usize,
    pub dim: usize,
    pub radius: f64,
}

impl CpResult {
    /// The `theta` block as a parameter vector.
    pub fn theta(&self) -> ParamVector {
        ParamVector::projected(self.theta_hat[..self.dim].to_vec(), self.radius)
            .expect("solver output is finite")
    }

    /// The `alpha'` coordinate, for joint problems.
    pub fn alpha_coordinate(&self) -> Option<f64> {
        self.theta_hat.get(self.dim).copied()
    }
}

/// One line of the optional iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective_sample: f64,
    pub constraint_sample: f64,
    pub lambda: f64,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "iteration={} objective={} constraint={} lambda={}",
            self.iteration, self.objective_sample, self.constraint_sample, self.lambda
        )
    }
}

/// Receiver of trace records.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) {
        self.push(*rec);
    }
}

/// Writes every `every`-th record as a line to `W`.
pub struct LineTrace<W: Write> {
    writer: W,
    every: usize,
    pub error: Option<std::io::Error>,
}

impl<W: Write> LineTrace<W> {
    pub fn new(writer: W, every: usize) -> Self {
        Self {
            writer,
            every: every.max(1),
            error: None,
        }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> TraceSink for LineTrace<W> {
    fn record(&mut self, rec: &TraceRecord) {
        if self.error.is_some() || rec.iteration % self.every != 0 {
            return;
        }
        if let Err(e) = writeln!(self.writer, "{}", rec.to_line()) {
            self.error = Some(e);
        }
    }
}

/// Runs the solver; see the module documentation.
pub fn cp_solve<F, G>(problem: &CpProblem<F, G>) -> Result<CpResult>
where
    F: StochasticFunction,
    G: StochasticFunction,
{
    cp_solve_traced(problem, None)
}

/// [`cp_solve`] with an optional trace sink.
pub fn cp_solve_traced<F, G>(
    problem: &CpProblem<F, G>,
    mut trace: Option<&mut dyn TraceSink>,
) -> Result<CpResult>
where
    F: StochasticFunction,
    G: StochasticFunction,
{
    problem.validate()?;
    let domain = &problem.domain;
    let len = domain.len();
    let eta = problem.step_size();
    let gamma = problem.dual_regularization();
    // Validates 0 < gamma * eta < 1 before the loop.
    dual_update(0.0, gamma, eta, 0.0)?;
    let shrink = 1.0 - gamma * eta;

    let mut rng = seeded(problem.seed);
    let mut selection = SelectionCache::new();
    let mut theta = domain.origin();
    let mut lambda = 0.0_f64;
    let mut lambda_max = 0.0_f64;
    let mut grad_f = vec![0.0; len];
    let mut grad_g = vec![0.0; len];
    let mut sum = vec![0.0; len];

    for t in 0..problem.iterations {
        let f_sample = problem.objective.sample_into(&theta, &mut rng, &mut grad_f);
        let g_sample = problem
            .constraint
            .sample_cached(&theta, &mut rng, &mut grad_g, &mut selection);
        for ((x, gf), gg) in theta.iter_mut().zip(&grad_f).zip(&grad_g) {
            *x -= eta * (gf + lambda * gg);
        }
        domain.project(&mut theta);
        lambda = (shrink * lambda + eta * g_sample).max(0.0);

        if !lambda.is_finite() || theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical {
                iteration: t,
                what: "non-finite iterate".into(),
            });
        }
        debug_assert!(norm(&theta[..domain.dim]) <= domain.radius * (1.0 + 1e-12));
        debug_assert!(lambda >= 0.0);

        lambda_max = lambda_max.max(lambda);
        for (s, x) in sum.iter_mut().zip(&theta) {
            *s += x;
        }
        if let Some(sink) = trace.as_deref_mut() {
            sink.record(&TraceRecord {
                iteration: t + 1,
                objective_sample: f_sample,
                constraint_sample: g_sample,
                lambda,
            });
        }
    }

    let n = problem.iterations as f64;
    let mut averaged: Vec<f64> = sum.iter().map(|s| s / n).collect();
    // Averages of points in a convex set stay inside up to rounding.
    domain.project(&mut averaged);

    let (proj, xi) = match (project_constraint(&averaged, &problem.constraint, problem.xi, domain), &problem.fallback) {
        (Ok(p), _) => (p, problem.xi),
        (Err(Error::InfeasibleConstraint { .. }), Some(fb)) => {
            (project_toward(&averaged, &problem.constraint, fb.xi, &fb.anchor)?, fb.xi)
        }
        (Err(e), _) => return Err(e),
    };
    Ok(CpResult {
        xi,
        objective_value: problem.objective.eval(&proj.point),
        constraint_value: proj.value,
        projection_distance: proj.distance,
        theta_hat: proj.point,
        averaged_theta: averaged,
        lambda_final: lambda,
        lambda_max,
        iterations: problem.iterations,
        dim: domain.dim,
        radius: domain.radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::AffineFunction;

    #[test]
    fn ball_projection_examples() {
        assert_eq!(project_ball(&[3.0, 4.0], 1.0), vec![0.6, 0.8]);
        assert_eq!(project_ball(&[0.1, 0.0], 1.0), vec![0.1, 0.0]);
        assert_eq!(project_ball(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn dual_update_examples() {
        assert_eq!(dual_update(0.0, 0.01, 0.1, -0.5).unwrap(), 0.0);
        // gamma * eta = 0.001 with eta = 0.1.
        assert!((dual_update(1.0, 0.01, 0.1, 0.0).unwrap() - 0.999).abs() < 1e-15);
        assert!((dual_update(0.0, 0.01, 0.1, 0.5).unwrap() - 0.05).abs() < 1e-15);
        assert!(dual_update(1.0, 10.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn projection_no_op_when_feasible() {
        let g = AffineFunction::new(vec![1.0, 0.0], -0.5);
        let d = SearchDomain::ball(2, 10.0);
        let p = project_constraint(&[0.2, 3.0], &g, 0.0, &d).unwrap();
        assert_eq!(p.point, vec![0.2, 3.0]);
        assert_eq!(p.distance, 0.0);
    }

    #[test]
    fn projection_onto_halfspace() {
        let g = AffineFunction::new(vec![1.0, 0.0], -0.5);
        let d = SearchDomain::ball(2, 10.0);
        let p = project_constraint(&[1.0, 0.0], &g, 0.0, &d).unwrap();
        assert!((p.point[0] - 0.5).abs() < 1e-6, "{:?}", p.point);
        assert!(p.point[1].abs() < 1e-12);
        assert!(g.eval(&p.point) <= PROJECTION_TOLERANCE);
    }

    #[test]
    fn projection_reports_infeasible() {
        // theta_1 >= 5 inside a unit ball is empty.
        let g = AffineFunction::new(vec![-1.0], 5.0);
        let d = SearchDomain::ball(1, 1.0);
        match project_constraint(&[0.0], &g, 0.0, &d) {
            Err(Error::InfeasibleConstraint { best, best_value, .. }) => {
                assert!((best[0] - 1.0).abs() < 1e-12);
                assert!((best_value - 4.0).abs() < 1e-12);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn settings_iteration_count() {
        let s = SolverSettings {
            k_n: Some(4.0),
            ..Default::default()
        };
        assert_eq!(s.iterations(0.1, 1.0, 1.0, 1.0), 400);
        let capped = SolverSettings {
            max_iterations: Some(100),
            ..s
        };
        assert_eq!(capped.iterations(0.1, 1.0, 1.0, 1.0), 100);
        // Default K_N = 400 (G + C_g)^2 rho^2.
        let d = SolverSettings::default();
        assert_eq!(d.iterations(1.0, 1.0, 1.0, 2.0), 3200);
    }

    #[test]
    fn zero_iterations_rejected() {
        let p = CpProblem {
            objective: AffineFunction::new(vec![-1.0], 0.0),
            constraint: AffineFunction::new(vec![1.0], -0.5),
            domain: SearchDomain::ball(1, 1.0),
            xi: 0.0,
            eps: 0.1,
            delta: 0.05,
            step_constant: 0.1,
            iterations: 0,
            grad_bound: 1.0,
            seed: 0,
            fallback: None,
        };
        assert!(matches!(cp_solve(&p), Err(Error::Config(_))));
    }

    #[test]
    fn single_step_reproducible() {
        let p = CpProblem {
            objective: AffineFunction::new(vec![-1.0], 0.0),
            constraint: AffineFunction::new(vec![1.0], -0.5),
            domain: SearchDomain::ball(1, 1.0),
            xi: 0.0,
            eps: 0.1,
            delta: 0.05,
            step_constant: 0.3,
            iterations: 1,
            grad_bound: 1.0,
            seed: 9,
            fallback: None,
        };
        let a = cp_solve(&p).unwrap();
        let b = cp_solve(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.theta_hat, vec![0.3]);
        assert_eq!(a.lambda_final, 0.0);
    }

    #[test]
    fn trace_lines() {
        let p = CpProblem {
            objective: AffineFunction::new(vec![-1.0], 0.0),
            constraint: AffineFunction::new(vec![1.0], -0.5),
            domain: SearchDomain::ball(1, 1.0),
            xi: 0.0,
            eps: 0.1,
            delta: 0.05,
            step_constant: 0.3,
            iterations: 10,
            grad_bound: 1.0,
            seed: 9,
            fallback: None,
        };
        let mut sink = LineTrace::new(Vec::new(), 5);
        cp_solve_traced(&p, Some(&mut sink)).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("iteration=5 "));
    }
}
