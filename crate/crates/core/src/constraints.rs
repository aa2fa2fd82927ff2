//! Convex constraint family used by the two-stage procedure.
//!
//! Every constraint is an average of per-sample terms `g(theta; zeta)` minus an
//! offset, or a pointwise maximum of such averages:
//!
//! | constructor          | value                                               |
//! |----------------------|-----------------------------------------------------|
//! | [`make_g0t`] (+)     | `R0T(theta) - alpha - eps_0T`                       |
//! | [`make_g0t`] (-)     | `R0T(theta) - alpha + eps_0T` (warm-start form)     |
//! | [`make_g0s_alpha`]   | `R0S(theta) - alpha' - eps_0S`, `alpha'` a variable |
//! | [`make_g0s_fixed`]   | `R0S(theta) - alpha' - eps_0S`, `alpha'` frozen     |
//! | [`make_g1t_hat`]     | `R1(theta) - R1(theta_ref) - k eps_1`               |
//! | [`max_compose`]      | `max` of children                                   |
//!
//! Parameters are plain slices. Constraints on `theta` alone read the first
//! `d` coordinates; the affine-in-alpha constraint also reads coordinate `d`
//! as `alpha'`. Gradients always have the length of the input slice.
//!
//! Stochastic subgradients of a max-composition pick the active child by exact
//! evaluation (ties go to the lowest index) and then draw one sample from it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::np_core::{
    add_sample_gradient, mean_loss, mean_loss_gradient, sample_loss, ClassSamples, LossSpec,
    ParamVector,
};
use crate::rng::SolverRng;

/// A function with exact evaluation and single-sample stochastic (sub)gradients.
pub trait StochasticFunction {
    /// Exact value.
    fn eval(&self, p: &[f64]) -> f64;

    /// Exact subgradient written into `grad` (same length as `p`).
    fn subgradient_into(&self, p: &[f64], grad: &mut [f64]);

    /// Draws one sample, writes its subgradient into `grad`, returns its value.
    fn sample_into(&self, p: &[f64], rng: &mut SolverRng, grad: &mut [f64]) -> f64;

    /// Upper bound on the norm of any single-sample gradient.
    fn gradient_bound(&self) -> f64;

    fn subgradient(&self, p: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; p.len()];
        self.subgradient_into(p, &mut g);
        g
    }

    /// [`sample_into`](Self::sample_into) with state carried across the calls
    /// of one solver run. The result is the same draw.
    fn sample_cached(
        &self,
        p: &[f64],
        rng: &mut SolverRng,
        grad: &mut [f64],
        cache: &mut SelectionCache,
    ) -> f64 {
        let _ = cache;
        self.sample_into(p, rng, grad)
    }
}

/// Active-leaf selection for a max-composition, reused across nearby points.
///
/// Keeps exact leaf values and gradients at an anchor point. From those, each
/// leaf's value at a nearby point lies in an interval: Lipschitz with the
/// gradient bound, and for smooth losses a first-order Taylor estimate with a
/// curvature remainder. When the leader's interval sits strictly above every
/// other interval, exact evaluation would pick the same leaf, so it is skipped.
#[derive(Debug, Clone, Default)]
pub struct SelectionCache {
    anchor: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<f64>,
    lipschitz: Vec<f64>,
    curvature: Vec<Option<f64>>,
    refreshes: usize,
}

impl SelectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of full leaf evaluations so far.
    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    fn first_max(values: &[f64]) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        best
    }

    fn certified_leader(&self, p: &[f64]) -> Option<usize> {
        let len = p.len();
        if self.anchor.len() != len || self.values.is_empty() {
            return None;
        }
        let dist2: f64 = p.iter().zip(&self.anchor).map(|(a, b)| (a - b) * (a - b)).sum();
        let dist = dist2.sqrt();
        let m = self.values.len();
        let mut lo = [0.0; 8];
        let mut hi = [0.0; 8];
        if m > lo.len() {
            return None;
        }
        for j in 0..m {
            let v = self.values[j];
            let lip = self.lipschitz[j] * dist;
            let (mut l, mut h) = (v - lip, v + lip);
            if let Some(c) = self.curvature[j] {
                let g = &self.grads[j * len..(j + 1) * len];
                let lin: f64 = g.iter().zip(p.iter().zip(&self.anchor)).map(|(g, (a, b))| g * (a - b)).sum();
                let rem = 0.5 * c * dist2;
                l = l.max(v + lin - rem);
                h = h.min(v + lin + rem);
            }
            lo[j] = l;
            hi[j] = h;
        }
        let k = Self::first_max(&lo[..m]);
        let safe = (0..m).all(|j| j == k || lo[k] - hi[j] > 1e-12 * (1.0 + lo[k].abs() + hi[j].abs()));
        safe.then_some(k)
    }
}

/// Deterministic `a . p + b`; its "samples" are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunction {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl AffineFunction {
    pub fn new(slope: Vec<f64>, intercept: f64) -> Self {
        Self { slope, intercept }
    }
}

impl StochasticFunction for AffineFunction {
    fn eval(&self, p: &[f64]) -> f64 {
        self.slope.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() + self.intercept
    }

    fn subgradient_into(&self, _p: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        grad[..self.slope.len()].copy_from_slice(&self.slope);
    }

    fn sample_into(&self, p: &[f64], _rng: &mut SolverRng, grad: &mut [f64]) -> f64 {
        self.subgradient_into(p, grad);
        self.eval(p)
    }

    fn gradient_bound(&self) -> f64 {
        crate::np_core::norm(&self.slope)
    }
}

/// An average of `phi(+-h(x))` over one sample set.
#[derive(Debug, Clone)]
pub struct RiskTerm {
    pub samples: ClassSamples,
    pub loss: LossSpec,
}

impl RiskTerm {
    pub fn new(samples: ClassSamples, loss: LossSpec) -> Self {
        Self { samples, loss }
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn risk(&self, p: &[f64]) -> f64 {
        mean_loss(p, &self.samples, &self.loss)
    }

    fn add_gradient(&self, p: &[f64], grad: &mut [f64]) {
        mean_loss_gradient(p, &self.samples, &self.loss, grad);
    }

    /// Draws one row; adds its gradient into `grad` and returns its loss.
    fn sample(&self, p: &[f64], rng: &mut SolverRng, grad: &mut [f64]) -> f64 {
        let i = rng.gen_range(0..self.samples.len());
        let x = self.samples.row(i);
        let d = self.dim();
        let sign = self.samples.class().sign();
        add_sample_gradient(&p[..d], x, sign, &self.loss, 1.0, &mut grad[..d]);
        sample_loss(&p[..d], x, sign, &self.loss)
    }

    fn gradient_bound(&self) -> f64 {
        self.loss.lipschitz() * self.samples.max_norm()
    }
}

/// Objective of a convex program.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Empirical surrogate risk on one sample set.
    Risk(RiskTerm),
    /// `f(p) = p[index]`; used to minimize `alpha'` over `(theta, alpha')`.
    Coordinate(usize),
}

impl StochasticFunction for Objective {
    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Objective::Risk(t) => t.risk(p),
            Objective::Coordinate(i) => p[*i],
        }
    }

    fn subgradient_into(&self, p: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        match self {
            Objective::Risk(t) => t.add_gradient(p, grad),
            Objective::Coordinate(i) => grad[*i] = 1.0,
        }
    }

    fn sample_into(&self, p: &[f64], rng: &mut SolverRng, grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        match self {
            Objective::Risk(t) => t.sample(p, rng, grad),
            Objective::Coordinate(i) => {
                grad[*i] = 1.0;
                p[*i]
            }
        }
    }

    fn gradient_bound(&self) -> f64 {
        match self {
            Objective::Risk(t) => t.gradient_bound(),
            Objective::Coordinate(_) => 1.0,
        }
    }
}

/// Sign of the target Type-I slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tightening {
    /// Offset `alpha + eps`.
    Relaxed,
    /// Offset `alpha - eps`.
    Tightened,
}

/// A convex constraint `g(p) <= 0`.
#[derive(Debug, Clone)]
pub enum ConstraintFn {
    /// `R0T(theta) - offset`.
    Type1Target { term: RiskTerm, offset: f64 },
    /// `R0S(theta) - alpha' - eps` with `alpha'` frozen.
    Type1Source { term: RiskTerm, alpha_prime: f64, eps: f64 },
    /// `R1(theta) - reference_risk - multiplier * eps`; the reference risk is frozen.
    Type2Gap {
        term: RiskTerm,
        reference_risk: f64,
        eps: f64,
        multiplier: f64,
    },
    /// `R0S(theta) - p[d] - eps` where `d` is the feature dimension.
    AffineInAlpha { term: RiskTerm, eps: f64 },
    /// Pointwise maximum of the children.
    MaxOf(Vec<ConstraintFn>),
}

impl ConstraintFn {
    /// Offset subtracted from the mean loss, for the leaf kinds.
    fn offset(&self, p: &[f64]) -> f64 {
        match self {
            ConstraintFn::Type1Target { offset, .. } => *offset,
            ConstraintFn::Type1Source {
                alpha_prime, eps, ..
            } => alpha_prime + eps,
            ConstraintFn::Type2Gap {
                reference_risk,
                eps,
                multiplier,
                ..
            } => reference_risk + multiplier * eps,
            ConstraintFn::AffineInAlpha { term, eps } => p[term.dim()] + eps,
            ConstraintFn::MaxOf(_) => unreachable!("max-composition has no offset"),
        }
    }

    fn term(&self) -> Option<&RiskTerm> {
        match self {
            ConstraintFn::Type1Target { term, .. }
            | ConstraintFn::Type1Source { term, .. }
            | ConstraintFn::Type2Gap { term, .. }
            | ConstraintFn::AffineInAlpha { term, .. } => Some(term),
            ConstraintFn::MaxOf(_) => None,
        }
    }

    /// Children of a max-composition (empty for leaves).
    pub fn children(&self) -> &[ConstraintFn] {
        match self {
            ConstraintFn::MaxOf(c) => c,
            _ => &[],
        }
    }

    /// Index of the child achieving the maximum; lowest index on ties.
    pub fn active_child(&self, p: &[f64]) -> Option<usize> {
        let ConstraintFn::MaxOf(children) = self else {
            return None;
        };
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, c) in children.iter().enumerate() {
            let v = c.eval(p);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        Some(best)
    }

    /// Number of parameter coordinates read: `d`, or `d + 1` with an `alpha'` block.
    pub fn param_len(&self) -> usize {
        match self {
            ConstraintFn::AffineInAlpha { term, .. } => term.dim() + 1,
            ConstraintFn::MaxOf(c) => c.iter().map(|x| x.param_len()).max().unwrap_or(0),
            other => other.term().map(|t| t.dim()).unwrap_or(0),
        }
    }

    /// Bound on `|g(theta; zeta)|` over all samples, for `alpha'` in `[0, 1]`.
    pub fn value_bound(&self) -> f64 {
        match self {
            ConstraintFn::MaxOf(c) => c.iter().map(|x| x.value_bound()).fold(0.0, f64::max),
            ConstraintFn::AffineInAlpha { term, eps } => {
                let c = term.loss.bound();
                (c - eps).abs().max(1.0 + eps)
            }
            leaf => {
                let c = leaf.term().map(|t| t.loss.bound()).unwrap_or(0.0);
                let off = leaf.offset(&[]);
                (c - off).abs().max(off.abs())
            }
        }
    }

    fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a ConstraintFn)) {
        match self {
            ConstraintFn::MaxOf(children) => children.iter().for_each(|c| c.for_each_leaf(f)),
            leaf => f(leaf),
        }
    }

    fn nth_leaf(&self, n: usize) -> &ConstraintFn {
        let mut i = 0;
        let mut found = None;
        self.for_each_leaf(&mut |l| {
            if i == n {
                found = Some(l);
            }
            i += 1;
        });
        found.expect("leaf index in range")
    }

    /// Samples the constraint; see [`stochastic_subgradient`].
    pub fn stochastic_subgradient(&self, p: &[f64], rng: &mut SolverRng) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; p.len()];
        let v = self.sample_into(p, rng, &mut g);
        (v, g)
    }
}

impl StochasticFunction for ConstraintFn {
    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            ConstraintFn::MaxOf(children) => children
                .iter()
                .map(|c| c.eval(p))
                .fold(f64::NEG_INFINITY, f64::max),
            leaf => {
                let t = leaf.term().expect("leaf constraint");
                t.risk(p) - leaf.offset(p)
            }
        }
    }

    fn subgradient_into(&self, p: &[f64], grad: &mut [f64]) {
        match self {
            ConstraintFn::MaxOf(children) => {
                let i = self.active_child(p).expect("nonempty max");
                children[i].subgradient_into(p, grad);
            }
            leaf => {
                grad.fill(0.0);
                let t = leaf.term().expect("leaf constraint");
                t.add_gradient(p, grad);
                if let ConstraintFn::AffineInAlpha { term, .. } = leaf {
                    grad[term.dim()] = -1.0;
                }
            }
        }
    }

    fn sample_into(&self, p: &[f64], rng: &mut SolverRng, grad: &mut [f64]) -> f64 {
        match self {
            ConstraintFn::MaxOf(children) => {
                let i = self.active_child(p).expect("nonempty max");
                children[i].sample_into(p, rng, grad)
            }
            leaf => {
                grad.fill(0.0);
                let t = leaf.term().expect("leaf constraint");
                let v = t.sample(p, rng, grad);
                if let ConstraintFn::AffineInAlpha { term, .. } = leaf {
                    grad[term.dim()] = -1.0;
                }
                v - leaf.offset(p)
            }
        }
    }

    fn sample_cached(
        &self,
        p: &[f64],
        rng: &mut SolverRng,
        grad: &mut [f64],
        cache: &mut SelectionCache,
    ) -> f64 {
        if !matches!(self, ConstraintFn::MaxOf(_)) {
            return self.sample_into(p, rng, grad);
        }
        if cache.lipschitz.is_empty() {
            self.for_each_leaf(&mut |l| {
                cache.lipschitz.push(l.gradient_bound());
                cache.curvature.push(l.term().and_then(|t| {
                    t.loss.smoothness().map(|h| h * t.samples.max_norm().powi(2))
                }));
            });
        }
        // Leaves in depth-first order; the first maximum matches the
        // lowest-index tie rule of nested `active_child` calls.
        let k = match cache.certified_leader(p) {
            Some(k) => k,
            None => {
                cache.values.clear();
                cache.grads.clear();
                let mut g = vec![0.0; p.len()];
                self.for_each_leaf(&mut |l| {
                    cache.values.push(l.eval(p));
                    l.subgradient_into(p, &mut g);
                    cache.grads.extend_from_slice(&g);
                });
                cache.anchor.clear();
                cache.anchor.extend_from_slice(p);
                cache.refreshes += 1;
                SelectionCache::first_max(&cache.values)
            }
        };
        self.nth_leaf(k).sample_into(p, rng, grad)
    }

    fn gradient_bound(&self) -> f64 {
        match self {
            ConstraintFn::MaxOf(c) => c.iter().map(|x| x.gradient_bound()).fold(0.0, f64::max),
            ConstraintFn::AffineInAlpha { term, .. } => term.gradient_bound().hypot(1.0),
            leaf => leaf.term().map(|t| t.gradient_bound()).unwrap_or(0.0),
        }
    }
}

/// One-sample value `g(theta; zeta)` and its subgradient.
///
/// For a max-composition the sample comes from the child that is active under
/// exact evaluation. The expectation over `zeta` equals that child's exact
/// value and subgradient.
pub fn stochastic_subgradient(
    g: &ConstraintFn,
    theta: &[f64],
    rng: &mut SolverRng,
) -> (f64, Vec<f64>) {
    g.stochastic_subgradient(theta, rng)
}

/// Target Type-I constraint `R0T - alpha -+ eps_0T`.
pub fn make_g0t(
    target0: ClassSamples,
    loss: LossSpec,
    alpha: f64,
    eps_0t: f64,
    sign: Tightening,
) -> Result<ConstraintFn> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if eps_0t <= 0.0 {
        return Err(Error::Config(format!("eps_0T must be positive, got {eps_0t}")));
    }
    let offset = match sign {
        Tightening::Relaxed => alpha + eps_0t,
        Tightening::Tightened => {
            let margin = alpha - eps_0t;
            if margin <= 0.0 {
                return Err(Error::Sizing { margin });
            }
            margin
        }
    };
    Ok(ConstraintFn::Type1Target {
        term: RiskTerm::new(target0, loss),
        offset,
    })
}

/// Source Type-I constraint with `alpha'` as the trailing parameter coordinate.
pub fn make_g0s_alpha(source0: ClassSamples, loss: LossSpec, eps_0s: f64) -> ConstraintFn {
    ConstraintFn::AffineInAlpha {
        term: RiskTerm::new(source0, loss),
        eps: eps_0s,
    }
}

/// Source Type-I constraint at a frozen level `alpha'`.
pub fn make_g0s_fixed(
    source0: ClassSamples,
    loss: LossSpec,
    alpha_prime: f64,
    eps_0s: f64,
) -> ConstraintFn {
    ConstraintFn::Type1Source {
        term: RiskTerm::new(source0, loss),
        alpha_prime,
        eps: eps_0s,
    }
}

/// Type-II gap constraint `R1(theta) - R1(theta_ref) - multiplier * eps`.
///
/// The reference risk is computed here, once.
pub fn make_g1t_hat(
    class1: ClassSamples,
    loss: LossSpec,
    theta_ref: &ParamVector,
    eps_1: f64,
    slack_multiplier: f64,
) -> Result<ConstraintFn> {
    if theta_ref.dim() != class1.dim() {
        return Err(Error::DimensionMismatch {
            expected: class1.dim(),
            got: theta_ref.dim(),
        });
    }
    if !(slack_multiplier > 0.0) {
        return Err(Error::Config(format!(
            "slack multiplier must be positive, got {slack_multiplier}"
        )));
    }
    let term = RiskTerm::new(class1, loss);
    let reference_risk = term.risk(theta_ref.as_slice());
    Ok(ConstraintFn::Type2Gap {
        term,
        reference_risk,
        eps: eps_1,
        multiplier: slack_multiplier,
    })
}

/// Pointwise maximum of constraints.
pub fn max_compose(children: Vec<ConstraintFn>) -> Result<ConstraintFn> {
    if children.is_empty() {
        return Err(Error::Config("max-composition needs at least one child".into()));
    }
    Ok(ConstraintFn::MaxOf(children))
}
