//! Statistical error budgets `eps_{i,D} = C~ / sqrt(n_{i,D})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample counts for the four `(class, domain)` sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub n0s: usize,
    pub n0t: usize,
    pub n1s: usize,
    pub n1t: usize,
}

impl SampleSizes {
    pub fn uniform(n: usize) -> Self {
        Self {
            n0s: n,
            n0t: n,
            n1s: n,
            n1t: n,
        }
    }

    fn check(&self) -> Result<()> {
        if [self.n0s, self.n0t, self.n1s, self.n1t].contains(&0) {
            return Err(Error::Config(format!("all sample sizes must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// The constant `C~` and the four tolerances it induces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudgets {
    pub c_tilde: f64,
    pub eps_0s: f64,
    pub eps_0t: f64,
    pub eps_1s: f64,
    pub eps_1t: f64,
    pub delta: f64,
    /// Class-complexity constant; `None` when `C~` was supplied directly.
    pub b_h: Option<f64>,
}

/// `C~ = 8 B_H L + 2 C sqrt(2 log(2/delta))`.
pub fn concentration_constant(b_h: f64, lipschitz: f64, bound: f64, delta: f64) -> f64 {
    8.0 * b_h * lipschitz + 2.0 * bound * (2.0 * (2.0 / delta).ln()).sqrt()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

impl ErrorBudgets {
    /// Budgets from an explicit `C~`, for runs calibrated below the worst-case constant.
    pub fn from_constant(c_tilde: f64, sizes: SampleSizes, delta: f64) -> Result<Self> {
        sizes.check()?;
        check_delta(delta)?;
        if !(c_tilde > 0.0 && c_tilde.is_finite()) {
            return Err(Error::Config(format!("C~ must be positive, got {c_tilde}")));
        }
        let eps = |n: usize| c_tilde / (n as f64).sqrt();
        Ok(Self {
            c_tilde,
            eps_0s: eps(sizes.n0s),
            eps_0t: eps(sizes.n0t),
            eps_1s: eps(sizes.n1s),
            eps_1t: eps(sizes.n1t),
            delta,
            b_h: None,
        })
    }

    pub fn max_eps(&self) -> f64 {
        self.eps_0s.max(self.eps_0t).max(self.eps_1s).max(self.eps_1t)
    }
}

/// Budgets with `C~` computed from the class complexity `B_H`, the loss constants and `delta`.
pub fn make_error_budgets(
    sizes: SampleSizes,
    b_h: f64,
    lipschitz: f64,
    bound: f64,
    delta: f64,
) -> Result<ErrorBudgets> {
    check_delta(delta)?;
    if !(b_h >= 0.0 && lipschitz > 0.0 && bound > 0.0) {
        return Err(Error::Config(format!(
            "need B_H >= 0, L > 0, C > 0; got {b_h}, {lipschitz}, {bound}"
        )));
    }
    let c = concentration_constant(b_h, lipschitz, bound, delta);
    let mut b = ErrorBudgets::from_constant(c, sizes, delta)?;
    b.b_h = Some(b_h);
    Ok(b)
}
