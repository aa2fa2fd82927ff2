//! Surrogate losses.
//!
//! A surrogate `phi` is monotone nondecreasing, normalized by `phi(0) = 1`,
//! `L`-Lipschitz and bounded by `C` over the margins a hypothesis in the
//! parameter ball can reach. Two kinds are provided:
//!
//! * hinge-style: `phi(z) = min(C, max(0, 1 + z))`, `L = 1`;
//! * scaled-logistic: `phi(z) = log(1 + e^z) / log 2`, `L = 1 / log 2`.
//!
//! The hinge clip at `C` is part of the loss definition. For a loss built with
//! [`LossSpec::for_ball`] the clip sits exactly at the largest reachable margin,
//! so the loss stays convex on every margin a parameter in the ball produces.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    HingeStyle,
    ScaledLogistic,
}

impl LossKind {
    /// Unclipped loss value.
    fn raw(self, z: f64) -> f64 {
        match self {
            LossKind::HingeStyle => (1.0 + z).max(0.0),
            LossKind::ScaledLogistic => softplus(z) / LN_2,
        }
    }

    fn lipschitz(self) -> f64 {
        match self {
            LossKind::HingeStyle => 1.0,
            LossKind::ScaledLogistic => 1.0 / LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::HingeStyle => "hinge-style",
            LossKind::ScaledLogistic => "scaled-logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge-style" | "hinge" => Ok(LossKind::HingeStyle),
            "scaled-logistic" | "logistic" => Ok(LossKind::ScaledLogistic),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A surrogate loss with its Lipschitz constant `L` and uniform bound `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    lipschitz: f64,
    bound: f64,
}

impl LossSpec {
    /// Loss of the given kind with a declared bound `C`.
    pub fn new(kind: LossKind, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 1.0) {
            return Err(Error::Config(format!(
                "loss bound C must be finite and >= phi(0) = 1, got {bound}"
            )));
        }
        Ok(Self {
            kind,
            lipschitz: kind.lipschitz(),
            bound,
        })
    }

    /// Loss whose bound is the largest value reachable by `|h(x)| <= radius * feature_norm`.
    pub fn for_ball(kind: LossKind, radius: f64, feature_norm: f64) -> Result<Self> {
        if !(radius > 0.0 && feature_norm >= 0.0) {
            return Err(Error::Config(format!(
                "radius must be > 0 and feature norm >= 0, got {radius}, {feature_norm}"
            )));
        }
        Self::new(kind, kind.raw(radius * feature_norm).max(1.0))
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Lipschitz constant `L`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Uniform bound `C`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Lipschitz constant of `phi'`, when it exists.
    pub fn smoothness(&self) -> Option<f64> {
        match self.kind {
            LossKind::HingeStyle => None,
            LossKind::ScaledLogistic => Some(0.25 / LN_2),
        }
    }

    /// Checks that every margin reachable from the ball stays below `C`.
    ///
    /// A violated bound is a configuration error; the loss is never silently
    /// clipped beyond what its definition already does.
    pub fn check_reach(&self, radius: f64, feature_norm: f64) -> Result<()> {
        let reach = self.kind.raw(radius * feature_norm);
        if reach > self.bound * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "{} loss reaches {reach:.6} at margin {:.6} but C = {:.6}",
                self.kind.name(),
                radius * feature_norm,
                self.bound
            )));
        }
        Ok(())
    }

    /// `phi(z)`, rejecting non-finite input.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::Domain(format!("surrogate evaluated at {z}")));
        }
        Ok(self.value(z))
    }

    /// `phi(z)` without the finiteness check.
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::HingeStyle => (1.0 + z).max(0.0).min(self.bound),
            LossKind::ScaledLogistic => softplus(z) / LN_2,
        }
    }

    /// Derivative of `phi`, with the hinge convention: 0 below the kink and
    /// above the clip, 1 at and above the kink.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::HingeStyle => {
                let u = 1.0 + z;
                if u < 0.0 || u > self.bound {
                    0.0
                } else {
                    1.0
                }
            }
            LossKind::ScaledLogistic => sigmoid(z) / LN_2,
        }
    }
}

/// `phi(z)` for a loss specification.
pub fn surrogate_eval(loss: &LossSpec, z: f64) -> Result<f64> {
    loss.eval(z)
}
