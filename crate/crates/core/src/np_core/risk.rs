//! Empirical surrogate Type-I / Type-II risks and their gradients.
//!
//! For class-0 samples the per-sample loss is `phi(h(x))`, for class-1 samples
//! it is `phi(-h(x))`, with `h(x) = <theta, x>`.

use super::loss::LossSpec;
use super::samples::{dot, ClassSamples, ParamVector};
use crate::error::{Error, Result};

/// `h_theta(x) = <theta, x>`.
pub fn predict(theta: &ParamVector, x: &[f64]) -> Result<f64> {
    if x.len() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: x.len(),
        });
    }
    Ok(dot(theta.as_slice(), x))
}

fn check_dims(theta: &[f64], samples: &ClassSamples) -> Result<()> {
    if theta.len() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Loss of a single row.
#[inline]
pub(crate) fn sample_loss(theta: &[f64], x: &[f64], sign: f64, loss: &LossSpec) -> f64 {
    loss.value(sign * dot(theta, x))
}

/// Adds the gradient of a single row's loss, scaled by `weight`, into `out`.
#[inline]
pub(crate) fn add_sample_gradient(
    theta: &[f64],
    x: &[f64],
    sign: f64,
    loss: &LossSpec,
    weight: f64,
    out: &mut [f64],
) {
    let d = loss.derivative(sign * dot(theta, x));
    if d != 0.0 {
        let c = weight * sign * d;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += c * xi;
        }
    }
}

/// Mean loss over `samples` on the first `samples.dim()` coordinates of `theta`.
pub(crate) fn mean_loss(theta: &[f64], samples: &ClassSamples, loss: &LossSpec) -> f64 {
    let sign = samples.class().sign();
    let theta = &theta[..samples.dim()];
    let total: f64 = samples.rows().map(|x| sample_loss(theta, x, sign, loss)).sum();
    total / samples.len() as f64
}

/// Gradient of [`mean_loss`] written into `out[..samples.dim()]`.
pub(crate) fn mean_loss_gradient(
    theta: &[f64],
    samples: &ClassSamples,
    loss: &LossSpec,
    out: &mut [f64],
) {
    let sign = samples.class().sign();
    let d = samples.dim();
    let w = 1.0 / samples.len() as f64;
    for x in samples.rows() {
        add_sample_gradient(&theta[..d], x, sign, loss, w, &mut out[..d]);
    }
}

/// Empirical surrogate risk: mean of `phi(h(X))` for class 0, `phi(-h(X))` for class 1.
pub fn empirical_risk(theta: &ParamVector, samples: &ClassSamples, loss: &LossSpec) -> Result<f64> {
    check_dims(theta.as_slice(), samples)?;
    Ok(mean_loss(theta.as_slice(), samples, loss))
}

/// Gradient of [`empirical_risk`] with respect to `theta`.
pub fn risk_gradient(
    theta: &ParamVector,
    samples: &ClassSamples,
    loss: &LossSpec,
) -> Result<Vec<f64>> {
    check_dims(theta.as_slice(), samples)?;
    let mut g = vec![0.0; theta.dim()];
    mean_loss_gradient(theta.as_slice(), samples, loss, &mut g);
    Ok(g)
}

/// Fraction of rows misclassified by the rule `1{h(x) >= 0}` (class 1 predicted).
///
/// For class 0 this is the Type-I error, for class 1 the Type-II error.
pub fn indicator_risk(theta: &[f64], samples: &ClassSamples) -> Result<f64> {
    check_dims(theta, samples)?;
    let wrong = samples
        .rows()
        .filter(|x| {
            let positive = dot(theta, x) >= 0.0;
            match samples.class() {
                super::ClassLabel::Zero => positive,
                super::ClassLabel::One => !positive,
            }
        })
        .count();
    Ok(wrong as f64 / samples.len() as f64)
}
