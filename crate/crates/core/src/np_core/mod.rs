//! Losses, hypothesis parameters, sample sets, empirical risks and error budgets.

mod budgets;
mod loss;
mod risk;
mod samples;

pub use budgets::{concentration_constant, make_error_budgets, ErrorBudgets, SampleSizes};
pub use loss::{surrogate_eval, LossKind, LossSpec};
pub use risk::{empirical_risk, indicator_risk, predict, risk_gradient};
pub use samples::{dot, norm, ClassLabel, ClassSamples, Domain, ParamVector};

pub(crate) use risk::{add_sample_gradient, mean_loss, mean_loss_gradient, sample_loss};
