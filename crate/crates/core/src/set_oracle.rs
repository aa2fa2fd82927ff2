//! Exhaustive set-based selection over a finite hypothesis class.
//!
//! Used as the reference implementation that the solver pipeline is checked
//! against. Every quantity is computed by scanning a table of empirical risks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::np_core::{empirical_risk, LossSpec, ErrorBudgets, ParamVector};
use crate::np_transfer::{Branch, TrainingData};

/// A finite list of linear hypotheses.
#[derive(Debug, Clone)]
pub struct FiniteClass {
    hypotheses: Vec<ParamVector>,
    description: String,
}

impl FiniteClass {
    pub fn new(hypotheses: Vec<ParamVector>, description: impl Into<String>) -> Result<Self> {
        let Some(first) = hypotheses.first() else {
            return Err(Error::Config("finite class needs at least one hypothesis".into()));
        };
        let dim = first.dim();
        if let Some(h) = hypotheses.iter().find(|h| h.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.dim(),
            });
        }
        let mut keys: Vec<Vec<u64>> = hypotheses
            .iter()
            .map(|h| h.as_slice().iter().map(|x| (x + 0.0).to_bits()).collect())
            .collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("finite class contains duplicate hypotheses".into()));
        }
        Ok(Self {
            hypotheses,
            description: description.into(),
        })
    }

    /// Thresholds `h(x) = scale * (x - t)` on rows `(x, 1)`, i.e. `theta = (scale, -scale * t)`.
    pub fn thresholds(ts: &[f64], scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("threshold scale must be > 0, got {scale}")));
        }
        let radius = ts
            .iter()
            .map(|t| scale * t.hypot(1.0))
            .fold(0.0, f64::max);
        let hs = ts
            .iter()
            .map(|t| ParamVector::new(vec![scale, -scale * t], radius))
            .collect::<Result<Vec<_>>>()?;
        Self::new(hs, format!("{} thresholds, scale {scale}", ts.len()))
    }

    /// Points of the square lattice with the given spacing inside the `radius` ball.
    pub fn ball_grid(dim: usize, radius: f64, spacing: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0 && spacing > 0.0) {
            return Err(Error::Config(format!(
                "invalid grid: dim {dim}, radius {radius}, spacing {spacing}"
            )));
        }
        let k = (radius / spacing).floor() as i64;
        let axis: Vec<f64> = (-k..=k).map(|i| i as f64 * spacing).collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            let p: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
            if crate::np_core::norm(&p) <= radius {
                out.push(ParamVector::new(p, radius)?);
            }
            let mut j = 0;
            loop {
                if j == dim {
                    return Self::new(
                        out,
                        format!("lattice in {dim}-ball, radius {radius}, spacing {spacing}"),
                    );
                }
                idx[j] += 1;
                if idx[j] < axis.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[ParamVector] {
        &self.hypotheses
    }

    pub fn get(&self, i: usize) -> &ParamVector {
        &self.hypotheses[i]
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Empirical risks of every hypothesis on the four sample sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub r0s: Vec<f64>,
    pub r0t: Vec<f64>,
    pub r1s: Vec<f64>,
    pub r1t: Vec<f64>,
}

impl RiskTable {
    pub fn new(r0s: Vec<f64>, r0t: Vec<f64>, r1s: Vec<f64>, r1t: Vec<f64>) -> Result<Self> {
        let m = r0s.len();
        if m == 0 || r0t.len() != m || r1s.len() != m || r1t.len() != m {
            return Err(Error::Config(format!(
                "risk table columns must be nonempty and equal: {}, {}, {}, {}",
                m,
                r0t.len(),
                r1s.len(),
                r1t.len()
            )));
        }
        Ok(Self { r0s, r0t, r1s, r1t })
    }

    pub fn len(&self) -> usize {
        self.r0s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r0s.is_empty()
    }
}

/// Tabulates exact empirical risks for all hypotheses.
pub fn tabulate_risks(class: &FiniteClass, data: &TrainingData, loss: &LossSpec) -> Result<RiskTable> {
    let col = |s| {
        class
            .hypotheses()
            .iter()
            .map(|h| empirical_risk(h, s, loss))
            .collect::<Result<Vec<_>>>()
    };
    RiskTable::new(
        col(&data.source0)?,
        col(&data.target0)?,
        col(&data.source1)?,
        col(&data.target1)?,
    )
}

/// Index sets and choice made by [`oracle_procedure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub chosen_index: usize,
    pub alpha_hat_s: f64,
    /// Target ERM at level `alpha`, the reference for the `6 eps_1T` band.
    pub reference_index: usize,
    pub h_star_indices: Vec<usize>,
    pub h_prime_indices: Vec<usize>,
    pub h1s_indices: Vec<usize>,
    pub h1t_indices: Vec<usize>,
    pub branch: Branch,
}

fn argmin_over(idx: &[usize], v: &[f64]) -> usize {
    let mut best = idx[0];
    for &i in idx {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Runs the set-based procedure by exhaustive scan.
///
/// * reference: `argmin R1T` over `{R0T <= alpha}`;
/// * `H*`: `R0T <= alpha + eps_0T` and `R1T <= R1T(ref) + 6 eps_1T`;
/// * `alpha_hat = max(alpha, min over H* of R0S - eps_0S)`;
/// * `H'`: members of `H*` with `R0S - eps_0S <= alpha_hat`;
/// * `H'_1D`: members of `H'` within `2 eps_1D` of the best `R1D` in `H'`;
/// * choice: lowest index of `H'_1S ∩ H'_1T`, else `argmin R1T` over `H'`.
pub fn oracle_procedure(table: &RiskTable, alpha: f64, budgets: &ErrorBudgets) -> Result<OracleOutcome> {
    let m = table.len();
    let feasible: Vec<usize> = (0..m).filter(|&i| table.r0t[i] <= alpha).collect();
    if feasible.is_empty() {
        let best_value = table.r0t.iter().copied().fold(f64::INFINITY, f64::min) - alpha;
        return Err(Error::InfeasibleConstraint {
            best: Vec::new(),
            best_value,
            target: 0.0,
        });
    }
    let reference = argmin_over(&feasible, &table.r1t);
    let band = table.r1t[reference] + 6.0 * budgets.eps_1t;
    let h_star: Vec<usize> = (0..m)
        .filter(|&i| table.r0t[i] <= alpha + budgets.eps_0t && table.r1t[i] <= band)
        .collect();
    let min_src = h_star
        .iter()
        .map(|&i| table.r0s[i] - budgets.eps_0s)
        .fold(f64::INFINITY, f64::min);
    let alpha_hat = alpha.max(min_src);
    if alpha_hat > 1.0 {
        return Err(Error::Domain(format!(
            "no source level in [alpha, 1] is feasible (needs {alpha_hat})"
        )));
    }
    let h_prime: Vec<usize> = h_star
        .iter()
        .copied()
        .filter(|&i| table.r0s[i] - budgets.eps_0s <= alpha_hat)
        .collect();
    let band_set = |v: &[f64], eps: f64| -> Vec<usize> {
        let best = h_prime.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min);
        h_prime
            .iter()
            .copied()
            .filter(|&i| v[i] <= best + 2.0 * eps)
            .collect()
    };
    let h1s = band_set(&table.r1s, budgets.eps_1s);
    let h1t = band_set(&table.r1t, budgets.eps_1t);
    let common = h1s.iter().copied().find(|i| h1t.contains(i));
    let (chosen_index, branch) = match common {
        Some(i) => (i, Branch::Intersection),
        None => (argmin_over(&h_prime, &table.r1t), Branch::TargetOnlyFallback),
    };
    Ok(OracleOutcome {
        chosen_index,
        alpha_hat_s: alpha_hat,
        reference_index: reference,
        h_star_indices: h_star,
        h_prime_indices: h_prime,
        h1s_indices: h1s,
        h1t_indices: h1t,
        branch,
    })
}

/// Threshold `t*` with `P(X >= t*) = alpha` for `X ~ Normal(mean0, sd0)`.
pub fn np_lemma_threshold(mean0: f64, sd0: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let normal = Normal::new(mean0, sd0)
        .map_err(|e| Error::Config(format!("invalid normal ({mean0}, {sd0}): {e}")))?;
    Ok(normal.inverse_cdf(1.0 - alpha))
}

/// Transfer moduli at one `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferModuli {
    pub phi1: f64,
    /// `None` when no hypothesis has `R0S <= eps`.
    pub phi0: Option<f64>,
    pub pivot_index: usize,
}

/// Moduli relative to the pivot: the best-source hypothesis among those
/// feasible at `alpha` in both domains, ties broken toward larger `R1T`.
pub fn transfer_moduli(table: &RiskTable, alpha: f64, eps: f64) -> Result<TransferModuli> {
    let m = table.len();
    let both: Vec<usize> = (0..m)
        .filter(|&i| table.r0s[i] <= alpha && table.r0t[i] <= alpha)
        .collect();
    if both.is_empty() {
        return Err(Error::Domain(format!(
            "no hypothesis is feasible at level {alpha} in both domains"
        )));
    }
    let min_r1s = both.iter().map(|&i| table.r1s[i]).fold(f64::INFINITY, f64::min);
    let mut pivot = None::<usize>;
    for &i in &both {
        if table.r1s[i] == min_r1s && pivot.map_or(true, |p| table.r1t[i] > table.r1t[p]) {
            pivot = Some(i);
        }
    }
    let pivot = pivot.expect("nonempty pivot set");
    let phi1 = (0..m)
        .filter(|&i| table.r1s[i] - table.r1s[pivot] <= eps)
        .map(|i| table.r1t[i] - table.r1t[pivot])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or(0.0);
    let phi0 = (0..m)
        .filter(|&i| table.r0s[i] <= eps)
        .map(|i| table.r0t[i])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    Ok(TransferModuli {
        phi1,
        phi0,
        pivot_index: pivot,
    })
}
