//! Hypothesis parameters and per-(class, domain) sample sets.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inner product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Zero,
    One,
}

impl ClassLabel {
    /// `2y - 1`: the sign applied to the margin inside the loss.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            ClassLabel::Zero => 1.0,
            ClassLabel::One => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "S",
            Domain::Target => "T",
        })
    }
}

/// Parameter `theta` of a linear-in-features hypothesis, with `||theta|| <= radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    theta: Vec<f64>,
    radius: f64,
}

impl ParamVector {
    /// Tolerance on the norm check, relative to the radius.
    const NORM_SLACK: f64 = 1e-12;

    pub fn new(theta: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {radius}")));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        let n = norm(&theta);
        if n > radius * (1.0 + Self::NORM_SLACK) {
            return Err(Error::Config(format!(
                "parameter norm {n} exceeds radius {radius}"
            )));
        }
        Ok(Self { theta, radius })
    }

    /// The origin of `R^dim`.
    pub fn zeros(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    /// Radially projects `theta` onto the ball before wrapping it.
    pub fn projected(theta: Vec<f64>, radius: f64) -> Result<Self> {
        let theta = crate::cp_solver::project_ball(&theta, radius);
        Self::new(theta, radius)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> f64 {
        norm(&self.theta)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }
}

/// Immutable feature vectors drawn from one `(class, domain)` distribution.
///
/// Storage is shared, so clones are cheap and constraints can hold their own
/// handle on the samples they average over.
#[derive(Debug, Clone)]
pub struct ClassSamples {
    data: Arc<[f64]>,
    dim: usize,
    class: ClassLabel,
    domain: Domain,
    intercept: bool,
}

impl ClassSamples {
    /// Builds a sample set from row vectors.
    pub fn new(rows: Vec<Vec<f64>>, class: ClassLabel, domain: Domain) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptySamples(format!("class {class:?}, domain {domain}")));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Config("feature vectors must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, dim, class, domain)
    }

    /// Builds a sample set from row-major storage.
    pub fn from_flat(data: Vec<f64>, dim: usize, class: ClassLabel, domain: Domain) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature vectors must have dimension >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptySamples(format!("class {class:?}, domain {domain}")));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        Ok(Self {
            data: data.into(),
            dim,
            class,
            domain,
            intercept: false,
        })
    }

    /// Copy with a constant-1 feature appended to every row.
    pub fn with_intercept(&self) -> Self {
        let mut data = Vec::with_capacity(self.len() * (self.dim + 1));
        for row in self.rows() {
            data.extend_from_slice(row);
            data.push(1.0);
        }
        Self {
            data: data.into(),
            dim: self.dim + 1,
            class: self.class,
            domain: self.domain,
            intercept: true,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false: construction rejects empty sets.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self) -> ClassLabel {
        self.class
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Whether the last feature is the appended constant 1.
    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Largest Euclidean norm over the rows.
    pub fn max_norm(&self) -> f64 {
        self.rows().map(norm).fold(0.0, f64::max)
    }

    /// Same rows relabelled to another domain or class.
    pub fn relabel(&self, class: ClassLabel, domain: Domain) -> Self {
        Self {
            class,
            domain,
            ..self.clone()
        }
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Config(format!(
                    "row index {i} out of range for {} rows",
                    self.len()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::from_flat(data, self.dim, self.class, self.domain)?;
        out.intercept = self.intercept;
        Ok(out)
    }

    /// FNV-1a digest of the dimension and the bit patterns of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.dim as u64).to_le_bytes());
        for x in self.data.iter() {
            eat(&x.to_bits().to_le_bytes());
        }
        h
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}
