//! Synthetic Gaussian data, CSV ingestion, splitting, and run records.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::np_core::{ClassLabel, ClassSamples, Domain};
use crate::np_transfer::TrainingData;
use crate::rng::{seeded, RNG_ALGORITHM};

/// Diagonal Gaussian sample specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl GaussianSpec {
    /// Unit-variance Gaussian around `mean`.
    pub fn isotropic(mean: Vec<f64>, n: usize, seed: u64) -> Self {
        let cov_diag = vec![1.0; mean.len()];
        Self {
            mean,
            cov_diag,
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.mean.len() != self.cov_diag.len() {
            return Err(Error::Config(format!(
                "mean and covariance lengths must match and be >= 1: {} vs {}",
                self.mean.len(),
                self.cov_diag.len()
            )));
        }
        if self.cov_diag.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("covariance entries must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("sample count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws `n` rows from the Gaussian. Rows are generated in order from a
/// single stream, so a smaller `n` with the same seed yields a prefix.
pub fn gen_gaussian(spec: &GaussianSpec, class: ClassLabel, domain: Domain) -> Result<ClassSamples> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let sd: Vec<f64> = spec.cov_diag.iter().map(|v| v.sqrt()).collect();
    let d = spec.mean.len();
    let mut data = Vec::with_capacity(spec.n * d);
    for _ in 0..spec.n {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            data.push(spec.mean[j] + sd[j] * z);
        }
    }
    ClassSamples::from_flat(data, d, class, domain)
}

/// Column layout of a labelled CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    pub feature_columns: Vec<String>,
    pub domain: Domain,
}

/// Reads a labelled CSV into class-0 and class-1 samples, preserving row order.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(ClassSamples, ClassSamples)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let label_idx = find(&schema.label_column)?;
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    if feature_idx.is_empty() {
        return Err(Error::Config("CSV schema lists no feature columns".into()));
    }

    let (mut zero, mut one) = (Vec::new(), Vec::new());
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let target = match field(label_idx) {
            "0" => &mut zero,
            "1" => &mut one,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown label `{other}`"),
                })
            }
        };
        for &i in &feature_idx {
            let v: f64 = field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("malformed number `{}` in column `{}`", field(i), &headers[i]),
            })?;
            target.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let d = feature_idx.len();
    Ok((
        ClassSamples::from_flat(zero, d, ClassLabel::Zero, schema.domain)?,
        ClassSamples::from_flat(one, d, ClassLabel::One, schema.domain)?,
    ))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes class-0 then class-1 rows with a header of feature names plus `label`.
pub fn write_csv(
    path: &Path,
    class0: &ClassSamples,
    class1: &ClassSamples,
    feature_names: &[String],
) -> Result<()> {
    if feature_names.len() != class0.dim() || class1.dim() != class0.dim() {
        return Err(Error::DimensionMismatch {
            expected: class0.dim(),
            got: feature_names.len(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (samples, label) in [(class0, "0"), (class1, "1")] {
        for row in samples.rows() {
            let mut rec: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Uniform draw of `n` rows without replacement, in draw order.
pub fn subsample(samples: &ClassSamples, n: usize, seed: u64) -> Result<ClassSamples> {
    if n == 0 || n > samples.len() {
        return Err(Error::Config(format!(
            "cannot subsample {n} of {} rows",
            samples.len()
        )));
    }
    let mut rng = seeded(seed);
    let idx = index::sample(&mut rng, samples.len(), n).into_vec();
    samples.select(&idx)
}

/// Random split into `n_train` training rows and the remaining test rows.
pub fn train_test_split(
    samples: &ClassSamples,
    n_train: usize,
    seed: u64,
) -> Result<(ClassSamples, ClassSamples)> {
    if n_train == 0 || n_train >= samples.len() {
        return Err(Error::Config(format!(
            "training size {n_train} must lie in [1, {})",
            samples.len()
        )));
    }
    let mut rng = seeded(seed);
    let perm = index::sample(&mut rng, samples.len(), samples.len()).into_vec();
    let (train, test) = perm.split_at(n_train);
    let seen: HashSet<usize> = train.iter().copied().collect();
    assert!(test.iter().all(|i| !seen.contains(i)), "train/test overlap");
    Ok((samples.select(train)?, samples.select(test)?))
}

/// Per-column affine standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Column means and standard deviations over all given sets; constant
    /// columns keep unit scale.
    pub fn fit(sets: &[&ClassSamples]) -> Result<Self> {
        let Some(first) = sets.first() else {
            return Err(Error::Config("standardizer needs data".into()));
        };
        let d = first.dim();
        let mut n = 0usize;
        let mut sum = vec![0.0; d];
        for s in sets {
            for row in s.rows() {
                for (a, x) in sum.iter_mut().zip(row) {
                    *a += x;
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut ss = vec![0.0; d];
        for s in sets {
            for row in s.rows() {
                for ((a, x), m) in ss.iter_mut().zip(row).zip(&mean) {
                    *a += (x - m).powi(2);
                }
            }
        }
        let sd = ss
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, s: &ClassSamples) -> Result<ClassSamples> {
        if s.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: s.dim(),
            });
        }
        let data = s
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.sd)
                    .map(|((x, m), sd)| (x - m) / sd)
            })
            .collect();
        ClassSamples::from_flat(data, s.dim(), s.class(), s.domain())
    }
}

/// Training sets plus a held-out target test set.
///
/// The test sets are only reachable through [`DatasetBundle::test0`] and
/// [`DatasetBundle::test1`]; no training entry point accepts a bundle.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    training: TrainingData,
    test0: ClassSamples,
    test1: ClassSamples,
    pub manifest: Vec<(String, String)>,
}

impl DatasetBundle {
    pub fn new(
        training: TrainingData,
        test0: ClassSamples,
        test1: ClassSamples,
        manifest: Vec<(String, String)>,
    ) -> Result<Self> {
        for (s, class) in [(&test0, ClassLabel::Zero), (&test1, ClassLabel::One)] {
            if s.dim() != training.dim() {
                return Err(Error::DimensionMismatch {
                    expected: training.dim(),
                    got: s.dim(),
                });
            }
            if s.class() != class || s.domain() != Domain::Target {
                return Err(Error::Config("test sets must be target-domain class 0 / class 1".into()));
            }
        }
        Ok(Self {
            training,
            test0,
            test1,
            manifest,
        })
    }

    pub fn training(&self) -> &TrainingData {
        &self.training
    }

    pub fn test0(&self) -> &ClassSamples {
        &self.test0
    }

    pub fn test1(&self) -> &ClassSamples {
        &self.test1
    }

    /// Identity of the held-out set.
    pub fn test_id(&self) -> u64 {
        self.test0.fingerprint() ^ self.test1.fingerprint().rotate_left(1)
    }
}

/// Ordered key-value record, written one `key=value` per line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunRecord {
    fields: Vec<(String, String)>,
}

impl RunRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.fields.push((key.into(), value.to_string()));
    }

    pub fn extend(&mut self, pairs: impl IntoIterator<Item = (String, String)>) {
        self.fields.extend(pairs);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.fields {
            if k.is_empty() || k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(Error::Config(format!("unencodable record field `{k}`")));
            }
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i as u64 + 1,
                    message: "expected key=value".into(),
                });
            };
            fields.push((k.to_string(), v.to_string()));
        }
        Ok(Self { fields })
    }
}

/// Writes a record to `path`; the parent directory must exist.
pub fn persist_run(record: &RunRecord, path: &Path) -> Result<()> {
    let text = record.to_text()?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_run(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunRecord::parse(&text)
}

/// Manifest entries describing generated data.
pub fn generation_manifest(specs: &[(&str, &GaussianSpec)]) -> Vec<(String, String)> {
    let mut m = vec![("rng".to_string(), RNG_ALGORITHM.to_string())];
    for (name, s) in specs {
        m.push((format!("{name}.n"), s.n.to_string()));
        m.push((format!("{name}.seed"), s.seed.to_string()));
    }
    m
}
