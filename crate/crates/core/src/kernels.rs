//! Kernel functions, Gram matrices and kernel vectors.
//!
//! The RBF kernel is `exp(-bandwidth * ||a - b||)` on the plain Euclidean
//! norm; `squared: true` switches to `exp(-bandwidth * ||a - b||^2)`.
//!
//! A precomputed kernel treats each sample as a one-element row holding an
//! integer index into the stored matrix, so `k([i], [j]) = M[i][j]`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::rng::{stream, SeededStream};

const MEDIAN_MAX_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Rbf { bandwidth: f64, squared: bool },
    Linear,
    Precomputed(Arc<DMatrix<f64>>),
    WeightedSum(Vec<(f64, KernelSpec)>),
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth,
            squared: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { bandwidth, .. } => {
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "RBF bandwidth must be positive, got {bandwidth}"
                    )));
                }
            }
            KernelSpec::Linear => {}
            KernelSpec::Precomputed(m) => {
                if m.nrows() != m.ncols() {
                    return Err(Error::ShapeMismatch("precomputed kernel is not square".into()));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue("precomputed kernel".into()));
                }
            }
            KernelSpec::WeightedSum(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidParameter("weighted sum has no components".into()));
                }
                if parts.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidParameter("kernel weights must be >= 0".into()));
                }
                if !parts.iter().any(|(w, _)| *w > 0.0) {
                    return Err(Error::InvalidParameter(
                        "weighted sum needs a strictly positive weight".into(),
                    ));
                }
                for (_, k) in parts {
                    k.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Kernel value. Inputs must already be validated against the spec.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Rbf { bandwidth, squared } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if *squared {
                    (-bandwidth * d2).exp()
                } else {
                    (-bandwidth * d2.sqrt()).exp()
                }
            }
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Precomputed(m) => m[(a[0] as usize, b[0] as usize)],
            KernelSpec::WeightedSum(parts) => parts.iter().map(|(w, k)| w * k.eval(a, b)).sum(),
        }
    }

    fn check_samples(&self, samples: &Samples) -> Result<()> {
        match self {
            KernelSpec::Precomputed(m) => {
                if samples.cols() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        actual: samples.cols(),
                    });
                }
                for row in samples.iter_rows() {
                    check_index(row[0], m.nrows())?;
                }
                Ok(())
            }
            KernelSpec::WeightedSum(parts) => {
                for (_, k) in parts {
                    k.check_samples(samples)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        match self {
            KernelSpec::Precomputed(m) => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        actual: x.len(),
                    });
                }
                check_index(x[0], m.nrows())
            }
            KernelSpec::WeightedSum(parts) => parts.iter().try_for_each(|(_, k)| k.check_point(x)),
            _ => Ok(()),
        }
    }
}

fn check_index(v: f64, n: usize) -> Result<()> {
    if v < 0.0 || v.fract() != 0.0 || v as usize >= n {
        return Err(Error::InvalidParameter(format!(
            "`{v}` is not an index into a {n}x{n} precomputed kernel"
        )));
    }
    Ok(())
}

/// Symmetric Gram matrix over one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    gram: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn from_matrix(gram: DMatrix<f64>) -> Result<Self> {
        if gram.nrows() != gram.ncols() {
            return Err(Error::ShapeMismatch("Gram matrix is not square".into()));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("Gram matrix".into()));
        }
        for i in 0..gram.nrows() {
            for j in 0..i {
                if gram[(i, j)] != gram[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "Gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { gram })
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.gram
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gram[(i, j)]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.gram.diagonal()
    }
}

pub fn gram(spec: &KernelSpec, samples: &Samples) -> Result<KernelMatrix> {
    spec.validate()?;
    if samples.rows() == 0 {
        return Err(Error::EmptyInput("samples".into()));
    }
    if !samples.is_finite() {
        return Err(Error::NonFiniteValue("samples".into()));
    }
    spec.check_samples(samples)?;
    let n = samples.rows();
    // Upper triangle only, mirrored, so symmetry is exact.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = samples.row(i);
            (i..n).map(|j| spec.eval(xi, samples.row(j))).collect()
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    Ok(KernelMatrix { gram: g })
}

/// `values[i] = k(x_star, samples[i])`, with a trailing 1 when `append_bias`.
pub fn kernel_vector(
    spec: &KernelSpec,
    samples: &Samples,
    x_star: &[f64],
    append_bias: bool,
) -> Result<DVector<f64>> {
    if x_star.len() != samples.cols() {
        return Err(Error::DimensionMismatch {
            expected: samples.cols(),
            actual: x_star.len(),
        });
    }
    spec.check_point(x_star)?;
    let n = samples.rows();
    let len = if append_bias { n + 1 } else { n };
    let mut v = DVector::zeros(len);
    for i in 0..n {
        v[i] = spec.eval(x_star, samples.row(i));
    }
    if append_bias {
        v[n] = 1.0;
    }
    Ok(v)
}

/// Kernel vectors of many points, one per column: `(N + 1) x points` with
/// the bias row last. With `points == samples` this is the matrix whose
/// column `j` is `k(x_j)`.
pub fn kernel_columns(spec: &KernelSpec, samples: &Samples, points: &Samples) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if points.cols() != samples.cols() {
        return Err(Error::DimensionMismatch {
            expected: samples.cols(),
            actual: points.cols(),
        });
    }
    if !points.is_finite() || !samples.is_finite() {
        return Err(Error::NonFiniteValue("samples".into()));
    }
    spec.check_samples(samples)?;
    spec.check_samples(points)?;
    let n = samples.rows();
    let cols: Vec<Vec<f64>> = (0..points.rows())
        .into_par_iter()
        .map(|j| {
            let x = points.row(j);
            let mut c: Vec<f64> = (0..n).map(|i| spec.eval(x, samples.row(i))).collect();
            c.push(1.0);
            c
        })
        .collect();
    let mut out = DMatrix::zeros(n + 1, points.rows());
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).copy_from_slice(c);
    }
    Ok(out)
}

/// Reciprocal of the median pairwise Euclidean distance. Uses all pairs when
/// there are at most 10^4 of them, otherwise 10^4 seeded random pairs. If
/// more than half the distances are zero, the median of the positive ones is
/// used instead.
pub fn median_bandwidth(samples: &Samples, seed: u64) -> Result<f64> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::EmptyInput("need at least 2 samples for a bandwidth".into()));
    }
    let dist = |i: usize, j: usize| -> f64 {
        samples
            .row(i)
            .iter()
            .zip(samples.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let total = n * (n - 1) / 2;
    let mut d: Vec<f64> = if total <= MEDIAN_MAX_PAIRS {
        let mut d = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                d.push(dist(i, j));
            }
        }
        d
    } else {
        let mut rng = SeededStream::new(seed, stream::BANDWIDTH);
        (0..MEDIAN_MAX_PAIRS)
            .map(|_| {
                let i = rng.index(n);
                let mut j = rng.index(n - 1);
                if j >= i {
                    j += 1;
                }
                dist(i, j)
            })
            .collect()
    };
    let mut m = median(&mut d);
    if m == 0.0 {
        d.retain(|&v| v > 0.0);
        if d.is_empty() {
            return Err(Error::DegenerateSamples);
        }
        m = median(&mut d);
    }
    Ok(1.0 / m)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Serializable kernel description; `bandwidth: null` means the median
/// heuristic, resolved on the training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelConfig {
    Rbf {
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default)]
        squared: bool,
    },
    Linear,
    Precomputed {
        path: PathBuf,
    },
    WeightedSum {
        components: Vec<WeightedKernel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKernel {
    pub weight: f64,
    pub kernel: KernelConfig,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Rbf {
            bandwidth: None,
            squared: false,
        }
    }
}

impl KernelConfig {
    /// Fill in data-dependent choices and load precomputed matrices.
    /// Returns the runnable spec and a config with every value pinned.
    pub fn resolve(&self, samples: &Samples, seed: u64) -> Result<(KernelSpec, KernelConfig)> {
        let out = match self {
            KernelConfig::Rbf { bandwidth, squared } => {
                let bw = match bandwidth {
                    Some(b) => *b,
                    None => {
                        let m = median_bandwidth(samples, seed)?;
                        if *squared {
                            m * m
                        } else {
                            m
                        }
                    }
                };
                (
                    KernelSpec::Rbf {
                        bandwidth: bw,
                        squared: *squared,
                    },
                    KernelConfig::Rbf {
                        bandwidth: Some(bw),
                        squared: *squared,
                    },
                )
            }
            KernelConfig::Linear => (KernelSpec::Linear, KernelConfig::Linear),
            KernelConfig::Precomputed { path } => (
                KernelSpec::Precomputed(Arc::new(load_precomputed(path)?)),
                self.clone(),
            ),
            KernelConfig::WeightedSum { components } => {
                let mut specs = Vec::with_capacity(components.len());
                let mut cfgs = Vec::with_capacity(components.len());
                for c in components {
                    let (s, k) = c.kernel.resolve(samples, seed)?;
                    specs.push((c.weight, s));
                    cfgs.push(WeightedKernel {
                        weight: c.weight,
                        kernel: k,
                    });
                }
                (
                    KernelSpec::WeightedSum(specs),
                    KernelConfig::WeightedSum { components: cfgs },
                )
            }
        };
        out.0.validate()?;
        Ok(out)
    }
}

/// Headerless square CSV; symmetry is checked on load.
pub fn load_precomputed(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::malformed(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::malformed(path, format!("`{c}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::malformed(path, "kernel matrix is not square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(path.display().to_string()));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::malformed(path, format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(m)
}
