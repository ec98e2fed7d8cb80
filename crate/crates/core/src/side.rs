//! Similarity between classes in the side-information domain.
//!
//! The Gram is computed over every class in the side-info map. Any data
//! dependent choice (the RBF bandwidth) is fitted on the seen classes only.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Samples, SideInfo};
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelConfig};
use crate::text::{
    build_description, ds_kernel, ds_kernel_normalized, tf_matrix, tfidf_matrix, tokenize, EmbeddingTable,
    StopWords,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SideKernelConfig {
    /// `vector` for numeric side info, `tfidf` for text, `precomputed` for
    /// similarity rows.
    #[default]
    Auto,
    Vector {
        #[serde(default)]
        kernel: KernelConfig,
    },
    Ds {
        embeddings: PathBuf,
        #[serde(default)]
        stop_words: Option<PathBuf>,
        #[serde(default)]
        normalized: bool,
    },
    Tf {
        #[serde(default)]
        stop_words: Option<PathBuf>,
    },
    Tfidf {
        #[serde(default)]
        stop_words: Option<PathBuf>,
        #[serde(default)]
        smooth: bool,
    },
    Precomputed,
}

/// Class-by-class similarity in sorted class-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SideGram {
    pub class_ids: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Dropped out-of-vocabulary term occurrences (DS kernel only).
    pub oov_terms: usize,
}

impl SideGram {
    fn index(&self, id: &str) -> Result<usize> {
        self.class_ids
            .binary_search_by(|c| c.as_str().cmp(id))
            .map_err(|_| Error::MissingSideInfo(id.to_string()))
    }

    /// `G` restricted to `seen`, in the given order.
    pub fn block(&self, seen: &[String]) -> Result<DMatrix<f64>> {
        let idx = seen.iter().map(|s| self.index(s)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]))
    }

    /// `g(e_z)`: similarity of `class` to each seen class.
    pub fn vector(&self, class: &str, seen: &[String]) -> Result<DVector<f64>> {
        let z = self.index(class)?;
        let idx = seen.iter().map(|s| self.index(s)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.matrix[(z, i)])))
    }
}

fn stop_list(path: &Option<PathBuf>) -> Result<StopWords> {
    match path {
        Some(p) => StopWords::load(p),
        None => Ok(StopWords::english()),
    }
}

fn texts(side: &BTreeMap<String, SideInfo>) -> Result<Vec<&str>> {
    side.iter()
        .map(|(id, s)| match s {
            SideInfo::Text(t) => Ok(t.as_str()),
            _ => Err(Error::InvalidParameter(format!("class `{id}` has non-text side info"))),
        })
        .collect()
}

/// Build the side Gram over all classes of `side`; returns it with a config
/// whose data-dependent values are pinned.
pub fn side_gram(
    config: &SideKernelConfig,
    side: &BTreeMap<String, SideInfo>,
    seen: &[String],
    seed: u64,
) -> Result<(SideGram, SideKernelConfig)> {
    if side.is_empty() {
        return Err(Error::EmptyInput("side information".into()));
    }
    let class_ids: Vec<String> = side.keys().cloned().collect();
    let config = match config {
        SideKernelConfig::Auto => match side.values().next() {
            Some(SideInfo::Vector(_)) => SideKernelConfig::Vector {
                kernel: KernelConfig::default(),
            },
            Some(SideInfo::Text(_)) => SideKernelConfig::Tfidf {
                stop_words: None,
                smooth: false,
            },
            _ => SideKernelConfig::Precomputed,
        },
        other => other.clone(),
    };
    let mut oov_terms = 0;
    let (matrix, pinned) = match &config {
        SideKernelConfig::Auto => unreachable!("resolved above"),
        SideKernelConfig::Vector { kernel } => {
            let rows = side
                .iter()
                .map(|(id, s)| match s {
                    SideInfo::Vector(v) => Ok(v.clone()),
                    _ => Err(Error::InvalidParameter(format!("class `{id}` has non-vector side info"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let all = Samples::from_rows(&rows)?;
            let seen_rows: Vec<usize> = seen
                .iter()
                .map(|s| class_ids.binary_search(s).map_err(|_| Error::MissingSideInfo(s.clone())))
                .collect::<Result<_>>()?;
            let (spec, kernel) = kernel.resolve(&all.select(&seen_rows), seed)?;
            (gram(&spec, &all)?.into_matrix(), SideKernelConfig::Vector { kernel })
        }
        SideKernelConfig::Ds {
            embeddings,
            stop_words,
            normalized,
        } => {
            let stops = stop_list(stop_words)?;
            let table = EmbeddingTable::load(embeddings)?;
            let descs = texts(side)?
                .into_iter()
                .map(|t| build_description(&tokenize(t, &stops)?, &table))
                .collect::<Result<Vec<_>>>()?;
            oov_terms = descs.iter().map(|d| d.out_of_vocabulary()).sum();
            let n = descs.len();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = if *normalized {
                        ds_kernel_normalized(&descs[i], &descs[j])?
                    } else {
                        ds_kernel(&descs[i], &descs[j])?
                    };
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            (m, config.clone())
        }
        SideKernelConfig::Tf { stop_words } | SideKernelConfig::Tfidf { stop_words, .. } => {
            let stops = stop_list(stop_words)?;
            let docs = texts(side)?
                .into_iter()
                .map(|t| tokenize(t, &stops))
                .collect::<Result<Vec<_>>>()?;
            let terms = match &config {
                SideKernelConfig::Tfidf { smooth, .. } => tfidf_matrix(&docs, *smooth)?,
                _ => tf_matrix(&docs)?,
            };
            (&terms.matrix * terms.matrix.transpose(), config.clone())
        }
        SideKernelConfig::Precomputed => {
            let mut m = DMatrix::zeros(class_ids.len(), class_ids.len());
            for (i, (id, s)) in side.iter().enumerate() {
                let SideInfo::Similarities(row) = s else {
                    return Err(Error::InvalidParameter(format!(
                        "class `{id}` has no similarity row"
                    )));
                };
                for (j, other) in class_ids.iter().enumerate() {
                    m[(i, j)] = *row.get(other).ok_or_else(|| {
                        Error::ShapeMismatch(format!("similarity row of `{id}` lacks `{other}`"))
                    })?;
                }
            }
            if (&m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
                return Err(Error::ShapeMismatch("precomputed side similarities are not symmetric".into()));
            }
            (m, config.clone())
        }
    };
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("side-information Gram".into()));
    }
    Ok((
        SideGram {
            class_ids,
            matrix,
            oov_terms,
        },
        pinned,
    ))
}
