//! Model files: a JSON header next to a binary sidecar.
//!
//! The sidecar holds the header's matrix blocks back to back, each
//! row-major as little-endian `f64`. The header names the sidecar by file
//! name only, resolved against the header's directory, so files can be
//! moved together.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Samples, SplitSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelConfig;
use crate::pipeline::{PredictFailure, SeenStage, TransferConfig};
use crate::predict::{Method, PredictedClassifier, SvmDtHyper};
use crate::side::SideKernelConfig;
use crate::svm::{ClassDiagnostics, SeenModel, SvmParams};
use crate::transfer::TransferMatrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<H> {
    kind: String,
    version: u32,
    data_file: String,
    blocks: Vec<Block>,
    #[serde(flatten)]
    header: H,
}

fn sidecar_name(json_path: &Path) -> Result<String> {
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad output path {}", json_path.display())))?;
    Ok(format!("{stem}.bin"))
}

fn sidecar_path(json_path: &Path, name: &str) -> PathBuf {
    json_path.parent().unwrap_or(Path::new("")).join(name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Write `header` plus `matrices` as `json_path` and its `.bin` sidecar.
pub fn save_bundle<H: Serialize>(json_path: &Path, kind: &str, header: &H, matrices: &[(&str, &DMatrix<f64>)]) -> Result<()> {
    let data_file = sidecar_name(json_path)?;
    let mut bytes = Vec::new();
    let mut blocks = Vec::with_capacity(matrices.len());
    for (name, m) in matrices {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        blocks.push(Block {
            name: name.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let bin = sidecar_path(json_path, &data_file);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    write_json(
        json_path,
        &Envelope {
            kind: kind.to_string(),
            version: FORMAT_VERSION,
            data_file,
            blocks,
            header,
        },
    )
}

pub fn load_bundle<H: DeserializeOwned>(json_path: &Path, kind: &str) -> Result<(H, BTreeMap<String, DMatrix<f64>>)> {
    let env: Envelope<H> = read_json(json_path)?;
    if env.kind != kind {
        return Err(Error::malformed(json_path, format!("expected a `{kind}` file, found `{}`", env.kind)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::malformed(json_path, format!("unsupported version {}", env.version)));
    }
    let bin = sidecar_path(json_path, &env.data_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected: usize = env.blocks.iter().map(|b| b.rows * b.cols * 8).sum();
    if bytes.len() != expected {
        return Err(Error::malformed(
            &bin,
            format!("{} bytes, header declares {expected}", bytes.len()),
        ));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut out = BTreeMap::new();
    for b in &env.blocks {
        let m = DMatrix::from_row_iterator(b.rows, b.cols, values.by_ref().take(b.rows * b.cols));
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("block `{}` of {}", b.name, bin.display())));
        }
        out.insert(b.name.clone(), m);
    }
    Ok((env.header, out))
}

fn take(blocks: &mut BTreeMap<String, DMatrix<f64>>, name: &str, path: &Path) -> Result<DMatrix<f64>> {
    blocks
        .remove(name)
        .ok_or_else(|| Error::malformed(path, format!("missing block `{name}`")))
}

pub const SEEN_MODEL_KIND: &str = "seen-model";
pub const TRANSFER_KIND: &str = "transfer-matrix";
pub const CLASSIFIERS_KIND: &str = "predicted-classifiers";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeenHeader {
    class_ids: Vec<String>,
    kernel: KernelConfig,
    svm: SvmParams,
    split: SplitSpec,
    train_indices: Vec<usize>,
    train_labels: Vec<usize>,
    diagnostics: Vec<ClassDiagnostics>,
}

/// Stores coefficients and training samples; the Gram is recomputed on
/// load from the pinned kernel.
pub fn save_seen(path: &Path, stage: &SeenStage, svm: &SvmParams, split: &SplitSpec) -> Result<()> {
    let header = SeenHeader {
        class_ids: stage.model.class_ids.clone(),
        kernel: stage.kernel.clone(),
        svm: *svm,
        split: split.clone(),
        train_indices: stage.train_indices.clone(),
        train_labels: stage.labels.clone(),
        diagnostics: stage.model.diagnostics.clone(),
    };
    let samples = DMatrix::from_row_slice(stage.samples.rows(), stage.samples.cols(), stage.samples.as_slice());
    save_bundle(
        path,
        SEEN_MODEL_KIND,
        &header,
        &[("coefficients", &stage.model.coefficients), ("samples", &samples)],
    )
}

/// Loaded seen stage plus the metadata stored with it.
pub struct SeenFile {
    pub stage: SeenStage,
    pub svm: SvmParams,
    pub split: SplitSpec,
}

pub fn load_seen(path: &Path) -> Result<SeenFile> {
    let (h, mut blocks): (SeenHeader, _) = load_bundle(path, SEEN_MODEL_KIND)?;
    let coefficients = take(&mut blocks, "coefficients", path)?;
    let s = take(&mut blocks, "samples", path)?;
    let n = s.nrows();
    if coefficients.nrows() != n + 1
        || coefficients.ncols() != h.class_ids.len()
        || h.train_labels.len() != n
        || h.train_indices.len() != n
    {
        return Err(Error::malformed(path, "inconsistent block shapes"));
    }
    let samples = Samples::new(n, s.ncols(), s.transpose().as_slice().to_vec())?;
    let (spec, kernel) = h.kernel.resolve(&samples, 0)?;
    let gram = crate::kernels::gram(&spec, &samples)?;
    Ok(SeenFile {
        stage: SeenStage {
            kernel,
            spec,
            train_indices: h.train_indices,
            samples,
            labels: h.train_labels,
            gram,
            model: SeenModel {
                class_ids: h.class_ids,
                coefficients,
                diagnostics: h.diagnostics,
            },
        },
        svm: h.svm,
        split: h.split,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferHeader {
    pub seen_class_ids: Vec<String>,
    pub side_kernel: SideKernelConfig,
    pub config: TransferConfig,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub oov_terms: usize,
}

/// `g` is the seen-class side Gram the matrix was learned with.
pub fn save_transfer(path: &Path, header: &TransferHeader, tm: &TransferMatrix, g: &DMatrix<f64>) -> Result<()> {
    save_bundle(path, TRANSFER_KIND, header, &[("t", &tm.t), ("g", g)])
}

pub fn load_transfer(path: &Path) -> Result<(TransferHeader, DMatrix<f64>, DMatrix<f64>)> {
    let (h, mut blocks): (TransferHeader, _) = load_bundle(path, TRANSFER_KIND)?;
    let t = take(&mut blocks, "t", path)?;
    let g = take(&mut blocks, "g", path)?;
    let n_sc = h.seen_class_ids.len();
    if t.nrows() != n_sc || g.shape() != (n_sc, n_sc) {
        return Err(Error::malformed(path, "block shapes do not match the seen classes"));
    }
    Ok((h, t, g))
}

pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed(path, e.to_string()))?;
    w.write_record(["iteration", "objective"])
        .map_err(|e| Error::malformed(path, e.to_string()))?;
    for (i, v) in trace.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:?}")])
            .map_err(|e| Error::malformed(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::malformed(path, e.to_string()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
            rec.get(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::malformed(path, "bad objective value"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierEntry {
    class_id: String,
    method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyper: Option<SvmDtHyper>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierHeader {
    classifiers: Vec<ClassifierEntry>,
    failures: Vec<PredictFailure>,
}

/// Column `j` of the `beta` block belongs to `classifiers[j]`.
pub fn save_classifiers(path: &Path, predicted: &[PredictedClassifier], failures: &[PredictFailure]) -> Result<()> {
    let rows = predicted.first().map_or(0, |p| p.beta.len());
    let mut beta = DMatrix::zeros(rows, predicted.len());
    for (j, p) in predicted.iter().enumerate() {
        if p.beta.len() != rows {
            return Err(Error::ShapeMismatch("classifiers of different lengths".into()));
        }
        beta.set_column(j, &p.beta);
    }
    let header = ClassifierHeader {
        classifiers: predicted
            .iter()
            .map(|p| ClassifierEntry {
                class_id: p.class_id.clone(),
                method: p.method,
                hyper: p.hyper,
            })
            .collect(),
        failures: failures.to_vec(),
    };
    save_bundle(path, CLASSIFIERS_KIND, &header, &[("beta", &beta)])
}

pub fn load_classifiers(path: &Path) -> Result<(Vec<PredictedClassifier>, Vec<PredictFailure>)> {
    let (h, mut blocks): (ClassifierHeader, _) = load_bundle(path, CLASSIFIERS_KIND)?;
    let beta = take(&mut blocks, "beta", path)?;
    if beta.ncols() != h.classifiers.len() {
        return Err(Error::malformed(path, "beta columns do not match the classifier list"));
    }
    let predicted = h
        .classifiers
        .into_iter()
        .enumerate()
        .map(|(j, e)| PredictedClassifier {
            class_id: e.class_id,
            method: e.method,
            beta: DVector::from_column_slice(beta.column(j).as_slice()),
            hyper: e.hyper,
        })
        .collect();
    Ok((predicted, h.failures))
}
