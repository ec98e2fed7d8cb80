//! Datasets, class splits, and the CSV/JSON ingestion formats.
//!
//! * features: CSV with a header row, one sample per row, `.` decimal separator
//! * labels: one-column CSV (header `label`) of opaque class-id strings
//! * side info: JSON object mapping class id to `{"text": ...}`,
//!   `{"vector": [...]}` or `{"similarities": {class: value, ...}}`
//! * split: JSON-serialized [`SplitSpec`]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SeededStream};

/// Dense row-major sample matrix (`rows` samples by `cols` dims).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Samples {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} sample matrix",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Samples {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Samples {
            data,
            rows: indices.len(),
            cols: self.cols,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Class-level side information. One entry per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideInfo {
    /// Free-text class description.
    Text(String),
    /// Numeric description, e.g. averaged attributes.
    Vector(Vec<f64>),
    /// Row of an externally computed class-similarity matrix.
    Similarities(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seen_class_ids: BTreeSet<String>,
    pub unseen_class_ids: BTreeSet<String>,
    pub fold_id: u32,
    pub rng_seed: u64,
}

impl SplitSpec {
    /// Seen classes in sorted order; position is the dense class index.
    pub fn seen(&self) -> Vec<String> {
        self.seen_class_ids.iter().cloned().collect()
    }

    pub fn unseen(&self) -> Vec<String> {
        self.unseen_class_ids.iter().cloned().collect()
    }

    pub fn validate(&self, class_ids: &[String]) -> Result<()> {
        if let Some(c) = self.seen_class_ids.intersection(&self.unseen_class_ids).next() {
            return Err(Error::InvalidParameter(format!(
                "class `{c}` is both seen and unseen"
            )));
        }
        if self.seen_class_ids.is_empty() || self.unseen_class_ids.is_empty() {
            return Err(Error::InvalidParameter(
                "split needs at least one seen and one unseen class".into(),
            ));
        }
        let all: BTreeSet<&String> = class_ids.iter().collect();
        let covered: BTreeSet<&String> = self
            .seen_class_ids
            .iter()
            .chain(self.unseen_class_ids.iter())
            .collect();
        if all != covered {
            return Err(Error::InvalidParameter(
                "split does not cover exactly the dataset's classes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Samples,
    pub labels: Vec<String>,
    pub class_side_info: BTreeMap<String, SideInfo>,
    pub split: Option<SplitSpec>,
}

impl Dataset {
    pub fn new(
        features: Samples,
        labels: Vec<String>,
        class_side_info: BTreeMap<String, SideInfo>,
    ) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            class_side_info,
            split: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_split(mut self, split: SplitSpec) -> Result<Self> {
        split.validate(&self.class_ids())?;
        self.split = Some(split);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.rows() == 0 || self.features.cols() == 0 {
            return Err(Error::EmptyInput("feature matrix".into()));
        }
        if self.labels.len() != self.features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.features.rows()
            )));
        }
        if !self.features.is_finite() {
            return Err(Error::NonFiniteValue("features".into()));
        }
        for label in &self.labels {
            if !self.class_side_info.contains_key(label) {
                return Err(Error::MissingSideInfo(label.clone()));
            }
        }
        for (id, info) in &self.class_side_info {
            match info {
                SideInfo::Vector(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::NonFiniteValue(format!("side info of `{id}`")));
                }
                SideInfo::Similarities(m) if m.values().any(|x| !x.is_finite()) => {
                    return Err(Error::NonFiniteValue(format!("side info of `{id}`")));
                }
                SideInfo::Text(t) => {
                    crate::text::tokenize(t, &crate::text::StopWords::english())?;
                }
                _ => {}
            }
        }
        if let Some(split) = &self.split {
            split.validate(&self.class_ids())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Sorted class ids (every class with side information).
    pub fn class_ids(&self) -> Vec<String> {
        self.class_side_info.keys().cloned().collect()
    }

    /// Row indices whose label is in `classes`, in file order.
    pub fn indices_of<'a>(&self, classes: impl IntoIterator<Item = &'a String>) -> Vec<usize> {
        let set: BTreeSet<&String> = classes.into_iter().collect();
        (0..self.len())
            .filter(|&i| set.contains(&self.labels[i]))
            .collect()
    }

    /// Write features, labels and side info next to each other.
    pub fn save(&self, features: &Path, labels: &Path, side_info: &Path) -> Result<()> {
        write_features(features, &self.features)?;
        write_labels(labels, &self.labels)?;
        let json = serde_json::to_string_pretty(&self.class_side_info).expect("side info serializes");
        fs::write(side_info, json).map_err(|e| Error::io(side_info, e))
    }
}

pub fn load_dataset(features_path: &Path, labels_path: &Path, side_info_path: &Path) -> Result<Dataset> {
    let features = read_features(features_path)?;
    let labels = read_labels(labels_path)?;
    let side = read_side_info(side_info_path)?;
    if labels.len() != features.rows() {
        return Err(Error::malformed(
            labels_path,
            format!("{} labels for {} feature rows", labels.len(), features.rows()),
        ));
    }
    Dataset::new(features, labels, side)
}

/// Pick unseen classes: `max(1, round(fraction * n))` of them, at most `n - 1`.
pub fn make_split(dataset: &Dataset, unseen_fraction: f64, rng_seed: u64) -> Result<SplitSpec> {
    split_classes(&dataset.class_ids(), unseen_fraction, rng_seed)
}

pub fn split_classes(class_ids: &[String], unseen_fraction: f64, rng_seed: u64) -> Result<SplitSpec> {
    if !(unseen_fraction > 0.0 && unseen_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "unseen fraction {unseen_fraction} not in (0, 1)"
        )));
    }
    let mut ids: Vec<String> = class_ids.to_vec();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    let n_unseen = ((unseen_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = SeededStream::new(rng_seed, stream::SPLIT);
    rng.shuffle(&mut ids);
    let unseen_class_ids = ids[..n_unseen].iter().cloned().collect();
    let seen_class_ids = ids[n_unseen..].iter().cloned().collect();
    Ok(SplitSpec {
        seen_class_ids,
        unseen_class_ids,
        fold_id: 0,
        rng_seed,
    })
}

pub fn read_features(path: &Path) -> Result<Samples> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let cols = rdr.headers().map_err(|e| csv_error(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != cols {
            return Err(Error::malformed(
                path,
                format!("row {} has {} cells, header has {cols}", line + 1, rec.len()),
            ));
        }
        for cell in rec.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::malformed(path, format!("row {}: `{cell}` is not a number", line + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(format!(
                    "{} row {}",
                    path.display(),
                    line + 1
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    Samples::new(rows, cols, data)
}

pub fn write_features(path: &Path, samples: &Samples) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = (0..samples.cols()).map(|j| format!("f{j}")).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in samples.iter_rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 1 {
            return Err(Error::malformed(
                path,
                format!("row {} has {} cells, expected 1", line + 1, rec.len()),
            ));
        }
        labels.push(rec[0].trim().to_string());
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["label"]).map_err(|e| csv_error(path, e))?;
    for l in labels {
        w.write_record([l]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_side_info(path: &Path) -> Result<BTreeMap<String, SideInfo>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_split(path: &Path) -> Result<SplitSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_split(path: &Path, split: &SplitSpec) -> Result<()> {
    let json = serde_json::to_string_pretty(split).expect("split serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::malformed(path, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn small_files(dir: &Path, features: &str, labels: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let f = write(dir, "f.csv", features);
        let l = write(dir, "l.csv", labels);
        let s = write(
            dir,
            "s.json",
            r#"{"a": {"vector": [1.0, 0.0]}, "b": {"text": "a small red bird"}}"#,
        );
        (f, l, s)
    }

    #[test]
    fn loads_smallest_consistent_input() {
        let dir = tempfile::tempdir().unwrap();
        let (f, l, s) = small_files(dir.path(), "x,y\n1,2\n3,4\n5,6\n", "label\na\na\nb\n");
        let ds = load_dataset(&f, &l, &s).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.class_ids(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn missing_side_info_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (f, l, s) = small_files(dir.path(), "x,y\n1,2\n3,4\n5,6\n", "label\na\na\nc\n");
        assert!(matches!(load_dataset(&f, &l, &s), Err(Error::MissingSideInfo(c)) if c == "c"));
    }

    #[test]
    fn nan_feature_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (f, l, s) = small_files(dir.path(), "x,y\n1,NaN\n3,4\n5,6\n", "label\na\na\nb\n");
        assert!(matches!(load_dataset(&f, &l, &s), Err(Error::NonFiniteValue(_))));
    }

    #[test]
    fn ragged_and_non_numeric_rows_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let (f, l, s) = small_files(dir.path(), "x,y\n1,2\n3\n5,6\n", "label\na\na\nb\n");
        assert!(matches!(load_dataset(&f, &l, &s), Err(Error::MalformedFile { .. })));
        let (f, l, s) = small_files(dir.path(), "x,y\n1,2\n3,oops\n5,6\n", "label\na\na\nb\n");
        assert!(matches!(load_dataset(&f, &l, &s), Err(Error::MalformedFile { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nope.csv");
        let err = load_dataset(&p, &p, &p).unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Input);
    }

    fn ten_classes() -> Vec<String> {
        (0..10).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn split_is_deterministic() {
        let ids = ten_classes();
        let a = split_classes(&ids, 0.2, 7).unwrap();
        let b = split_classes(&ids, 0.2, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.unseen_class_ids.len(), 2);
        assert_eq!(a.seen_class_ids.len(), 8);
        a.validate(&ids).unwrap();
    }

    #[test]
    fn split_depends_on_seed() {
        let ids = ten_classes();
        let a = split_classes(&ids, 0.2, 7).unwrap();
        let b = split_classes(&ids, 0.2, 8).unwrap();
        assert_ne!(a.unseen_class_ids, b.unseen_class_ids);
    }

    #[test]
    fn split_needs_two_classes() {
        assert!(matches!(
            split_classes(&["only".to_string()], 0.2, 1),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn split_rounding_keeps_one_seen_and_one_unseen() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let s = split_classes(&ids, 0.01, 0).unwrap();
        assert_eq!(s.unseen_class_ids.len(), 1);
        let s = split_classes(&ids, 0.99, 0).unwrap();
        assert_eq!(s.seen_class_ids.len(), 1);
    }
}
