//! Zero-shot evaluation: multiclass accuracy among unseen classes (MAU),
//! per-class ROC/AUC against seen-class points, and recall of an unseen
//! class when it competes with every seen classifier.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::predict::{zero_shot_decide, PredictedClassifier};
use crate::svm::{argmax, SeenModel};

/// ROC points from `(0, 0)` to `(1, 1)`, one step per distinct score, and
/// the trapezoidal area under them. Tied positive/negative scores share a
/// diagonal step, so each tie counts one half.
pub fn roc_curve(positives: &[f64], negatives: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if positives.is_empty() {
        return Err(Error::EmptySide("positive"));
    }
    if negatives.is_empty() {
        return Err(Error::EmptySide("negative"));
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFiniteValue("scores".into()));
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid over this group, in counts to keep ties exact.
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok((auc / (np * nn), points))
}

/// Unseen-class points are positives, seen-class points negatives.
/// Kernel vectors are columns.
pub fn auc_vs_seen(
    predicted: &PredictedClassifier,
    unseen_points: &DMatrix<f64>,
    seen_points: &DMatrix<f64>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let pos = scores(predicted, unseen_points)?;
    let neg = scores(predicted, seen_points)?;
    roc_curve(&pos, &neg)
}

fn scores(p: &PredictedClassifier, kvecs: &DMatrix<f64>) -> Result<Vec<f64>> {
    if kvecs.ncols() > 0 && kvecs.nrows() != p.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: p.beta.len(),
            actual: kvecs.nrows(),
        });
    }
    Ok(kvecs.tr_mul(&p.beta).iter().copied().collect())
}

/// Fraction of test points assigned to their true class by the argmax over
/// the predicted classifiers.
pub fn mau(predicted: &[PredictedClassifier], test_points: &DMatrix<f64>, true_labels: &[String]) -> Result<f64> {
    if test_points.ncols() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if true_labels.len() != test_points.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} test points",
            true_labels.len(),
            test_points.ncols()
        )));
    }
    let mut hits = 0usize;
    for (j, label) in true_labels.iter().enumerate() {
        let kv: DVector<f64> = test_points.column(j).clone_owned();
        if zero_shot_decide(predicted, &kv)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / true_labels.len() as f64)
}

/// Recall of `predicted`'s class in an `(N_sc + 1)`-way argmax against all
/// seen classifiers. Seen classifiers come first, so ties go to them.
pub fn recall_n_plus_1(
    seen_model: &SeenModel,
    predicted: &PredictedClassifier,
    test_points: &DMatrix<f64>,
    true_labels: &[String],
) -> Result<f64> {
    if true_labels.len() != test_points.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} test points",
            true_labels.len(),
            test_points.ncols()
        )));
    }
    let rows = seen_model.coefficients.nrows();
    if test_points.nrows() != rows || predicted.beta.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            actual: test_points.nrows(),
        });
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    let n_sc = seen_model.n_classes();
    let mut scores = vec![0.0; n_sc + 1];
    for (j, label) in true_labels.iter().enumerate() {
        if *label != predicted.class_id {
            continue;
        }
        total += 1;
        let kv = test_points.column(j);
        for c in 0..n_sc {
            scores[c] = seen_model.coefficients.column(c).dot(&kv);
        }
        scores[n_sc] = predicted.beta.dot(&kv);
        if argmax(&scores) == n_sc {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::NoUnseenPoints(predicted.class_id.clone()));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n_test_unseen: usize,
    pub n_test_seen: usize,
    pub mau: f64,
    pub per_class_auc: BTreeMap<String, f64>,
    pub mean_auc: f64,
    pub recall_n_plus_1: BTreeMap<String, f64>,
    pub mean_recall: f64,
    pub roc_points: BTreeMap<String, Vec<(f64, f64)>>,
    pub split: SplitSpec,
    pub config_digest: String,
}

/// Test set for [`evaluate`]: kernel vectors as columns, with labels.
pub struct TestPoints<'a> {
    pub kvecs: &'a DMatrix<f64>,
    pub labels: &'a [String],
}

/// All three protocols. Points whose label is an unseen class count as
/// positives / MAU items; points of seen classes are the AUC negatives.
pub fn evaluate(
    seen_model: &SeenModel,
    predicted: &[PredictedClassifier],
    test: &TestPoints<'_>,
    split: &SplitSpec,
    config_digest: &str,
) -> Result<EvalReport> {
    let unseen_idx: Vec<usize> = (0..test.labels.len())
        .filter(|&j| split.unseen_class_ids.contains(&test.labels[j]))
        .collect();
    let seen_idx: Vec<usize> = (0..test.labels.len())
        .filter(|&j| split.seen_class_ids.contains(&test.labels[j]))
        .collect();
    let unseen_k = test.kvecs.select_columns(&unseen_idx);
    let seen_k = test.kvecs.select_columns(&seen_idx);
    let unseen_labels: Vec<String> = unseen_idx.iter().map(|&j| test.labels[j].clone()).collect();

    let mau_value = mau(predicted, &unseen_k, &unseen_labels)?;
    let mut per_class_auc = BTreeMap::new();
    let mut roc_points = BTreeMap::new();
    let mut recall = BTreeMap::new();
    for p in predicted {
        let own: Vec<usize> = (0..unseen_labels.len())
            .filter(|&j| unseen_labels[j] == p.class_id)
            .collect();
        let (auc, roc) = auc_vs_seen(p, &unseen_k.select_columns(&own), &seen_k)?;
        per_class_auc.insert(p.class_id.clone(), auc);
        roc_points.insert(p.class_id.clone(), roc);
        recall.insert(
            p.class_id.clone(),
            recall_n_plus_1(seen_model, p, &unseen_k, &unseen_labels)?,
        );
    }
    let mean = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len().max(1) as f64;
    let method = predicted.first().map(|p| p.method.to_string()).unwrap_or_default();
    Ok(EvalReport {
        method,
        n_test_unseen: unseen_idx.len(),
        n_test_seen: seen_idx.len(),
        mau: mau_value,
        mean_auc: mean(&per_class_auc),
        per_class_auc,
        mean_recall: mean(&recall),
        recall_n_plus_1: recall,
        roc_points,
        split: split.clone(),
        config_digest: config_digest.to_string(),
    })
}

/// SHA-256 of a JSON value's canonical form (sorted keys, compact).
pub fn digest_json(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("JSON value serializes");
    digest_bytes(text.as_bytes())
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_roc_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed(path, e.to_string()))?;
    w.write_record(["fpr", "tpr"]).map_err(|e| Error::malformed(path, e.to_string()))?;
    for (f, t) in points {
        w.write_record([format!("{f:?}"), format!("{t:?}")])
            .map_err(|e| Error::malformed(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::Method;

    #[test]
    fn perfect_separation() {
        let (auc, roc) = roc_curve(&[3.0, 2.5], &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn constant_scores_give_half() {
        let (auc, roc) = roc_curve(&[0.3; 4], &[0.3; 7]).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(roc, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn empty_sides() {
        assert!(matches!(roc_curve(&[], &[1.0]), Err(Error::EmptySide(_))));
        assert!(matches!(roc_curve(&[1.0], &[]), Err(Error::EmptySide(_))));
    }

    fn clf(id: &str, beta: &[f64]) -> PredictedClassifier {
        PredictedClassifier {
            class_id: id.into(),
            method: Method::Dt,
            beta: DVector::from_vec(beta.to_vec()),
            hyper: None,
        }
    }

    #[test]
    fn mau_all_correct() {
        // Two "kernel features" plus bias; class a fires on feature 0.
        let set = [clf("a", &[1.0, 0.0, 0.0]), clf("b", &[0.0, 1.0, 0.0])];
        let pts = DMatrix::from_column_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.9, 0.1, 1.0]);
        let labels: Vec<String> = vec!["a".into(), "b".into(), "a".into()];
        assert_eq!(mau(&set, &pts, &labels).unwrap(), 1.0);
        assert!(matches!(
            mau(&set, &DMatrix::zeros(3, 0), &[]),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn recall_examples() {
        let seen = SeenModel {
            class_ids: vec!["s".into()],
            coefficients: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            diagnostics: vec![],
        };
        let pts = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 2.0, 1.0]);
        let labels: Vec<String> = vec!["u".into(), "u".into()];
        let dominant = clf("u", &[5.0, 0.0]);
        assert_eq!(recall_n_plus_1(&seen, &dominant, &pts, &labels).unwrap(), 1.0);
        let zero = clf("u", &[0.0, 0.0]);
        assert_eq!(recall_n_plus_1(&seen, &zero, &pts, &labels).unwrap(), 0.0);
        let other = clf("v", &[0.0, 0.0]);
        assert!(matches!(
            recall_n_plus_1(&seen, &other, &pts, &labels),
            Err(Error::NoUnseenPoints(_))
        ));
    }

    #[test]
    fn digest_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x": 1, "y": [1.5, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y": [1.5, 2], "x": 1}"#).unwrap();
        assert_eq!(digest_json(&a), digest_json(&b));
        assert_eq!(digest_json(&a).len(), 64);
    }
}
