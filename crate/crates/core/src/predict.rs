//! Classifiers for unseen classes.
//!
//! The DT prediction is `T^T g(e)`. The SVM-DT prediction keeps the DT bias
//! and replaces the `N` sample coefficients by the solution of
//!
//! ```text
//! min  beta^T K' beta - zeta * beta_dt^T K' beta + a^T beta
//! s.t. 1^T beta = -1,  beta_dt^T K' beta >= l,  -C <= beta_i <= 0
//! ```
//!
//! with `a_i = K'_ii` and `beta_dt` the first `N` DT coefficients: every
//! seen sample acts as a negative while the result stays correlated with
//! the DT classifier. With `zeta = 0` and no correlation constraint this is
//! the negative one-class SVM, whose solution is minus the ordinary
//! one-class SVM solution.

use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::qp::{solve_qp, BoxedQp, LinearConstraint, QpSettings, QpStatus};

/// Bias of an SVM-DT classifier.
///
/// SVM-DT coefficients always carry total mass 1, while DT biases are on
/// the scale of the DT coefficients; mixing the two lets the bias decide
/// most comparisons between unseen classes, so the default drops it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasPolicy {
    #[default]
    Zero,
    /// Keep the DT bias.
    Dt,
    /// One-class offset: the decision value is 0 on free support vectors.
    OneClass,
}

/// Gap used to turn the strict `> l` into a closed constraint.
pub const STRICT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dt,
    SvmDt,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Dt => write!(f, "dt"),
            Method::SvmDt => write!(f, "svmdt"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmDtHyper {
    pub c: f64,
    pub zeta: f64,
    /// Lower bound on `beta_dt^T K' beta`.
    pub l: f64,
    /// Drop the correlation constraint when false.
    #[serde(default = "yes")]
    pub correlation: bool,
    #[serde(default)]
    pub bias: BiasPolicy,
}

fn yes() -> bool {
    true
}

impl Default for SvmDtHyper {
    fn default() -> Self {
        Self {
            c: 1.0,
            zeta: 1.0,
            l: 0.0,
            correlation: true,
            bias: BiasPolicy::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedClassifier {
    pub class_id: String,
    pub method: Method,
    /// `N` coefficients followed by the bias.
    pub beta: DVector<f64>,
    pub hyper: Option<SvmDtHyper>,
}

impl PredictedClassifier {
    pub fn score(&self, k_vec: &DVector<f64>) -> f64 {
        self.beta.dot(k_vec)
    }
}

/// `T^T g(e)`.
pub fn predict_dt(t: &DMatrix<f64>, g_vec: &DVector<f64>, class_id: &str) -> Result<PredictedClassifier> {
    if g_vec.len() != t.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "g(e) has length {}, T has {} rows",
            g_vec.len(),
            t.nrows()
        )));
    }
    Ok(PredictedClassifier {
        class_id: class_id.to_string(),
        method: Method::Dt,
        beta: t.tr_mul(g_vec),
        hyper: None,
    })
}

/// Build the SVM-DT quadratic program for a DT classifier (`N + 1` entries)
/// over the seen-sample Gram `K'`. The solver's `1/2 x^T Q x` uses
/// `Q = 2 K'`.
pub fn svm_dt_program(dt_beta: &DVector<f64>, gram: &KernelMatrix, hyper: &SvmDtHyper) -> Result<BoxedQp> {
    let n = gram.n();
    if dt_beta.len() != n + 1 {
        return Err(Error::ShapeMismatch(format!(
            "DT classifier has {} entries, Gram is {n}x{n}",
            dt_beta.len()
        )));
    }
    if !(hyper.c > 0.0 && hyper.c.is_finite()) || !(hyper.zeta >= 0.0) || !hyper.l.is_finite() {
        return Err(Error::InvalidParameter(format!("bad SVM-DT hyper-parameters {hyper:?}")));
    }
    let k = gram.matrix();
    let head = dt_beta.rows(0, n).clone_owned();
    let k_head = k * &head;
    let a = gram.diagonal();
    Ok(BoxedQp {
        q: k * 2.0,
        c: &a - &k_head * hyper.zeta,
        eq: LinearConstraint {
            a: DVector::from_element(n, 1.0),
            b: -1.0,
        },
        ineq: hyper.correlation.then_some(LinearConstraint {
            a: k_head,
            b: hyper.l + STRICT_MARGIN,
        }),
        lo: DVector::from_element(n, -hyper.c),
        hi: DVector::zeros(n),
    })
}

pub fn predict_svm_dt(
    t: &DMatrix<f64>,
    g_vec: &DVector<f64>,
    gram: &KernelMatrix,
    hyper: &SvmDtHyper,
    class_id: &str,
    settings: &QpSettings,
) -> Result<PredictedClassifier> {
    let dt = predict_dt(t, g_vec, class_id)?;
    adjust_dt(&dt, gram, hyper, settings)
}

/// SVM-DT refinement of an existing DT classifier.
pub fn adjust_dt(
    dt: &PredictedClassifier,
    gram: &KernelMatrix,
    hyper: &SvmDtHyper,
    settings: &QpSettings,
) -> Result<PredictedClassifier> {
    let qp = svm_dt_program(&dt.beta, gram, hyper)?;
    let sol = solve_qp(&qp, settings).map_err(|e| match e {
        Error::QpInfeasible(why) => Error::QpInfeasible(format!("class `{}`: {why}", dt.class_id)),
        other => other,
    })?;
    if sol.status == QpStatus::MaxIters {
        warn!(
            "SVM-DT QP for `{}` stopped at the iteration cap (residual {:.3e})",
            dt.class_id, sol.optimality_residual
        );
    }
    let n = gram.n();
    let mut beta = DVector::zeros(n + 1);
    beta.rows_mut(0, n).copy_from(&sol.x);
    beta[n] = match hyper.bias {
        BiasPolicy::Zero => 0.0,
        BiasPolicy::Dt => dt.beta[n],
        BiasPolicy::OneClass => one_class_offset(gram, &sol.x, hyper.c),
    };
    Ok(PredictedClassifier {
        class_id: dt.class_id.clone(),
        method: Method::SvmDt,
        beta,
        hyper: Some(*hyper),
    })
}

/// `-mean (K' beta)_i` over free coefficients (strictly inside `(-C, 0)`),
/// or over all nonzero ones when none is free.
fn one_class_offset(gram: &KernelMatrix, beta: &DVector<f64>, c: f64) -> f64 {
    let kb = gram.matrix() * beta;
    let eps = 1e-8 * c.max(1.0);
    let mean = |idx: Vec<usize>| -> Option<f64> {
        (!idx.is_empty()).then(|| -idx.iter().map(|&i| kb[i]).sum::<f64>() / idx.len() as f64)
    };
    let n = beta.len();
    mean((0..n).filter(|&i| beta[i] < -eps && beta[i] > -c + eps).collect())
        .or_else(|| mean((0..n).filter(|&i| beta[i] < -eps).collect()))
        .unwrap_or(0.0)
}

/// Highest-scoring class; ties go to the lexicographically smallest id.
pub fn zero_shot_decide<'a>(predicted: &'a [PredictedClassifier], k_vec: &DVector<f64>) -> Result<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for p in predicted {
        if p.beta.len() != k_vec.len() {
            return Err(Error::DimensionMismatch {
                expected: p.beta.len(),
                actual: k_vec.len(),
            });
        }
        let s = p.score(k_vec);
        best = match best {
            None => Some((&p.class_id, s)),
            Some((id, bs)) if s > bs || (s == bs && p.class_id.as_str() < id) => Some((&p.class_id, s)),
            keep => keep,
        };
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::EmptyInput("no predicted classifiers".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_transfer_gives_zero_classifier() {
        let p = predict_dt(&DMatrix::zeros(3, 5), &DVector::from_element(3, 0.7), "z").unwrap();
        assert!(p.beta.iter().all(|&v| v == 0.0));
        assert_eq!(p.beta.len(), 5);
    }

    #[test]
    fn identity_gram_recovers_seen_classifier() {
        let b = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.25, 2.0, -0.1, 0.3]);
        let t = b.transpose(); // G = I so T = G^-1 B^T = B^T
        let e1 = DVector::from_vec(vec![0.0, 1.0]);
        let p = predict_dt(&t, &e1, "z").unwrap();
        assert_eq!(p.beta, b.column(1).clone_owned());
    }

    #[test]
    fn dt_is_linear_in_side_vector() {
        let t = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.5);
        let g1 = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let g2 = DVector::from_vec(vec![1.0, 0.5, 0.0]);
        let a = 2.5;
        let lhs = predict_dt(&t, &(&g1 * a + &g2), "z").unwrap().beta;
        let rhs = predict_dt(&t, &g1, "z").unwrap().beta * a + predict_dt(&t, &g2, "z").unwrap().beta;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            predict_dt(&DMatrix::zeros(3, 5), &DVector::zeros(2), "z"),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn small_box_is_infeasible() {
        let gram = KernelMatrix::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let hyper = SvmDtHyper {
            c: 0.2,
            ..SvmDtHyper::default()
        };
        let err = predict_svm_dt(
            &DMatrix::from_element(2, 5, 0.1),
            &DVector::from_element(2, 1.0),
            &gram,
            &hyper,
            "z",
            &QpSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::QpInfeasible(ref m) if m.contains("`z`")));
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
    fn decide_single_and_bias() {
        let kv = DVector::from_vec(vec![0.3, 1.0]);
        assert_eq!(zero_shot_decide(&[clf("only", &[1.0, 0.0])], &kv).unwrap(), "only");
        let set = [clf("a", &[1.0, 0.0]), clf("b", &[1.0, 0.5])];
        for x in [-3.0, 0.0, 7.0] {
            let kv = DVector::from_vec(vec![x, 1.0]);
            assert_eq!(zero_shot_decide(&set, &kv).unwrap(), "b");
        }
    }

    #[test]
    fn decide_ties_to_smallest_id() {
        let kv = DVector::from_vec(vec![1.0, 1.0]);
        let set = [clf("m", &[1.0, 0.0]), clf("c", &[0.5, 0.5]), clf("x", &[1.0, 0.0])];
        assert_eq!(zero_shot_decide(&set, &kv).unwrap(), "c");
    }
}
