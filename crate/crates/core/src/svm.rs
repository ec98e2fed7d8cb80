//! One-vs-all kernel SVMs for the seen classes.
//!
//! Each binary problem is the soft-margin dual
//!
//! ```text
//! min  1/2 a^T Q a - 1^T a   s.t.  y^T a = 0,  0 <= a_i <= C_i
//! Q_ij = y_i y_j K_ij
//! ```
//!
//! solved by SMO with second-order working-set selection. The solution is
//! mapped to representer form `beta = [a_1 y_1, ..., a_N y_N, b]`, so the
//! decision value is `beta^T k(x)`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    /// Pair-update cap per binary problem.
    pub max_updates: usize,
    /// Scale C per class by `n / (2 n_class)`.
    pub class_weighting: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_updates: 1_000_000,
            class_weighting: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub upper: Vec<f64>,
    /// Representer coefficients `a_i y_i` followed by the bias.
    pub beta: DVector<f64>,
    pub dual_objective: f64,
    /// Maximal violating-pair gap at exit.
    pub kkt_gap: f64,
    pub updates: usize,
    pub converged: bool,
}

/// Solve one binary problem. `y` holds +1 / -1.
pub fn train_binary(gram: &KernelMatrix, y: &[f64], params: &SvmParams) -> Result<BinarySolution> {
    let n = gram.n();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for a {n}x{n} Gram", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("binary labels must be +1 or -1".into()));
    }
    if !(params.c > 0.0 && params.c.is_finite()) || !(params.tol > 0.0) {
        return Err(Error::InvalidParameter("C and tol must be positive".into()));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    let upper: Vec<f64> = if params.class_weighting {
        let cp = params.c * n as f64 / (2.0 * n_pos as f64);
        let cn = params.c * n as f64 / (2.0 * (n - n_pos) as f64);
        y.iter().map(|&v| if v > 0.0 { cp } else { cn }).collect()
    } else {
        vec![params.c; n]
    };
    let k = gram.matrix();
    let mut alpha = vec![0.0; n];
    // Gradient of the dual objective: Q a - 1.
    let mut grad = vec![-1.0; n];
    let mut updates = 0;
    let mut gap;
    loop {
        let sel = select_pair(k, y, &alpha, &upper, &grad);
        gap = sel.gap;
        if gap < params.tol {
            break;
        }
        if updates >= params.max_updates {
            break;
        }
        let (i, j) = match (sel.i, sel.j) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        // Move along d = y_i e_i - y_j e_j, which keeps y^T a fixed.
        let quad = (k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]).max(TAU);
        let slope = -y[i] * grad[i] + y[j] * grad[j];
        let mut t = slope / quad;
        let cap_i = if y[i] > 0.0 { upper[i] - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { upper[j] - alpha[j] };
        t = t.min(cap_i).min(cap_j).max(0.0);
        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = (alpha[i] + y[i] * t).clamp(0.0, upper[i]);
        alpha[j] = (alpha[j] - y[j] * t).clamp(0.0, upper[j]);
        // Snap to bounds so the index sets stay clean.
        if y[i] > 0.0 && t == cap_i {
            alpha[i] = upper[i];
        }
        if y[i] < 0.0 && t == cap_i {
            alpha[i] = 0.0;
        }
        if y[j] > 0.0 && t == cap_j {
            alpha[j] = 0.0;
        }
        if y[j] < 0.0 && t == cap_j {
            alpha[j] = upper[j];
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for (m, g) in grad.iter_mut().enumerate() {
            *g += y[m] * (y[i] * k[(m, i)] * di + y[j] * k[(m, j)] * dj);
        }
        updates += 1;
    }
    let converged = gap < params.tol;
    let bias = -compute_rho(y, &alpha, &upper, &grad);
    let mut beta = DVector::zeros(n + 1);
    for i in 0..n {
        beta[i] = alpha[i] * y[i];
    }
    beta[n] = bias;
    let dual_objective = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() * 0.5;
    Ok(BinarySolution {
        alpha,
        upper,
        beta,
        dual_objective,
        kkt_gap: gap,
        updates,
        converged,
    })
}

struct Selection {
    i: Option<usize>,
    j: Option<usize>,
    gap: f64,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

fn select_pair(k: &DMatrix<f64>, y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> Selection {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        if in_up(y[t], alpha[t], upper[t]) {
            let v = -y[t] * grad[t];
            if v > gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let mut gmax2 = f64::NEG_INFINITY;
    let mut best = f64::INFINITY;
    let mut j_sel = None;
    for t in 0..n {
        if !in_low(y[t], alpha[t], upper[t]) {
            continue;
        }
        let v = y[t] * grad[t];
        if v > gmax2 {
            gmax2 = v;
        }
        if let Some(i) = i_sel {
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = (k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)]).max(TAU);
                let obj = -(diff * diff) / quad;
                if obj < best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
    }
    let gap = if gmax.is_finite() && gmax2.is_finite() {
        gmax + gmax2
    } else {
        0.0
    };
    Selection {
        i: i_sel,
        j: j_sel,
        gap,
    }
}

fn compute_rho(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= upper[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub class_id: String,
    pub converged: bool,
    pub kkt_gap: f64,
    pub updates: usize,
    pub dual_objective: f64,
}

/// Bank of seen-class classifiers. Column `y` of `coefficients` is
/// `beta_y = [beta_y^1 ... beta_y^N, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeenModel {
    pub class_ids: Vec<String>,
    pub coefficients: DMatrix<f64>,
    pub diagnostics: Vec<ClassDiagnostics>,
}

impl SeenModel {
    pub fn n_classes(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.coefficients.nrows() - 1
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.converged)
    }
}

/// `labels[i]` is the dense class index of sample `i`, in `0..class_ids.len()`.
pub fn train_one_vs_all(
    gram: &KernelMatrix,
    labels: &[usize],
    class_ids: &[String],
    params: &SvmParams,
) -> Result<SeenModel> {
    let n = gram.n();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for a {n}x{n} Gram", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_ids.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: class_ids.len(),
        });
    }
    let present = (0..class_ids.len()).filter(|c| labels.contains(c)).count();
    if class_ids.len() < 2 || present < class_ids.len() {
        return Err(Error::SingleClass);
    }
    let solutions: Vec<Result<BinarySolution>> = (0..class_ids.len())
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(gram, &y, params)
        })
        .collect();
    let mut coefficients = DMatrix::zeros(n + 1, class_ids.len());
    let mut diagnostics = Vec::with_capacity(class_ids.len());
    for (c, sol) in solutions.into_iter().enumerate() {
        let sol = sol?;
        if !sol.converged {
            warn!(
                "SVM for class `{}` hit the update cap with KKT gap {:.3e}",
                class_ids[c], sol.kkt_gap
            );
        }
        coefficients.set_column(c, &sol.beta);
        diagnostics.push(ClassDiagnostics {
            class_id: class_ids[c].clone(),
            converged: sol.converged,
            kkt_gap: sol.kkt_gap,
            updates: sol.updates,
            dual_objective: sol.dual_objective,
        });
    }
    Ok(SeenModel {
        class_ids: class_ids.to_vec(),
        coefficients,
        diagnostics,
    })
}

/// `beta_y^T k(x)`.
pub fn decision_value(model: &SeenModel, class_index: usize, k_vec: &DVector<f64>) -> Result<f64> {
    if class_index >= model.n_classes() {
        return Err(Error::IndexOutOfRange {
            index: class_index,
            len: model.n_classes(),
        });
    }
    if k_vec.len() != model.coefficients.nrows() {
        return Err(Error::DimensionMismatch {
            expected: model.coefficients.nrows(),
            actual: k_vec.len(),
        });
    }
    Ok(model.coefficients.column(class_index).dot(k_vec))
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Multiclass decision over classifier columns.
pub fn multiclass_decide(columns: &DMatrix<f64>, k_vec: &DVector<f64>) -> Result<usize> {
    if columns.ncols() == 0 {
        return Err(Error::EmptyInput("no classifiers".into()));
    }
    if k_vec.len() != columns.nrows() {
        return Err(Error::DimensionMismatch {
            expected: columns.nrows(),
            actual: k_vec.len(),
        });
    }
    let scores = columns.tr_mul(k_vec);
    Ok(argmax(scores.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Samples;
    use crate::kernels::{gram, kernel_vector, KernelSpec};

    fn line(points: &[f64]) -> Samples {
        Samples::new(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn separable_line() {
        let x = line(&[-1.0, -2.0, 1.0, 2.0]);
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        let y = [-1.0, -1.0, 1.0, 1.0];
        let sol = train_binary(&g, &y, &SvmParams::default()).unwrap();
        assert!(sol.converged);
        for (i, &yi) in y.iter().enumerate() {
            let kv = kernel_vector(&KernelSpec::Linear, &x, x.row(i), true).unwrap();
            let f = sol.beta.dot(&kv);
            assert!(f * yi > 0.0, "point {i}: f = {f}");
        }
        let sum: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn label_flip_negates_beta() {
        let x = line(&[-1.0, -2.0, 1.0, 2.0]);
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        let m = train_one_vs_all(&g, &[0, 0, 1, 1], &["a".into(), "b".into()], &SvmParams::default())
            .unwrap();
        let a = m.coefficients.column(0);
        let b = m.coefficients.column(1);
        for i in 0..5 {
            assert!((a[i] + b[i]).abs() < 1e-12, "row {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = line(&[1.0, 2.0]);
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        assert!(matches!(
            train_binary(&g, &[1.0, 1.0], &SvmParams::default()),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            train_one_vs_all(&g, &[0, 0], &["a".into()], &SvmParams::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn update_cap_reports_not_converged() {
        let x = line(&[-1.0, -2.0, 1.0, 2.0, 0.1, -0.1]);
        let g = gram(&KernelSpec::rbf(1.0), &x).unwrap();
        let params = SvmParams {
            max_updates: 1,
            tol: 1e-12,
            ..SvmParams::default()
        };
        let sol = train_binary(&g, &[-1.0, -1.0, 1.0, 1.0, -1.0, 1.0], &params).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.updates, 1);
    }

    #[test]
    fn class_weighting_scales_box() {
        let x = line(&[-1.0, -2.0, -3.0, 1.0]);
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        let params = SvmParams {
            class_weighting: true,
            ..SvmParams::default()
        };
        let sol = train_binary(&g, &[-1.0, -1.0, -1.0, 1.0], &params).unwrap();
        assert!((sol.upper[3] - 2.0).abs() < 1e-15);
        assert!((sol.upper[0] - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn decision_value_examples() {
        let mut coef = DMatrix::zeros(4, 2);
        coef[(0, 0)] = 1.0;
        let model = SeenModel {
            class_ids: vec!["a".into(), "b".into()],
            coefficients: coef,
            diagnostics: vec![],
        };
        let kv = DVector::from_vec(vec![3.0, 0.5, 0.2, 1.0]);
        assert_eq!(decision_value(&model, 0, &kv).unwrap(), 3.0);
        assert_eq!(decision_value(&model, 1, &kv).unwrap(), 0.0);
        assert!(matches!(
            decision_value(&model, 2, &kv),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn shared_bias_shift_keeps_decision() {
        let cols = DMatrix::from_row_slice(3, 3, &[0.2, -0.4, 0.9, 1.0, 0.3, -0.2, 0.1, 0.0, -0.3]);
        let kv = DVector::from_vec(vec![0.7, 0.4, 1.0]);
        let before = multiclass_decide(&cols, &kv).unwrap();
        let mut shifted = cols.clone();
        for c in 0..3 {
            shifted[(2, c)] += 5.0;
        }
        assert_eq!(multiclass_decide(&shifted, &kv).unwrap(), before);
    }
}
