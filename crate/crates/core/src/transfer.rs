//! Learning the transfer matrix `T` (`N_sc x (N + 1)`).
//!
//! With `s_ij = g(e_i)^T T k(x_j)` the response of side-information item `i`
//! to training sample `j`, the objective is
//!
//! ```text
//! L(T) = 1/2 ||T||_F^2
//!      + lambda1 * sum_ij c_ij
//!      + lambda2 * ||B^T - G T||_F^2
//!
//! c_ij = max(0, l - s_ij)^2        if sample j belongs to class i
//!      = r * max(0, s_ij - u)^2    otherwise,   r = n_diff / n_same
//! ```
//!
//! Responses for all pairs at once are `S = G T K`, so the hinge part of the
//! gradient is `lambda1 * G V K^T` with `V` the per-pair hinge derivatives.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, SeededStream};

/// Above this many `(class, sample)` pairs a stratified subsample is used.
pub const DEFAULT_PAIR_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Lower bound on same-class responses.
    pub l: f64,
    /// Upper bound on different-class responses.
    pub u: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.0,
            l: 1.0,
            u: -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferProblem {
    g: DMatrix<f64>,
    k: DMatrix<f64>,
    b: DMatrix<f64>,
    labels: Vec<usize>,
    params: TransferParams,
    /// Per-pair weight: 1 for active same-class pairs, `r` for active
    /// different-class pairs, 0 for pairs left out of the subsample.
    weights: DMatrix<f64>,
    r: f64,
    pair_cap: usize,
    seed: u64,
}

impl TransferProblem {
    /// * `g`: `N_sc x N_sc` side-information Gram
    /// * `k`: `(N + 1) x N`, column `j` is `k(x_j)` with the bias entry last
    /// * `b`: `(N + 1) x N_sc` seen classifier bank
    /// * `labels[j]`: seen-class index of training sample `j`
    pub fn new(
        g: DMatrix<f64>,
        k: DMatrix<f64>,
        b: DMatrix<f64>,
        labels: Vec<usize>,
        params: TransferParams,
    ) -> Result<Self> {
        Self::with_pair_cap(g, k, b, labels, params, DEFAULT_PAIR_CAP, 0)
    }

    pub fn with_pair_cap(
        g: DMatrix<f64>,
        k: DMatrix<f64>,
        b: DMatrix<f64>,
        labels: Vec<usize>,
        params: TransferParams,
        pair_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        let n_sc = g.nrows();
        let n = labels.len();
        if g.ncols() != n_sc || n_sc == 0 {
            return Err(Error::ShapeMismatch("G must be square and nonempty".into()));
        }
        if k.nrows() != n + 1 || k.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "K is {}x{}, expected {}x{n}",
                k.nrows(),
                k.ncols(),
                n + 1
            )));
        }
        if b.nrows() != n + 1 || b.ncols() != n_sc {
            return Err(Error::ShapeMismatch(format!(
                "B is {}x{}, expected {}x{n_sc}",
                b.nrows(),
                b.ncols(),
                n + 1
            )));
        }
        for i in 0..n_sc {
            for j in 0..i {
                if (g[(i, j)] - g[(j, i)]).abs() > 1e-10 * (1.0 + g[(i, j)].abs()) {
                    return Err(Error::InvalidParameter("G is not symmetric".into()));
                }
            }
        }
        if k.row(n).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidParameter("last row of K must be the bias slot 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_sc) {
            return Err(Error::IndexOutOfRange { index: bad, len: n_sc });
        }
        let p = params;
        if !(p.lambda1 >= 0.0 && p.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter("lambda1 and lambda2 must be >= 0".into()));
        }
        if !(p.l > p.u) {
            return Err(Error::InvalidParameter(format!(
                "same-class bound l = {} must exceed different-class bound u = {}",
                p.l, p.u
            )));
        }
        if g.iter().chain(k.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("transfer problem data".into()));
        }
        let mut problem = Self {
            g,
            k,
            b,
            labels,
            params,
            weights: DMatrix::zeros(n_sc, n),
            r: 0.0,
            pair_cap,
            seed,
        };
        let active = problem.draw_pairs(0);
        problem.set_active(&active)?;
        Ok(problem)
    }

    pub fn n_classes(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn params(&self) -> &TransferParams {
        &self.params
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `n_diff / n_same` over the active pair set.
    pub fn r_weight(&self) -> f64 {
        self.r
    }

    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn is_subsampled(&self) -> bool {
        self.n_classes() * self.n_samples() > self.pair_cap
    }

    /// Active-pair mask for an epoch: every pair, or a seeded stratified
    /// subsample that keeps the same/different proportions.
    fn draw_pairs(&self, epoch: u64) -> DMatrix<bool> {
        let (n_sc, n) = (self.n_classes(), self.n_samples());
        if !self.is_subsampled() {
            return DMatrix::from_element(n_sc, n, true);
        }
        let frac = self.pair_cap as f64 / (n_sc * n) as f64;
        let n_same = n;
        let n_diff = n * (n_sc - 1);
        let want_same = ((frac * n_same as f64).round() as usize).max(1);
        let want_diff = ((frac * n_diff as f64).round() as usize).max(1);
        let mut rng = SeededStream::new(self.seed.wrapping_add(epoch), stream::PAIRS);
        let mut mask = DMatrix::from_element(n_sc, n, false);
        // Selection sampling keeps exact stratum sizes in one pass.
        let (mut left_same, mut need_same) = (n_same, want_same);
        let (mut left_diff, mut need_diff) = (n_diff, want_diff);
        for j in 0..n {
            for i in 0..n_sc {
                let same = self.labels[j] == i;
                let (left, need) = if same {
                    (&mut left_same, &mut need_same)
                } else {
                    (&mut left_diff, &mut need_diff)
                };
                if *need > 0 && (rng.uniform() * (*left as f64)) < *need as f64 {
                    mask[(i, j)] = true;
                    *need -= 1;
                }
                *left -= 1;
            }
        }
        mask
    }

    fn set_active(&mut self, active: &DMatrix<bool>) -> Result<()> {
        let (n_sc, n) = (self.n_classes(), self.n_samples());
        let mut ns = 0usize;
        let mut nd = 0usize;
        for j in 0..n {
            for i in 0..n_sc {
                if active[(i, j)] {
                    if self.labels[j] == i {
                        ns += 1;
                    } else {
                        nd += 1;
                    }
                }
            }
        }
        if ns == 0 {
            return Err(Error::InvalidParameter("no same-class pairs".into()));
        }
        self.r = nd as f64 / ns as f64;
        for j in 0..n {
            for i in 0..n_sc {
                self.weights[(i, j)] = match (active[(i, j)], self.labels[j] == i) {
                    (false, _) => 0.0,
                    (true, true) => 1.0,
                    (true, false) => self.r,
                };
            }
        }
        Ok(())
    }

    fn check_shape(&self, t: &DMatrix<f64>) -> Result<()> {
        let (rows, cols) = (self.n_classes(), self.n_samples() + 1);
        if t.nrows() != rows || t.ncols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "T is {}x{}, expected {rows}x{cols}",
                t.nrows(),
                t.ncols()
            )));
        }
        Ok(())
    }

    /// `S = G T K`, entry `(i, j)` is `g(e_i)^T T k(x_j)`.
    pub fn responses(&self, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(t)?;
        Ok(&self.g * t * &self.k)
    }

    /// Weighted squared hinge terms, and their derivatives w.r.t. `s_ij`
    /// (including the pair weight).
    fn hinges(&self, s: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let TransferParams { l, u, .. } = self.params;
        let mut total = 0.0;
        let mut v = DMatrix::zeros(s.nrows(), s.ncols());
        for j in 0..s.ncols() {
            for i in 0..s.nrows() {
                let w = self.weights[(i, j)];
                if w == 0.0 {
                    continue;
                }
                if self.labels[j] == i {
                    let h = (l - s[(i, j)]).max(0.0);
                    total += w * h * h;
                    v[(i, j)] = -2.0 * w * h;
                } else {
                    let h = (s[(i, j)] - u).max(0.0);
                    total += w * h * h;
                    v[(i, j)] = 2.0 * w * h;
                }
            }
        }
        (total, v)
    }

    /// `||B^T - G T||_F^2`.
    pub fn classifier_penalty(&self, t: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(t)?;
        Ok((self.b.transpose() - &self.g * t).norm_squared())
    }

    /// Weighted hinge sum without the `lambda1` factor.
    pub fn constraint_loss(&self, t: &DMatrix<f64>) -> Result<f64> {
        let s = self.responses(t)?;
        Ok(self.hinges(&s).0)
    }

    pub fn objective(&self, t: &DMatrix<f64>) -> Result<f64> {
        Ok(self.objective_and_gradient(t)?.0)
    }

    pub fn gradient(&self, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.objective_and_gradient(t)?.1)
    }

    pub fn objective_and_gradient(&self, t: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.check_shape(t)?;
        let TransferParams { lambda1, lambda2, .. } = self.params;
        let mut f = 0.5 * t.norm_squared();
        let mut grad = t.clone();
        if lambda1 > 0.0 {
            let gt = &self.g * t;
            let s = &gt * &self.k;
            let (loss, v) = self.hinges(&s);
            f += lambda1 * loss;
            grad += (&self.g * v * self.k.transpose()) * lambda1;
        }
        if lambda2 > 0.0 {
            let resid = &self.g * t - self.b.transpose();
            f += lambda2 * resid.norm_squared();
            grad += (&self.g * resid) * (2.0 * lambda2);
        }
        Ok((f, grad))
    }

    /// Minimizer of the `lambda1 = 0` objective:
    /// `(I + 2 lambda2 G^2) T = 2 lambda2 G B^T`.
    pub fn ridge_solution(&self) -> Result<DMatrix<f64>> {
        let n_sc = self.n_classes();
        let lambda2 = self.params.lambda2;
        let m = DMatrix::identity(n_sc, n_sc) + &self.g * &self.g * (2.0 * lambda2);
        let rhs = &self.g * self.b.transpose() * (2.0 * lambda2);
        let chol = Cholesky::new(m).ok_or_else(|| {
            Error::NumericalBreakdown("I + 2 lambda2 G^2 is not positive definite".into())
        })?;
        Ok(chol.solve(&rhs))
    }

    /// `(G + eps I)^-1 B^T` with `eps = 1e-6 trace(G) / N_sc`.
    pub fn regularized_inverse_init(&self) -> Result<DMatrix<f64>> {
        let n_sc = self.n_classes();
        let eps = 1e-6 * self.g.trace().abs() / n_sc as f64;
        let m = &self.g + DMatrix::identity(n_sc, n_sc) * eps.max(f64::MIN_POSITIVE);
        m.lu()
            .solve(&self.b.transpose())
            .filter(|t| t.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::NumericalBreakdown("G + eps I is singular".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `(G + eps I)^-1 B^T`.
    #[default]
    RegularizedInverse,
    Zero,
    #[serde(skip)]
    Given(DMatrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub armijo: f64,
    pub contraction: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-6,
            memory: 10,
            armijo: 1e-4,
            contraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    /// `N_sc x (N + 1)`.
    pub t: DMatrix<f64>,
    /// Objective after every accepted iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn initial_point(problem: &TransferProblem, init: &InitStrategy) -> Result<DMatrix<f64>> {
    let (rows, cols) = (problem.n_classes(), problem.n_samples() + 1);
    match init {
        InitStrategy::RegularizedInverse => problem.regularized_inverse_init(),
        InitStrategy::Zero => Ok(DMatrix::zeros(rows, cols)),
        InitStrategy::Given(t) => {
            problem.check_shape(t)?;
            Ok(t.clone())
        }
    }
}

/// Limited-memory BFGS with Armijo backtracking.
pub fn solve(problem: &TransferProblem, init: &InitStrategy, opts: &LbfgsOptions) -> Result<TransferMatrix> {
    let mut t = initial_point(problem, init)?;
    let (mut f, mut grad) = problem.objective_and_gradient(&t)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![f];
    let mut s_hist: Vec<DMatrix<f64>> = Vec::with_capacity(opts.memory);
    let mut y_hist: Vec<DMatrix<f64>> = Vec::with_capacity(opts.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if grad.norm() <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = two_loop(&grad, &s_hist, &y_hist);
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = -&grad;
            slope = -grad.norm_squared();
        }
        let mut step = if s_hist.is_empty() {
            (1.0 / grad.norm()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..80 {
            let cand = &t + &dir * step;
            let (fc, gc) = problem.objective_and_gradient(&cand)?;
            if fc.is_finite() && fc <= f + opts.armijo * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= opts.contraction;
        }
        let Some((t_new, f_new, g_new)) = accepted else {
            debug!("line search stalled at iteration {iterations}, |grad| = {:.3e}", grad.norm());
            break;
        };
        let s = &t_new - &t;
        let y = &g_new - &grad;
        if s.dot(&y) > 1e-12 * s.norm() * y.norm() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        t = t_new;
        f = f_new;
        grad = g_new;
        trace.push(f);
        iterations += 1;
    }
    if !converged && grad.norm() <= opts.grad_tol {
        converged = true;
    }
    if !converged {
        warn!(
            "transfer solver stopped after {iterations} iterations with |grad| = {:.3e}",
            grad.norm()
        );
    }
    Ok(TransferMatrix {
        t,
        objective_trace: trace,
        converged,
        iterations,
    })
}

fn two_loop(grad: &DMatrix<f64>, s_hist: &[DMatrix<f64>], y_hist: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut q = grad.clone();
    let m = s_hist.len();
    let mut alphas = vec![0.0; m];
    for i in (0..m).rev() {
        let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
        alphas[i] = rho * s_hist[i].dot(&q);
        q -= &y_hist[i] * alphas[i];
    }
    if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
        q *= s.dot(y) / y.norm_squared();
    }
    for i in 0..m {
        let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
        let beta = rho * y_hist[i].dot(&q);
        q += &s_hist[i] * (alphas[i] - beta);
    }
    -q
}

/// Cyclic single-constraint updates.
///
/// Each pair `(i, j)` is one constraint `sigma * g_i^T T k_j >= target`
/// (`sigma = +1, target = l` for same-class pairs, `sigma = -1, target = -u`
/// otherwise). Every visit moves `T` along the constraint normal
/// `M^-1 g_i k_j^T`, where `M = I + 2 lambda2 G^2` is the Hessian of the
/// regularizers, by the closed-form amount that maximizes the dual in that
/// one coordinate. The squared hinge shows up as the `1 / (2 lambda1 w)`
/// term, so the fixed point is the exact minimizer of `L(T)`; as
/// `lambda1 -> inf` each visit becomes a plain projection onto the violated
/// halfspace. Starts from the minimizer of the regularizers alone.
pub fn solve_bregman(problem: &TransferProblem, passes: usize) -> Result<TransferMatrix> {
    let (n_sc, n) = (problem.n_classes(), problem.n_samples());
    let TransferParams { lambda1, lambda2, l, u } = problem.params;
    let mut t = if lambda2 > 0.0 {
        problem.ridge_solution()?
    } else {
        DMatrix::zeros(n_sc, n + 1)
    };
    let mut trace = vec![problem.objective(&t)?];
    if lambda1 == 0.0 {
        return Ok(TransferMatrix {
            t,
            objective_trace: trace,
            converged: true,
            iterations: 0,
        });
    }
    let g = &problem.g;
    let k = &problem.k;
    let m = DMatrix::identity(n_sc, n_sc) + g * g * (2.0 * lambda2);
    let m_inv_g = Cholesky::new(m)
        .ok_or_else(|| Error::NumericalBreakdown("regularizer Hessian is singular".into()))?
        .solve(g);
    let g_m_inv_g = g * &m_inv_g;
    let col_norms: Vec<f64> = (0..n).map(|j| k.column(j).norm_squared()).collect();
    let mut alpha = DMatrix::<f64>::zeros(n_sc, n);
    let mut gt = g * &t;
    let mut converged = false;
    let mut epochs = 0;

    for epoch in 0..passes {
        let active = if problem.is_subsampled() {
            problem.draw_pairs(epoch as u64)
        } else {
            DMatrix::from_element(n_sc, n, true)
        };
        let mut max_change = 0.0f64;
        for j in 0..n {
            let kj = k.column(j);
            for i in 0..n_sc {
                if !active[(i, j)] {
                    continue;
                }
                let same = problem.labels[j] == i;
                let (sigma, target, w) = if same { (1.0, l, 1.0) } else { (-1.0, -u, problem.r) };
                let s = gt.row(i).dot(&kj.transpose());
                let slack_term = 1.0 / (2.0 * lambda1 * w);
                let curvature = g_m_inv_g[(i, i)] * col_norms[j] + slack_term;
                let a_old = alpha[(i, j)];
                let grad = target - sigma * s - a_old * slack_term;
                let a_new = (a_old + grad / curvature).max(0.0);
                let delta = a_new - a_old;
                if delta == 0.0 {
                    continue;
                }
                alpha[(i, j)] = a_new;
                let coef = delta * sigma;
                t.ger(coef, &m_inv_g.column(i), &kj, 1.0);
                gt.ger(coef, &g_m_inv_g.column(i), &kj, 1.0);
                max_change = max_change.max(delta.abs() * g_m_inv_g[(i, i)].abs().sqrt() * col_norms[j].sqrt());
            }
        }
        epochs += 1;
        trace.push(problem.objective(&t)?);
        if max_change <= 1e-12 {
            converged = true;
            break;
        }
    }
    Ok(TransferMatrix {
        t,
        objective_trace: trace,
        converged,
        iterations: epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(params: TransferParams) -> TransferProblem {
        // 2 classes, 3 samples.
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let k = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 1.0, 1.0, 1.0, 1.0],
        );
        let b = DMatrix::from_row_slice(4, 2, &[0.5, -0.5, 0.4, -0.4, -0.6, 0.6, 0.1, -0.1]);
        TransferProblem::new(g, k, b, vec![0, 0, 1], params).unwrap()
    }

    #[test]
    fn zero_matrix_with_no_penalties_is_zero() {
        let p = tiny(TransferParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..TransferParams::default()
        });
        assert_eq!(p.objective(&DMatrix::zeros(2, 4)).unwrap(), 0.0);
    }

    #[test]
    fn gradient_is_t_without_penalties() {
        let p = tiny(TransferParams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..TransferParams::default()
        });
        let t = DMatrix::from_fn(2, 4, |i, j| (i as f64) - 0.3 * j as f64);
        assert_eq!(p.gradient(&t).unwrap(), t);
    }

    #[test]
    fn r_weight_counts_pairs() {
        let p = tiny(TransferParams::default());
        assert_eq!(p.r_weight(), 3.0 / 3.0);
        assert_eq!(p.pair_weight(1, 0), 1.0);
    }

    #[test]
    fn rejects_bad_bounds_and_shapes() {
        let g = DMatrix::identity(2, 2);
        let k = DMatrix::from_element(3, 2, 1.0);
        let b = DMatrix::zeros(3, 2);
        let bad = TransferParams {
            l: -1.0,
            u: 1.0,
            ..TransferParams::default()
        };
        assert!(TransferProblem::new(g.clone(), k.clone(), b.clone(), vec![0, 1], bad).is_err());
        assert!(matches!(
            TransferProblem::new(g.clone(), k.clone(), DMatrix::zeros(2, 2), vec![0, 1], TransferParams::default()),
            Err(Error::ShapeMismatch(_))
        ));
        let p = TransferProblem::new(g, k, b, vec![0, 1], TransferParams::default()).unwrap();
        assert!(matches!(p.objective(&DMatrix::zeros(2, 2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn satisfied_constraints_leave_bregman_at_start() {
        let g = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        );
        let b = DMatrix::from_row_slice(4, 2, &[3.0, -3.0, 3.0, -3.0, -3.0, 3.0, 0.0, 0.0]);
        let params = TransferParams {
            lambda2: 10.0,
            ..TransferParams::default()
        };
        let p = TransferProblem::new(g, k, b, vec![0, 0, 1], params).unwrap();
        let start = p.ridge_solution().unwrap();
        assert_eq!(p.constraint_loss(&start).unwrap(), 0.0);
        let out = solve_bregman(&p, 5).unwrap();
        assert_eq!(out.t, start);
        assert!(out.converged);
    }

    #[test]
    fn subsample_keeps_ratio() {
        let n_sc = 4;
        let n = 40;
        let g = DMatrix::identity(n_sc, n_sc);
        let k = DMatrix::from_fn(n + 1, n, |i, _| if i == n { 1.0 } else { 0.1 });
        let b = DMatrix::zeros(n + 1, n_sc);
        let labels: Vec<usize> = (0..n).map(|j| j % n_sc).collect();
        let p = TransferProblem::with_pair_cap(g, k, b, labels, TransferParams::default(), 80, 3)
            .unwrap();
        assert!(p.is_subsampled());
        let active = p.weights.iter().filter(|&&w| w > 0.0).count();
        assert_eq!(active, 80);
        assert!((p.r_weight() - 3.0).abs() < 1e-12);
    }
}
