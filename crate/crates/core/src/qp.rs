//! Dense convex QP with a box, one equality and an optional `>=` inequality:
//!
//! ```text
//! min 1/2 x^T Q x + c^T x
//! s.t. a_eq^T x = b_eq,  a_in^T x >= l_in,  lo <= x <= hi
//! ```
//!
//! Solved by ADMM: the quadratic step uses a cached Cholesky factor of
//! `Q + rho I`, the constraint step is an exact Euclidean projection onto
//! the feasible polytope. Whenever the projection's active set looks
//! settled, the equality-constrained subproblem on the free variables is
//! solved directly ("polishing"), which usually lands on the exact optimum.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxedQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// `a^T x = b`
    pub eq: LinearConstraint,
    /// `a^T x >= b`
    pub ineq: Option<LinearConstraint>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BoxedQp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::EmptyInput("QP has no variables".into()));
        }
        let shapes_ok = self.q.nrows() == n
            && self.q.ncols() == n
            && self.eq.a.len() == n
            && self.lo.len() == n
            && self.hi.len() == n
            && self.ineq.as_ref().is_none_or(|c| c.a.len() == n);
        if !shapes_ok {
            return Err(Error::ShapeMismatch("QP data sizes disagree".into()));
        }
        let finite = self.q.iter().chain(self.c.iter()).chain(self.eq.a.iter()).all(|v| v.is_finite())
            && self.eq.b.is_finite()
            && self.ineq.as_ref().is_none_or(|c| c.b.is_finite() && c.a.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFiniteValue("QP data".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!("Q is not symmetric at ({i}, {j})")));
                }
            }
            if self.lo[i] > self.hi[i] || self.lo[i].is_nan() || self.hi[i].is_nan() {
                return Err(Error::InvalidParameter(format!("empty box for variable {i}")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// Largest violation of any constraint at `x`.
    pub fn infeasibility(&self, x: &DVector<f64>) -> f64 {
        let mut v = (self.eq.a.dot(x) - self.eq.b).abs();
        if let Some(c) = &self.ineq {
            v = v.max(c.b - c.a.dot(x));
        }
        for i in 0..x.len() {
            v = v.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
        }
        v.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub infeasibility: f64,
    /// `||x - P(x - grad f(x))||_inf`, zero exactly at a KKT point.
    pub optimality_residual: f64,
    /// Diagonal shift applied to make Q positive semidefinite.
    pub psd_shift: f64,
}

/// Exact projection onto `{lo <= x <= hi, a_eq^T x = b_eq, a_in^T x >= l_in}`.
#[derive(Debug, Clone)]
pub struct FeasibleSet<'a> {
    eq: &'a LinearConstraint,
    ineq: Option<&'a LinearConstraint>,
    lo: &'a DVector<f64>,
    hi: &'a DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub x: DVector<f64>,
    /// Multiplier on the equality normal.
    pub mu: f64,
    /// Multiplier on the inequality normal (>= 0).
    pub nu: f64,
}

impl<'a> FeasibleSet<'a> {
    pub fn of(qp: &'a BoxedQp) -> Self {
        Self {
            eq: &qp.eq,
            ineq: qp.ineq.as_ref(),
            lo: &qp.lo,
            hi: &qp.hi,
        }
    }

    /// Check that the set is nonempty. The box/equality part is an interval
    /// test; with an inequality, `max a_in^T x` over box and equality is
    /// a one-equality LP solved through its piecewise-linear dual.
    pub fn check_feasible(&self) -> Result<()> {
        let a = &self.eq.a;
        let n = a.len();
        let (mut smin, mut smax, mut scale) = (0.0, 0.0, self.eq.b.abs());
        for i in 0..n {
            let (p, q) = (a[i] * self.lo[i], a[i] * self.hi[i]);
            smin += p.min(q);
            smax += p.max(q);
            scale += p.abs().max(q.abs());
        }
        let eps = 1e-12 * (1.0 + scale);
        if self.eq.b < smin - eps || self.eq.b > smax + eps {
            return Err(Error::QpInfeasible(format!(
                "box and equality: a^T x ranges over [{smin}, {smax}] but must equal {}",
                self.eq.b
            )));
        }
        if let Some(ineq) = self.ineq {
            let best = self.max_linear(&ineq.a);
            let scale = 1.0 + ineq.b.abs() + best.abs();
            if best < ineq.b - 1e-12 * scale {
                return Err(Error::QpInfeasible(format!(
                    "linear inequality: largest attainable value {best} is below {}",
                    ineq.b
                )));
            }
        }
        Ok(())
    }

    /// `max r^T x` over box and equality.
    fn max_linear(&self, r: &DVector<f64>) -> f64 {
        let a = &self.eq.a;
        let b = self.eq.b;
        let dual = |mu: f64| -> f64 {
            let mut v = mu * b;
            for i in 0..a.len() {
                let s = r[i] - mu * a[i];
                v += (s * self.lo[i]).max(s * self.hi[i]);
            }
            v
        };
        let breaks: Vec<f64> = (0..a.len()).filter(|&i| a[i] != 0.0).map(|i| r[i] / a[i]).collect();
        if breaks.is_empty() {
            return dual(0.0);
        }
        breaks.into_iter().map(dual).fold(f64::INFINITY, f64::min)
    }

    /// Projection onto box and equality of `w + t d`, as a function of `t`
    /// only through `w`; returns the point and the equality multiplier.
    fn project_box_eq(&self, w: &DVector<f64>) -> (DVector<f64>, f64) {
        let a = &self.eq.a;
        let n = a.len();
        let clip = |i: usize, mu: f64| (w[i] + mu * a[i]).clamp(self.lo[i], self.hi[i]);
        let h = |mu: f64| -> f64 { (0..n).map(|i| a[i] * clip(i, mu)).sum() };
        let mut breaks: Vec<f64> = Vec::with_capacity(2 * n);
        for i in 0..n {
            if a[i] != 0.0 {
                breaks.push((self.lo[i] - w[i]) / a[i]);
                breaks.push((self.hi[i] - w[i]) / a[i]);
            }
        }
        let target = self.eq.b;
        if breaks.is_empty() {
            return (DVector::from_fn(n, |i, _| clip(i, 0.0)), 0.0);
        }
        breaks.sort_by(|x, y| x.total_cmp(y));
        breaks.dedup();
        // h is nondecreasing; find the last breakpoint with h <= target.
        if h(breaks[0]) >= target {
            let mu = breaks[0];
            return (DVector::from_fn(n, |i, _| clip(i, mu)), mu);
        }
        let last = *breaks.last().unwrap();
        if h(last) <= target {
            return (DVector::from_fn(n, |i, _| clip(i, last)), last);
        }
        let (mut lo_k, mut hi_k) = (0usize, breaks.len() - 1);
        while hi_k - lo_k > 1 {
            let mid = (lo_k + hi_k) / 2;
            if h(breaks[mid]) <= target {
                lo_k = mid;
            } else {
                hi_k = mid;
            }
        }
        let (m0, m1) = (breaks[lo_k], breaks[hi_k]);
        let (h0, h1) = (h(m0), h(m1));
        let mu = if h1 > h0 {
            (m0 + (target - h0) / (h1 - h0) * (m1 - m0)).clamp(m0, m1)
        } else {
            m0
        };
        (DVector::from_fn(n, |i, _| clip(i, mu)), mu)
    }

    pub fn project(&self, y: &DVector<f64>) -> Projection {
        let (x0, mu0) = self.project_box_eq(y);
        let ineq = match self.ineq {
            Some(c) => c,
            None => {
                return Projection {
                    x: x0,
                    mu: mu0,
                    nu: 0.0,
                }
            }
        };
        let slack = |x: &DVector<f64>| ineq.a.dot(x) - ineq.b;
        if slack(&x0) >= 0.0 || ineq.a.norm_squared() == 0.0 {
            return Projection {
                x: x0,
                mu: mu0,
                nu: 0.0,
            };
        }
        // slack(P(y + nu a_in)) is nondecreasing in nu.
        let at = |nu: f64| {
            let shifted = y + &ineq.a * nu;
            let (x, mu) = self.project_box_eq(&shifted);
            let s = slack(&x);
            (x, mu, s)
        };
        let mut lo_nu = 0.0;
        let mut lo_s = slack(&x0);
        let mut hi_nu = 1.0 / ineq.a.norm_squared().sqrt();
        let mut hi = at(hi_nu);
        let mut guard = 0;
        while hi.2 < 0.0 && guard < 200 {
            lo_nu = hi_nu;
            lo_s = hi.2;
            hi_nu *= 2.0;
            hi = at(hi_nu);
            guard += 1;
        }
        // Illinois variant of regula falsi; the slack is piecewise linear.
        let mut side = 0i8;
        for _ in 0..200 {
            if hi.2 == 0.0 || hi_nu - lo_nu <= 1e-15 * hi_nu.max(1e-300) {
                break;
            }
            let mut t = lo_nu + (hi_nu - lo_nu) * (-lo_s) / (hi.2 - lo_s);
            if !(t > lo_nu && t < hi_nu) {
                t = 0.5 * (lo_nu + hi_nu);
            }
            let mid = at(t);
            if mid.2 >= 0.0 {
                hi_nu = t;
                let exact = mid.2 == 0.0;
                hi = mid;
                if exact {
                    break;
                }
                if side == 1 {
                    lo_s *= 0.5;
                }
                side = 1;
            } else {
                lo_nu = t;
                lo_s = mid.2;
                if side == -1 {
                    hi.2 *= 0.5;
                }
                side = -1;
            }
        }
        // Re-evaluate the feasible end so the stored slack is exact.
        let (x, mu, _) = at(hi_nu);
        Projection { x, mu, nu: hi_nu }
    }
}

fn optimality_residual(qp: &BoxedQp, set: &FeasibleSet<'_>, x: &DVector<f64>) -> f64 {
    let g = &qp.q * x + &qp.c;
    let p = set.project(&(x - g));
    (x - p.x).amax()
}

/// Symmetrize Q and shift it to be PSD when its smallest eigenvalue is
/// below -1e-8. Returns the repaired matrix and the shift used.
pub fn repair_psd(q: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (q + q.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        let shift = min.abs() + 1e-8;
        warn!("QP matrix is indefinite (min eigenvalue {min:.3e}); shifting by {shift:.3e}");
        let n = sym.nrows();
        (sym + DMatrix::identity(n, n) * shift, shift)
    } else {
        (sym, 0.0)
    }
}

pub fn solve_qp(qp: &BoxedQp, settings: &QpSettings) -> Result<QpSolution> {
    qp.validate()?;
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter("QP tolerance must be positive".into()));
    }
    FeasibleSet::of(qp).check_feasible()?;

    let (q, psd_shift) = repair_psd(&qp.q);
    let work = BoxedQp { q, ..qp.clone() };
    let set = FeasibleSet::of(&work);
    let n = work.n();
    let tol = settings.tol;

    let diag_mean = (0..n).map(|i| work.q[(i, i)].abs()).sum::<f64>() / n as f64;
    let mut rho = (0.1 * diag_mean).clamp(1e-6, 1e6);
    let relax = 1.6;
    let mut chol = factor(&work.q, rho)?;

    let mut z = set.project(&DVector::zeros(n)).x;
    let mut u = DVector::zeros(n);
    let mut best = z.clone();
    let mut best_res = optimality_residual(&work, &set, &z);
    let finish = |x: DVector<f64>, status, iterations, res: f64| {
        let infeasibility = work.infeasibility(&x);
        QpSolution {
            objective: qp.objective(&x),
            x,
            status,
            iterations,
            infeasibility,
            optimality_residual: res,
            psd_shift,
        }
    };
    if best_res <= tol {
        return Ok(finish(best, QpStatus::Optimal, 0, best_res));
    }

    for iter in 1..=settings.max_iters {
        let rhs = (&z - &u) * rho - &work.c;
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown("ADMM iterate is not finite".into()));
        }
        let xr = &x * relax + &z * (1.0 - relax);
        let w = &xr + &u;
        let proj = set.project(&w);
        let z_new = proj.x.clone();
        u = &w - &z_new;
        let r_prim = (&x - &z_new).amax();
        let r_dual = rho * (&z_new - &z).amax();
        z = z_new;

        if iter % 10 == 0 {
            let res = optimality_residual(&work, &set, &z);
            if res < best_res {
                best_res = res;
                best = z.clone();
            }
            if res <= tol {
                return Ok(finish(z, QpStatus::Optimal, iter, res));
            }
        }
        if iter % 25 == 0 {
            if let Some(p) = polish(&work, &set, &w, &proj, tol) {
                let res = optimality_residual(&work, &set, &p);
                if res <= tol && work.infeasibility(&p) <= tol {
                    return Ok(finish(p, QpStatus::Optimal, iter, res));
                }
            }
        }
        if iter % 50 == 0 {
            let new_rho = if r_prim > 10.0 * r_dual {
                rho * 2.0
            } else if r_dual > 10.0 * r_prim {
                rho * 0.5
            } else {
                rho
            };
            let new_rho = new_rho.clamp(1e-8, 1e8);
            if new_rho != rho {
                u *= rho / new_rho;
                rho = new_rho;
                chol = factor(&work.q, rho)?;
            }
        }
    }
    Ok(finish(best, QpStatus::MaxIters, settings.max_iters, best_res))
}

fn factor(q: &DMatrix<f64>, rho: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = q.nrows();
    Cholesky::new(q + DMatrix::identity(n, n) * rho)
        .ok_or_else(|| Error::NumericalBreakdown("Cholesky of Q + rho I failed".into()))
}

/// Solve the equality-constrained QP on the variables the projection left
/// free, with the rest fixed at their active bounds.
fn polish(
    qp: &BoxedQp,
    set: &FeasibleSet<'_>,
    w: &DVector<f64>,
    proj: &Projection,
    tol: f64,
) -> Option<DVector<f64>> {
    let n = qp.n();
    let mut x = DVector::zeros(n);
    let mut free = Vec::new();
    for i in 0..n {
        let mut v = w[i] + proj.mu * set.eq.a[i];
        if let Some(c) = set.ineq {
            v += proj.nu * c.a[i];
        }
        if v <= qp.lo[i] {
            x[i] = qp.lo[i];
        } else if v >= qp.hi[i] {
            x[i] = qp.hi[i];
        } else {
            free.push(i);
        }
    }
    let mut rows: Vec<&LinearConstraint> = vec![set.eq];
    if let (Some(c), true) = (set.ineq, proj.nu > 0.0) {
        rows.push(c);
    }
    let nf = free.len();
    let m = rows.len();
    if nf == 0 {
        return Some(x);
    }
    let mut kkt = DMatrix::zeros(nf + m, nf + m);
    let mut rhs = DVector::zeros(nf + m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = qp.q[(i, j)];
        }
        let fixed: f64 = (0..n).filter(|k| !free.contains(k)).map(|k| qp.q[(i, k)] * x[k]).sum();
        rhs[a] = -qp.c[i] - fixed;
        for (r, c) in rows.iter().enumerate() {
            kkt[(a, nf + r)] = -c.a[i];
            kkt[(nf + r, a)] = c.a[i];
        }
    }
    for (r, c) in rows.iter().enumerate() {
        let fixed: f64 = (0..n).filter(|k| !free.contains(k)).map(|k| c.a[k] * x[k]).sum();
        rhs[nf + r] = c.b - fixed;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (a, &i) in free.iter().enumerate() {
        let v = sol[a];
        if v < qp.lo[i] - tol || v > qp.hi[i] + tol {
            return None;
        }
        x[i] = v.clamp(qp.lo[i], qp.hi[i]);
    }
    if m == 2 && sol[nf + 1] < -tol {
        return None;
    }
    Some(x)
}
