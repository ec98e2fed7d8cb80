//! Reference implementations used as test oracles. Each one is written
//! from the mathematical definition with plain loops, independent of the
//! library code it checks.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};

use kernel_zsl::data::split_classes;
use kernel_zsl::eval::{evaluate, EvalReport, TestPoints};
use kernel_zsl::kernels::KernelConfig;
use kernel_zsl::pipeline::{learn_transfer, predict_unseen, train_seen, transfer_problem, PredictConfig, TransferConfig};
use kernel_zsl::predict::Method;
use kernel_zsl::rng::SeededStream;
use kernel_zsl::side::{side_gram, SideKernelConfig};
use kernel_zsl::svm::SvmParams;
use kernel_zsl::synth::{generate, SynthSpec};

pub fn rng(seed: u64) -> SeededStream {
    SeededStream::new(seed, 0x7e57)
}

pub fn uniform(r: &mut SeededStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.uniform()
}

pub fn random_matrix(r: &mut SeededStream, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.normal())
}

/// Gaussian RBF Gram, `exp(-gamma * ||a - b||)`, by explicit loops.
pub fn rbf_gram_loops(points: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut d2 = 0.0;
            for k in 0..points[i].len() {
                d2 += (points[i][k] - points[j][k]).powi(2);
            }
            g[(i, j)] = (-gamma * d2.sqrt()).exp();
        }
    }
    g
}

/// Transfer objective straight from its definition: a triple loop for every
/// response `g_i^T T k_j`, `r` counted from the labels.
pub struct TransferOracle<'a> {
    pub g: &'a DMatrix<f64>,
    pub k: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub labels: &'a [usize],
    pub lambda1: f64,
    pub lambda2: f64,
    pub l: f64,
    pub u: f64,
}

impl TransferOracle<'_> {
    pub fn r(&self) -> f64 {
        let n_sc = self.g.nrows();
        let mut same = 0.0;
        let mut diff = 0.0;
        for i in 0..n_sc {
            for &y in self.labels {
                if y == i {
                    same += 1.0;
                } else {
                    diff += 1.0;
                }
            }
        }
        diff / same
    }

    pub fn response(&self, t: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for a in 0..self.g.ncols() {
            for b in 0..t.ncols() {
                s += self.g[(i, a)] * t[(a, b)] * self.k[(b, j)];
            }
        }
        s
    }

    pub fn objective(&self, t: &DMatrix<f64>) -> f64 {
        let n_sc = self.g.nrows();
        let r = self.r();
        let mut reg = 0.0;
        for v in t.iter() {
            reg += v * v;
        }
        let mut hinge = 0.0;
        for i in 0..n_sc {
            for (j, &y) in self.labels.iter().enumerate() {
                let s = self.response(t, i, j);
                hinge += if y == i {
                    (self.l - s).max(0.0).powi(2)
                } else {
                    r * (s - self.u).max(0.0).powi(2)
                };
            }
        }
        let mut fit = 0.0;
        for i in 0..n_sc {
            for row in 0..t.ncols() {
                let mut pred = 0.0;
                for a in 0..n_sc {
                    pred += t[(a, row)] * self.g[(a, i)];
                }
                fit += (self.b[(row, i)] - pred).powi(2);
            }
        }
        0.5 * reg + self.lambda1 * hinge + self.lambda2 * fit
    }

    /// Smallest distance of any response to a hinge kink.
    pub fn kink_distance(&self, t: &DMatrix<f64>) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.g.nrows() {
            for j in 0..self.labels.len() {
                let s = self.response(t, i, j);
                d = d.min((s - self.l).abs()).min((s - self.u).abs());
            }
        }
        d
    }

    /// Central differences with step `h`.
    pub fn fd_gradient(&self, t: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(t.nrows(), t.ncols());
        let mut tp = t.clone();
        for a in 0..t.nrows() {
            for b in 0..t.ncols() {
                let v = t[(a, b)];
                tp[(a, b)] = v + h;
                let fp = self.objective(&tp);
                tp[(a, b)] = v - h;
                let fm = self.objective(&tp);
                tp[(a, b)] = v;
                out[(a, b)] = (fp - fm) / (2.0 * h);
            }
        }
        out
    }
}

/// Random transfer problem data: `(G, K, B, labels)` with an RBF `G` on
/// random class descriptors and an RBF `K'` on random samples.
pub fn random_transfer_data(
    r: &mut SeededStream,
    n_sc: usize,
    per_class: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let desc: Vec<Vec<f64>> = (0..n_sc).map(|_| (0..3).map(|_| r.normal()).collect()).collect();
    let g = rbf_gram_loops(&desc, 0.7);
    let labels: Vec<usize> = (0..n_sc).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
    let n = labels.len();
    let xs: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| (0..2).map(|d| desc[c][d] + 0.5 * r.normal()).collect())
        .collect();
    let kp = rbf_gram_loops(&xs, 0.8);
    let mut k = DMatrix::from_element(n + 1, n, 1.0);
    k.rows_mut(0, n).copy_from(&kp);
    let b = DMatrix::from_fn(n + 1, n_sc, |_, _| 0.5 * r.normal());
    (g, k, b, labels)
}

/// Brute-force minimizer of `1/2 x^T Q x + c^T x` over
/// `{lo <= x <= hi, a_eq^T x = b_eq, a_in^T x >= b_in}` for small `n`:
/// the equality is eliminated through the coordinate with the largest
/// `|a_eq|`, the remaining coordinates are searched on a grid, and the grid
/// is repeatedly recentred on the best point and shrunk.
pub fn grid_qp_oracle(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    eq: (&DVector<f64>, f64),
    ineq: Option<(&DVector<f64>, f64)>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = q.nrows();
    let pivot = (0..n).max_by(|&i, &j| eq.0[i].abs().total_cmp(&eq.0[j].abs())).unwrap();
    let free: Vec<usize> = (0..n).filter(|&i| i != pivot).collect();
    let m = free.len();
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(q * x)) + c.dot(x);
    let complete = |z: &[f64]| -> Option<DVector<f64>> {
        let mut x = DVector::zeros(n);
        let mut rest = eq.1;
        for (k, &i) in free.iter().enumerate() {
            x[i] = z[k];
            rest -= eq.0[i] * z[k];
        }
        x[pivot] = rest / eq.0[pivot];
        let slack = 1e-12 * (1.0 + hi[pivot].abs().max(lo[pivot].abs()));
        if x[pivot] < lo[pivot] - slack || x[pivot] > hi[pivot] + slack {
            return None;
        }
        x[pivot] = x[pivot].clamp(lo[pivot], hi[pivot]);
        if let Some((a, b)) = ineq {
            if a.dot(&x) < b {
                return None;
            }
        }
        Some(x)
    };
    const STEPS: usize = 24;
    let mut center: Vec<f64> = free.iter().map(|&i| 0.5 * (lo[i] + hi[i])).collect();
    let mut half: Vec<f64> = free.iter().map(|&i| 0.5 * (hi[i] - lo[i])).collect();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for _round in 0..60 {
        let mut idx = vec![0usize; m];
        loop {
            let z: Vec<f64> = (0..m)
                .map(|k| {
                    let i = free[k];
                    let v = center[k] - half[k] + 2.0 * half[k] * idx[k] as f64 / STEPS as f64;
                    v.clamp(lo[i], hi[i])
                })
                .collect();
            if let Some(x) = complete(&z) {
                let f = objective(&x);
                if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                    best = Some((x, f));
                }
            }
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] <= STEPS {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        let (x, _) = best.as_ref()?;
        center = free.iter().map(|&i| x[i]).collect();
        for h in half.iter_mut() {
            *h *= 0.7;
        }
    }
    best
}

/// One-class SVM dual `min b^T K b - a^T b, sum b = 1, 0 <= b <= C` by
/// maximal-violating-pair updates with exact line search.
pub fn one_class_oracle(k: &DMatrix<f64>, c: f64) -> DVector<f64> {
    let n = k.nrows();
    assert!(c * n as f64 >= 1.0, "infeasible box");
    // Feasible start: fill coordinates up to C in order.
    let mut b = DVector::zeros(n);
    let mut left = 1.0f64;
    for i in 0..n {
        let v = left.min(c);
        b[i] = v;
        left -= v;
    }
    for _ in 0..200_000 {
        // Gradient of b^T K b - a^T b.
        let grad = DVector::from_fn(n, |i, _| 2.0 * k.row(i).dot(&b.transpose()) - k[(i, i)]);
        // Move mass from i (can decrease, large gradient) to j (can increase, small gradient).
        let i = (0..n)
            .filter(|&i| b[i] > 0.0)
            .max_by(|&x, &y| grad[x].total_cmp(&grad[y]))
            .unwrap();
        let j = (0..n)
            .filter(|&j| b[j] < c)
            .min_by(|&x, &y| grad[x].total_cmp(&grad[y]))
            .unwrap();
        let gap = grad[i] - grad[j];
        if gap < 1e-13 {
            break;
        }
        // f(b + t (e_j - e_i)) has slope -gap and curvature 2 (Kjj + Kii - 2Kij).
        let curv = 2.0 * (k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)]);
        let t_max = b[i].min(c - b[j]);
        let t = if curv > 0.0 { (gap / curv).min(t_max) } else { t_max };
        b[i] -= t;
        b[j] += t;
    }
    b
}

/// Soft-margin SVM dual `max sum a - 1/2 a^T (yy^T * K) a`,
/// `0 <= a <= C`, `y^T a = 0`, by projected gradient with step `1/L`.
/// Returns the optimal `alpha` and the dual objective.
pub fn svm_dual_oracle(k: &DMatrix<f64>, y: &[f64], c: f64, iters: usize) -> (DVector<f64>, f64) {
    let n = k.nrows();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let project = |v: &DVector<f64>| -> DVector<f64> {
        // Find mu with sum y_i clamp(v_i - mu y_i, 0, C) = 0 by bisection.
        let h = |mu: f64| -> f64 { (0..n).map(|i| y[i] * (v[i] - mu * y[i]).clamp(0.0, c)).sum() };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        DVector::from_fn(n, |i, _| (v[i] - mu * y[i]).clamp(0.0, c))
    };
    let mut a = DVector::zeros(n);
    // Nesterov acceleration for a tight answer in reasonable time.
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = DVector::from_element(n, 1.0) - &q * &z;
        let next = project(&(&z + grad / lip));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &a) * ((t - 1.0) / t_next);
        a = next;
        t = t_next;
    }
    let obj = a.sum() - 0.5 * a.dot(&(&q * &a));
    (a, obj)
}

/// `sum_l sum_m f_l f_m vec(w_l)^T vec(w_m)`.
pub fn ds_double_loop(fa: &[f64], va: &[Vec<f64>], fb: &[f64], vb: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for l in 0..fa.len() {
        for m in 0..fb.len() {
            let mut dot = 0.0;
            for k in 0..va[l].len() {
                dot += va[l][k] * vb[m][k];
            }
            s += fa[l] * fb[m] * dot;
        }
    }
    s
}

/// Mann-Whitney statistic by pair counting, ties counting one half.
pub fn u_statistic(pos: &[f64], neg: &[f64]) -> f64 {
    let mut u = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                u += 1.0;
            } else if p == n {
                u += 0.5;
            }
        }
    }
    u / (pos.len() as f64 * neg.len() as f64)
}

/// DT and SVM-DT reports for one synthetic world with default settings.
pub fn synthetic_run(seed: u64) -> (EvalReport, EvalReport) {
    let spec = SynthSpec {
        rng_seed: seed,
        ..SynthSpec::default()
    };
    let world = generate(&spec).unwrap();
    let split = split_classes(&spec.class_ids(), 0.5, seed).unwrap();
    let seen = train_seen(&world.train, &split, &KernelConfig::default(), &SvmParams::default(), seed).unwrap();
    let (side, _) = side_gram(&SideKernelConfig::default(), &world.train.class_side_info, seen.class_ids(), seed).unwrap();
    let transfer = TransferConfig::default();
    let problem = transfer_problem(&seen, &side, &transfer, seed).unwrap();
    let t = learn_transfer(&problem, &transfer).unwrap().t;
    let kvecs = seen.kernel_columns(&world.test.features).unwrap();
    let test = TestPoints {
        kvecs: &kvecs,
        labels: &world.test.labels,
    };
    let report = |method: Method| {
        let cfg = PredictConfig {
            method,
            ..PredictConfig::default()
        };
        let (predicted, failures) = predict_unseen(&t, &side, &seen, &split.unseen(), &cfg, &cfg.hyper()).unwrap();
        assert!(failures.is_empty(), "{failures:?}");
        evaluate(&seen.model, &predicted, &test, &split, "").unwrap()
    };
    (report(Method::Dt), report(Method::SvmDt))
}
