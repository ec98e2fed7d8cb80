//! End-to-end stages shared by the command-line tool and the tests.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_classes, Dataset, Samples, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::mau;
use crate::kernels::{gram, kernel_columns, KernelConfig, KernelMatrix, KernelSpec};
use crate::predict::{adjust_dt, predict_dt, BiasPolicy, Method, PredictedClassifier, SvmDtHyper};
use crate::qp::QpSettings;
use crate::rng::{stream, SeededStream};
use crate::side::SideGram;
use crate::svm::{train_one_vs_all, SeenModel, SvmParams};
use crate::transfer::{
    solve, solve_bregman, InitStrategy, LbfgsOptions, TransferMatrix, TransferParams, TransferProblem,
    DEFAULT_PAIR_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Lbfgs,
    Bregman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub l: f64,
    pub u: f64,
    pub solver: Solver,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Epochs for the Bregman solver.
    pub passes: usize,
    pub init: InitStrategy,
    pub pair_cap: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        let p = TransferParams::default();
        let o = LbfgsOptions::default();
        Self {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            l: p.l,
            u: p.u,
            solver: Solver::Lbfgs,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            passes: 50,
            init: InitStrategy::RegularizedInverse,
            pair_cap: DEFAULT_PAIR_CAP,
        }
    }
}

impl TransferConfig {
    pub fn params(&self) -> TransferParams {
        TransferParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            l: self.l,
            u: self.u,
        }
    }

    pub fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub method: Method,
    pub c: f64,
    pub zeta: f64,
    pub l: f64,
    pub correlation: bool,
    pub bias: BiasPolicy,
    /// Pick `c`, `zeta`, `l` on seen-class pseudo splits.
    pub tune: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let h = SvmDtHyper::default();
        Self {
            method: Method::SvmDt,
            c: h.c,
            zeta: h.zeta,
            l: h.l,
            correlation: h.correlation,
            bias: h.bias,
            tune: false,
        }
    }
}

impl PredictConfig {
    pub fn hyper(&self) -> SvmDtHyper {
        SvmDtHyper {
            c: self.c,
            zeta: self.zeta,
            l: self.l,
            correlation: self.correlation,
            bias: self.bias,
        }
    }
}

/// Seen-class classifiers together with what is needed to score new points.
#[derive(Debug, Clone)]
pub struct SeenStage {
    /// Kernel with every data-dependent value pinned.
    pub kernel: KernelConfig,
    pub spec: KernelSpec,
    /// Rows of the training dataset used as `x_1 .. x_N`.
    pub train_indices: Vec<usize>,
    pub samples: Samples,
    /// Dense seen-class index of each training sample.
    pub labels: Vec<usize>,
    pub gram: KernelMatrix,
    pub model: SeenModel,
}

impl SeenStage {
    pub fn class_ids(&self) -> &[String] {
        &self.model.class_ids
    }

    /// Kernel vectors (with bias) of `points`, one per column.
    pub fn kernel_columns(&self, points: &Samples) -> Result<DMatrix<f64>> {
        kernel_columns(&self.spec, &self.samples, points)
    }

    /// `[K'; 1]`: column `j` is `k(x_j)`.
    pub fn training_columns(&self) -> DMatrix<f64> {
        let n = self.gram.n();
        let mut k = DMatrix::from_element(n + 1, n, 1.0);
        k.rows_mut(0, n).copy_from(self.gram.matrix());
        k
    }
}

pub fn train_seen(
    dataset: &Dataset,
    split: &SplitSpec,
    kernel: &KernelConfig,
    svm: &SvmParams,
    seed: u64,
) -> Result<SeenStage> {
    let class_ids = split.seen();
    let train_indices = dataset.indices_of(&class_ids);
    if train_indices.is_empty() {
        return Err(Error::EmptyInput("no training samples of seen classes".into()));
    }
    let samples = dataset.features.select(&train_indices);
    let labels: Vec<usize> = train_indices
        .iter()
        .map(|&i| class_ids.binary_search(&dataset.labels[i]).expect("seen label"))
        .collect();
    let (spec, kernel) = kernel.resolve(&samples, seed)?;
    let gram = gram(&spec, &samples)?;
    let model = train_one_vs_all(&gram, &labels, &class_ids, svm)?;
    Ok(SeenStage {
        kernel,
        spec,
        train_indices,
        samples,
        labels,
        gram,
        model,
    })
}

pub fn transfer_problem(seen: &SeenStage, side: &SideGram, cfg: &TransferConfig, seed: u64) -> Result<TransferProblem> {
    TransferProblem::with_pair_cap(
        side.block(seen.class_ids())?,
        seen.training_columns(),
        seen.model.coefficients.clone(),
        seen.labels.clone(),
        cfg.params(),
        cfg.pair_cap,
        seed,
    )
}

pub fn learn_transfer(problem: &TransferProblem, cfg: &TransferConfig) -> Result<TransferMatrix> {
    match cfg.solver {
        Solver::Lbfgs => solve(problem, &cfg.init, &cfg.lbfgs()),
        Solver::Bregman => solve_bregman(problem, cfg.passes),
    }
}

/// A class whose SVM-DT program could not be solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictFailure {
    pub class_id: String,
    pub reason: String,
}

/// Predicted classifiers for `unseen`, in the given order. SVM-DT failures
/// are collected rather than aborting the other classes.
pub fn predict_unseen(
    t: &DMatrix<f64>,
    side: &SideGram,
    seen: &SeenStage,
    unseen: &[String],
    cfg: &PredictConfig,
    hyper: &SvmDtHyper,
) -> Result<(Vec<PredictedClassifier>, Vec<PredictFailure>)> {
    let settings = QpSettings::default();
    let results: Vec<Result<PredictedClassifier>> = unseen
        .par_iter()
        .map(|z| {
            let dt = predict_dt(t, &side.vector(z, seen.class_ids())?, z)?;
            match cfg.method {
                Method::Dt => Ok(dt),
                Method::SvmDt => adjust_dt(&dt, &seen.gram, hyper, &settings),
            }
        })
        .collect();
    let mut predicted = Vec::new();
    let mut failures = Vec::new();
    for (z, r) in unseen.iter().zip(results) {
        match r {
            Ok(p) => predicted.push(p),
            Err(Error::QpInfeasible(reason)) => failures.push(PredictFailure {
                class_id: z.clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok((predicted, failures))
}

/// Search grid for `--tune`.
pub const TUNE_C: [f64; 3] = [0.1, 1.0, 10.0];
pub const TUNE_ZETA: [f64; 3] = [0.1, 1.0, 10.0];
pub const TUNE_L: [f64; 2] = [0.0, 0.1];
/// Number of seen-class pseudo splits used by [`tune_svm_dt`].
pub const TUNE_FOLDS: usize = 2;

/// Choose SVM-DT hyper-parameters by MAU on pseudo splits of the seen
/// classes. Held-out seen classes play the unseen role; their training
/// samples are the test points. Ties keep the earlier grid point.
#[allow(clippy::too_many_arguments)]
pub fn tune_svm_dt(
    dataset: &Dataset,
    split: &SplitSpec,
    seen: &SeenStage,
    side: &SideGram,
    svm: &SvmParams,
    transfer: &TransferConfig,
    base: &PredictConfig,
    seed: u64,
) -> Result<SvmDtHyper> {
    let seen_ids = split.seen();
    if seen_ids.len() < 3 {
        return Err(Error::TooFewClasses(seen_ids.len()));
    }
    let fraction = split.unseen_class_ids.len() as f64 / (split.unseen_class_ids.len() + seen_ids.len()) as f64;
    let mut rng = SeededStream::new(seed, stream::TUNING);
    let grid: Vec<SvmDtHyper> = TUNE_C
        .iter()
        .flat_map(|&c| {
            TUNE_ZETA.iter().flat_map(move |&zeta| {
                TUNE_L.iter().map(move |&l| SvmDtHyper {
                    c,
                    zeta,
                    l,
                    correlation: base.correlation,
                    bias: base.bias,
                })
            })
        })
        .collect();
    let mut totals = vec![0.0; grid.len()];
    for _ in 0..TUNE_FOLDS {
        let pseudo = split_classes(&seen_ids, fraction, rng.next_u64())?;
        let stage = train_seen(dataset, &pseudo, &seen.kernel, svm, seed)?;
        let problem = transfer_problem(&stage, side, transfer, seed)?;
        let t = learn_transfer(&problem, transfer)?.t;
        let held = pseudo.unseen();
        let idx = dataset.indices_of(&held);
        let points = stage.kernel_columns(&dataset.features.select(&idx))?;
        let labels: Vec<String> = idx.iter().map(|&i| dataset.labels[i].clone()).collect();
        for (g, hyper) in grid.iter().enumerate() {
            let cfg = PredictConfig {
                method: Method::SvmDt,
                ..base.clone()
            };
            let (predicted, failures) = predict_unseen(&t, side, &stage, &held, &cfg, hyper)?;
            // An infeasible grid point cannot be chosen.
            totals[g] += if failures.is_empty() {
                mau(&predicted, &points, &labels)?
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    let best = (0..grid.len()).fold(0, |b, g| if totals[g] > totals[b] { g } else { b });
    if totals[best] == f64::NEG_INFINITY {
        return Err(Error::QpInfeasible("every tuning grid point was infeasible".into()));
    }
    Ok(grid[best])
}
