//! Run configuration: one JSON document holding every hyper-parameter and
//! input path. Relative paths are resolved against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_json;
use crate::kernels::KernelConfig;
use crate::pipeline::{PredictConfig, TransferConfig};
use crate::side::SideKernelConfig;
use crate::svm::SvmParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub side_info: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub visual_kernel: KernelConfig,
    pub side_kernel: SideKernelConfig,
    pub svm: SvmParams,
    pub transfer: TransferConfig,
    pub predict: PredictConfig,
    /// Fraction of classes held out when no split file is given.
    pub unseen_fraction: f64,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            visual_kernel: KernelConfig::default(),
            side_kernel: SideKernelConfig::default(),
            svm: SvmParams::default(),
            transfer: TransferConfig::default(),
            predict: PredictConfig::default(),
            unseen_fraction: 0.2,
            seed: 0,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let d = &mut cfg.data;
        for p in [
            &mut d.features,
            &mut d.labels,
            &mut d.side_info,
            &mut d.split,
            &mut d.test_features,
            &mut d.test_labels,
        ] {
            if let Some(rel) = p.as_mut() {
                if rel.is_relative() {
                    *rel = base.join(&*rel);
                }
            }
        }
        Ok(cfg)
    }

    /// Range checks on the hyper-parameters. File existence is checked by
    /// the commands that need the files.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return bad("svm.c and svm.tol must be positive".into());
        }
        let t = &self.transfer;
        if !(t.lambda1 >= 0.0 && t.lambda2 >= 0.0) {
            return bad("transfer.lambda1 and lambda2 must be >= 0".into());
        }
        if !(t.l > t.u) {
            return bad(format!("transfer.l = {} must exceed transfer.u = {}", t.l, t.u));
        }
        if !(t.grad_tol > 0.0) || t.max_iters == 0 || t.passes == 0 || t.pair_cap == 0 {
            return bad("transfer solver limits must be positive".into());
        }
        let p = &self.predict;
        if !(p.c > 0.0 && p.zeta >= 0.0 && p.l.is_finite()) {
            return bad("predict.c must be positive and predict.zeta >= 0".into());
        }
        if !(self.unseen_fraction > 0.0 && self.unseen_fraction < 1.0) {
            return bad(format!("unseen_fraction {} not in (0, 1)", self.unseen_fraction));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// Every hyper-parameter, without paths, as canonical JSON.
    pub fn hyper_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("data");
            m.remove("threads");
        }
        v
    }
}
