//! Synthetic worlds: Gaussian class clusters whose side information is a
//! noisy function of the class prototype.
//!
//! Draw order, each from its own [`SeededStream`] label:
//! prototypes row by row (`PROTOTYPES`), the side map `A` row by row
//! (`SIDE_MAP`, linear-map mode only), side noise class by class
//! (`SIDE_NOISE`), training noise sample by sample (`VISUAL_NOISE`) and test
//! noise sample by sample (`TEST_NOISE`).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Samples, SideInfo};
use crate::error::{Error, Result};
use crate::rng::{stream, SeededStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    /// Side info is `A p + noise`, `A` of shape `dim_side x dim_visual`.
    LinearMap,
    /// Side info is `p + noise`; `dim_side` is ignored.
    SharedPrototype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub dim_visual: usize,
    pub dim_side: usize,
    pub samples_per_class: usize,
    pub sigma_v: f64,
    pub sigma_e: f64,
    pub mode: CorrelationMode,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            dim_visual: 8,
            dim_side: 8,
            samples_per_class: 30,
            sigma_v: 0.3,
            sigma_e: 0.3,
            mode: CorrelationMode::SharedPrototype,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 3 {
            return Err(Error::InvalidParameter(format!(
                "n_classes must be at least 3, got {}",
                self.n_classes
            )));
        }
        if self.dim_visual == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidParameter("counts must be positive".into()));
        }
        if self.mode == CorrelationMode::LinearMap && self.dim_side == 0 {
            return Err(Error::InvalidParameter("dim_side must be positive".into()));
        }
        for (name, s) in [("sigma_v", self.sigma_v), ("sigma_e", self.sigma_e)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {s}")));
            }
        }
        Ok(())
    }

    pub fn class_ids(&self) -> Vec<String> {
        let width = self.n_classes.saturating_sub(1).to_string().len().max(2);
        (0..self.n_classes).map(|c| format!("c{c:0width$}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub train: Dataset,
    /// Fresh draws around the same prototypes.
    pub test: Dataset,
    /// One row per class, in class-id order.
    pub prototypes: DMatrix<f64>,
    pub side_map: Option<DMatrix<f64>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthWorld> {
    spec.validate()?;
    let (n, d) = (spec.n_classes, spec.dim_visual);
    let ids = spec.class_ids();

    let mut rng = SeededStream::new(spec.rng_seed, stream::PROTOTYPES);
    let prototypes = DMatrix::from_row_iterator(n, d, (0..n * d).map(|_| rng.normal()));

    let side_map = (spec.mode == CorrelationMode::LinearMap).then(|| {
        let mut rng = SeededStream::new(spec.rng_seed, stream::SIDE_MAP);
        let scale = 1.0 / (d as f64).sqrt();
        DMatrix::from_row_iterator(spec.dim_side, d, (0..spec.dim_side * d).map(|_| rng.normal() * scale))
    });

    let mut rng = SeededStream::new(spec.rng_seed, stream::SIDE_NOISE);
    let mut side = BTreeMap::new();
    for (c, id) in ids.iter().enumerate() {
        let p = prototypes.row(c).transpose();
        let clean = match &side_map {
            Some(a) => a * p,
            None => p,
        };
        let v: Vec<f64> = clean.iter().map(|&x| x + spec.sigma_e * rng.normal()).collect();
        side.insert(id.clone(), SideInfo::Vector(v));
    }

    let draw = |label: u64| -> Result<Dataset> {
        let mut rng = SeededStream::new(spec.rng_seed, label);
        let m = spec.samples_per_class;
        let mut data = Vec::with_capacity(n * m * d);
        let mut labels = Vec::with_capacity(n * m);
        for (c, id) in ids.iter().enumerate() {
            for _ in 0..m {
                data.extend(prototypes.row(c).iter().map(|&x| x + spec.sigma_v * rng.normal()));
                labels.push(id.clone());
            }
        }
        Dataset::new(Samples::new(n * m, d, data)?, labels, side.clone())
    };

    Ok(SynthWorld {
        train: draw(stream::VISUAL_NOISE)?,
        test: draw(stream::TEST_NOISE)?,
        prototypes,
        side_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, median_bandwidth, KernelSpec};
    use crate::svm::{multiclass_decide, train_one_vs_all, SvmParams};

    #[test]
    fn noiseless_shared_side_info_is_prototype() {
        let spec = SynthSpec {
            sigma_e: 0.0,
            ..SynthSpec::default()
        };
        let w = generate(&spec).unwrap();
        for (c, id) in spec.class_ids().iter().enumerate() {
            let SideInfo::Vector(v) = &w.train.class_side_info[id] else {
                panic!("vector side info expected")
            };
            assert_eq!(v.as_slice(), w.prototypes.row(c).iter().copied().collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = SynthSpec {
            mode: CorrelationMode::LinearMap,
            dim_side: 5,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.train.features, a.test.features);
        for id in spec.class_ids() {
            assert_eq!(a.train.labels.iter().filter(|l| **l == id).count(), 30);
        }
        let SideInfo::Vector(v) = &a.train.class_side_info["c00"] else { panic!() };
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn class_ids_pad() {
        let spec = SynthSpec {
            n_classes: 120,
            ..SynthSpec::default()
        };
        let ids = spec.class_ids();
        assert_eq!(ids[0], "c000");
        assert_eq!(ids[119], "c119");
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            SynthSpec { n_classes: 2, ..SynthSpec::default() },
            SynthSpec { samples_per_class: 0, ..SynthSpec::default() },
            SynthSpec { sigma_v: -0.1, ..SynthSpec::default() },
        ] {
            assert!(matches!(generate(&spec), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn seen_svm_fits_default_world() {
        let w = generate(&SynthSpec::default()).unwrap();
        let x = &w.train.features;
        let kspec = KernelSpec::rbf(median_bandwidth(x, 0).unwrap());
        let k = gram(&kspec, x).unwrap();
        let ids = w.train.class_ids();
        let labels: Vec<usize> = w.train.labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
        let model = train_one_vs_all(&k, &labels, &ids, &SvmParams::default()).unwrap();
        let mut hits = 0;
        for i in 0..x.rows() {
            let mut kv: Vec<f64> = k.matrix().row(i).iter().copied().collect();
            kv.push(1.0);
            let kv = nalgebra::DVector::from_vec(kv);
            if multiclass_decide(&model.coefficients, &kv).unwrap() == labels[i] {
                hits += 1;
            }
        }
        assert!(hits as f64 / x.rows() as f64 >= 0.9);
    }
}
