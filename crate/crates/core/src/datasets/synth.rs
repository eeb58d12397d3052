//! Seeded isotropic Gaussian cluster generation, the desk-scale stand-in
//! for benchmark image datasets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::datasets::{DatasetItem, DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// One synthetic class: `count` samples of `mean + scale * N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassSpec {
    pub name: String,
    pub mean: Vec<f64>,
    /// Standard deviation of the isotropic noise; must be positive.
    pub scale: f64,
    pub count: usize,
}

/// Generates a vector dataset of Gaussian clusters. Each class draws from
/// its own seed stream derived from `(seed, class_index)`, so per-class
/// samples do not depend on the other classes' counts.
pub fn synth_gaussians(
    classes: &[GaussianClassSpec],
    base_seed: u64,
    origin: &str,
) -> Result<LabeledDataset> {
    if classes.is_empty() {
        return Err(Error::invalid("no classes specified"));
    }
    let dim = classes[0].mean.len();
    if dim == 0 {
        return Err(Error::invalid("class means must be non-empty vectors"));
    }
    for spec in classes {
        if spec.mean.len() != dim {
            return Err(Error::invalid(format!(
                "class {:?} has dim {}, expected {dim}",
                spec.name,
                spec.mean.len()
            )));
        }
        if spec.scale <= 0.0 {
            return Err(Error::invalid(format!(
                "class {:?} has non-positive covariance scale {}",
                spec.name, spec.scale
            )));
        }
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut items = Vec::new();
    for (class_id, spec) in classes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base_seed, &[class_id as u64]));
        for _ in 0..spec.count {
            let values: Vec<f64> = spec
                .mean
                .iter()
                .map(|m| m + spec.scale * unit.sample(&mut rng))
                .collect();
            items.push(DatasetItem {
                sample: Tensor::new(vec![dim], values)?,
                class_id,
                origin: origin.to_string(),
            });
        }
    }
    let class_names = classes.iter().map(|c| c.name.clone()).collect();
    LabeledDataset::new(items, class_names, DatasetKind::Vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_mean_near_specified_mean() {
        let ds = synth_gaussians(
            &[GaussianClassSpec {
                name: "a".into(),
                mean: vec![0.0, 0.0],
                scale: 1.0,
                count: 10_000,
            }],
            7,
            "g",
        )
        .unwrap();
        for dim in 0..2 {
            let mean: f64 =
                ds.items().iter().map(|i| i.sample.data()[dim]).sum::<f64>() / ds.len() as f64;
            assert!(mean.abs() < 0.05, "dim {dim} mean {mean}");
        }
    }

    #[test]
    fn zero_count_gives_empty_dataset() {
        let ds = synth_gaussians(
            &[GaussianClassSpec {
                name: "a".into(),
                mean: vec![1.0],
                scale: 0.5,
                count: 0,
            }],
            7,
            "g",
        )
        .unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.class_names(), &["a".to_string()]);
    }

    #[test]
    fn same_seed_identical_samples() {
        let spec = [GaussianClassSpec {
            name: "a".into(),
            mean: vec![1.0, 2.0, 3.0],
            scale: 0.3,
            count: 50,
        }];
        let a = synth_gaussians(&spec, 11, "g").unwrap();
        let b = synth_gaussians(&spec, 11, "g").unwrap();
        assert_eq!(a.items(), b.items());
        let c = synth_gaussians(&spec, 12, "g").unwrap();
        assert_ne!(a.items(), c.items());
    }

    #[test]
    fn rejects_non_positive_scale() {
        let err = synth_gaussians(
            &[GaussianClassSpec {
                name: "a".into(),
                mean: vec![1.0],
                scale: 0.0,
                count: 1,
            }],
            0,
            "g",
        );
        assert!(err.is_err());
    }
}
