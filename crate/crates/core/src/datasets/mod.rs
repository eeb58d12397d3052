//! Dataset loading, synthetic generation, KK/UU splitting, openness, and
//! image augmentation.

mod csv;
mod idx;
mod synth;

pub use csv::{load_vectors_csv, write_vectors_csv};
pub use idx::{load_idx, write_idx};
pub use synth::{synth_gaussians, GaussianClassSpec};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Image,
    Vector,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Image => "image",
            DatasetKind::Vector => "vector",
        }
    }
}

/// One labeled sample. `origin` records the source dataset name so
/// cross-dataset class-disjointness can be enforced later.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub sample: Tensor,
    pub class_id: usize,
    pub origin: String,
}

/// A labeled collection of equally shaped samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    items: Vec<DatasetItem>,
    class_names: Vec<String>,
    kind: DatasetKind,
}

impl LabeledDataset {
    pub fn new(items: Vec<DatasetItem>, class_names: Vec<String>, kind: DatasetKind) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::invalid("dataset needs at least one class name"));
        }
        {
            let mut seen = BTreeSet::new();
            for n in &class_names {
                if !seen.insert(n) {
                    return Err(Error::invalid(format!("duplicate class name {n:?}")));
                }
            }
        }
        if let Some(first) = items.first() {
            let shape = first.sample.shape().to_vec();
            for (i, item) in items.iter().enumerate() {
                if item.sample.shape() != shape {
                    return Err(Error::invalid(format!(
                        "item {i} has shape {:?}, expected {shape:?}",
                        item.sample.shape()
                    )));
                }
                if item.class_id >= class_names.len() {
                    return Err(Error::invalid(format!(
                        "item {i} has class id {} but only {} classes are declared",
                        item.class_id,
                        class_names.len()
                    )));
                }
            }
        }
        Ok(LabeledDataset {
            items,
            class_names,
            kind,
        })
    }

    pub fn empty_like(&self) -> LabeledDataset {
        LabeledDataset {
            items: Vec::new(),
            class_names: self.class_names.clone(),
            kind: self.kind,
        }
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.items
            .first()
            .map(|i| i.sample.shape())
            .unwrap_or(&[])
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.class_id).collect()
    }

    /// Distinct origin tags, sorted.
    pub fn origins(&self) -> BTreeSet<&str> {
        self.items.iter().map(|i| i.origin.as_str()).collect()
    }

    /// All origins joined with `+`, for metadata.
    pub fn origin_summary(&self) -> String {
        self.origins().into_iter().collect::<Vec<_>>().join("+")
    }

    /// Replaces class names, e.g. when a manifest declares friendlier ones.
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        let max_id = self.items.iter().map(|i| i.class_id).max();
        if let Some(max_id) = max_id {
            if names.len() <= max_id {
                return Err(Error::invalid(format!(
                    "{} class names cannot cover class id {max_id}",
                    names.len()
                )));
            }
        }
        if names.is_empty() {
            return Err(Error::invalid("class name list is empty"));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn with_origin(mut self, origin: &str) -> Self {
        for item in &mut self.items {
            item.origin = origin.to_string();
        }
        self
    }

    /// Stacks the selected samples into one `[B, ...]` tensor.
    pub fn batch_from_indices(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.items[i].sample.data());
        }
        Tensor::new(shape, data)
    }

    /// The whole dataset as one batch tensor.
    pub fn full_batch(&self) -> Result<Tensor> {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.batch_from_indices(&indices)
    }
}

/// Which class ids become known-knowns and which become unknown-unknowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub kk_class_ids: BTreeSet<usize>,
    pub uu_class_ids: BTreeSet<usize>,
    pub seed: u64,
}

/// KK train/test folds plus the UU test fold. No UU training fold is ever
/// materialized.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub d_kk_train: LabeledDataset,
    pub d_kk_test: LabeledDataset,
    pub d_uu_test: LabeledDataset,
}

/// Openness of a split: `1 - sqrt(n_kk / n_total_test)`.
pub fn openness(n_kk_classes: usize, n_total_test_classes: usize) -> Result<f64> {
    if n_total_test_classes == 0 {
        return Err(Error::invalid("total test class count must be positive"));
    }
    if n_kk_classes == 0 {
        return Err(Error::invalid("KK class count must be positive"));
    }
    if n_total_test_classes < n_kk_classes {
        return Err(Error::invalid(format!(
            "total test classes ({n_total_test_classes}) < KK classes ({n_kk_classes})"
        )));
    }
    Ok(1.0 - (n_kk_classes as f64 / n_total_test_classes as f64).sqrt())
}

/// Splits a dataset into KK train/test folds and a UU test fold.
///
/// Per class, items are shuffled with a seed derived from `(spec.seed,
/// class_id)` and `round(n * test_fraction)` of them go to the test fold.
/// KK classes keep both folds (ids remapped to `0..n_kk` in ascending
/// original order); UU classes keep only the test fold.
pub fn split_kk_uu(ds: &LabeledDataset, spec: &SplitSpec, test_fraction: f64) -> Result<SplitResult> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::invalid("test_fraction must be in (0, 1)"));
    }
    if !spec.kk_class_ids.is_disjoint(&spec.uu_class_ids) {
        return Err(Error::ClassOverlap(
            "KK and UU class sets overlap".to_string(),
        ));
    }
    if spec.kk_class_ids.is_empty() {
        return Err(Error::invalid("KK class set is empty"));
    }
    let n_classes = ds.class_names().len();
    for &c in spec.kk_class_ids.iter().chain(spec.uu_class_ids.iter()) {
        if c >= n_classes {
            return Err(Error::invalid(format!("class id {c} not present in dataset")));
        }
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, item) in ds.items().iter().enumerate() {
        by_class[item.class_id].push(i);
    }

    let select = |ids: &BTreeSet<usize>| -> (Vec<String>, Vec<(usize, Vec<usize>, Vec<usize>)>) {
        // returns per selected class: (new id, train item idxs, test item idxs)
        let names: Vec<String> = ids.iter().map(|&c| ds.class_names()[c].clone()).collect();
        let mut folds = Vec::new();
        for (new_id, &c) in ids.iter().enumerate() {
            let mut idxs = by_class[c].clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, &[c as u64]));
            idxs.shuffle(&mut rng);
            let n_test = ((idxs.len() as f64) * test_fraction).round() as usize;
            let n_test = n_test.min(idxs.len());
            let test = idxs[..n_test].to_vec();
            let train = idxs[n_test..].to_vec();
            folds.push((new_id, train, test));
        }
        (names, folds)
    };

    let build = |names: &[String], picks: &[(usize, &[usize])]| -> Result<LabeledDataset> {
        let mut items = Vec::new();
        for (new_id, idxs) in picks {
            for &i in *idxs {
                let src = &ds.items()[i];
                items.push(DatasetItem {
                    sample: src.sample.clone(),
                    class_id: *new_id,
                    origin: src.origin.clone(),
                });
            }
        }
        LabeledDataset::new(items, names.to_vec(), ds.kind())
    };

    let (kk_names, kk_folds) = select(&spec.kk_class_ids);
    let (uu_names, uu_folds) = select(&spec.uu_class_ids);

    let kk_train: Vec<(usize, &[usize])> = kk_folds.iter().map(|(id, tr, _)| (*id, tr.as_slice())).collect();
    let kk_test: Vec<(usize, &[usize])> = kk_folds.iter().map(|(id, _, te)| (*id, te.as_slice())).collect();
    let uu_test: Vec<(usize, &[usize])> = uu_folds.iter().map(|(id, _, te)| (*id, te.as_slice())).collect();

    Ok(SplitResult {
        d_kk_train: build(&kk_names, &kk_train)?,
        d_kk_test: build(&kk_names, &kk_test)?,
        d_uu_test: if uu_names.is_empty() {
            LabeledDataset {
                items: Vec::new(),
                class_names: vec!["none".into()],
                kind: ds.kind(),
            }
        } else {
            build(&uu_names, &uu_test)?
        },
    })
}

/// Image augmentation ops. Translations are capped at 4 pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    HFlip,
    Translate { dx: i64, dy: i64 },
}

/// Applies an augmentation to a `[H, W]` or `[C, H, W]` image tensor.
/// `dx` shifts columns right, `dy` shifts rows down; vacated pixels are
/// zero-filled.
pub fn augment(img: &Tensor, op: AugmentOp) -> Result<Tensor> {
    let (planes, h, w) = match img.shape() {
        [h, w] => (1usize, *h, *w),
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::invalid(format!(
                "augment expects [H, W] or [C, H, W], got {other:?}"
            )))
        }
    };
    if let AugmentOp::Translate { dx, dy } = op {
        if dx.abs() > 4 || dy.abs() > 4 {
            return Err(Error::invalid(format!(
                "translation ({dx}, {dy}) exceeds the +/-4 pixel cap"
            )));
        }
    }
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..h {
            for j in 0..w {
                let v = src[base + i * w + j];
                match op {
                    AugmentOp::HFlip => out[base + i * w + (w - 1 - j)] = v,
                    AugmentOp::Translate { dx, dy } => {
                        let ni = i as i64 + dy;
                        let nj = j as i64 + dx;
                        if ni >= 0 && ni < h as i64 && nj >= 0 && nj < w as i64 {
                            out[base + ni as usize * w + nj as usize] = v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, n_classes: usize) -> LabeledDataset {
        let mut items = Vec::new();
        for c in 0..n_classes {
            for k in 0..n_per_class {
                items.push(DatasetItem {
                    sample: Tensor::new(vec![2], vec![c as f64, k as f64]).unwrap(),
                    class_id: c,
                    origin: "toy".into(),
                });
            }
        }
        let names = (0..n_classes).map(|c| format!("c{c}")).collect();
        LabeledDataset::new(items, names, DatasetKind::Vector).unwrap()
    }

    #[test]
    fn openness_paper_values() {
        assert!((openness(6, 10).unwrap() - 0.225403).abs() < 1e-6);
        assert!((openness(4, 54).unwrap() - (1.0 - (4.0f64 / 54.0).sqrt())).abs() < 1e-15);
        assert_eq!(openness(5, 5).unwrap(), 0.0);
        assert!(openness(5, 4).is_err());
        assert!(openness(0, 4).is_err());
    }

    #[test]
    fn split_covers_complement_classes() {
        let ds = toy(10, 10);
        let spec = SplitSpec {
            kk_class_ids: (0..6).collect(),
            uu_class_ids: (6..10).collect(),
            seed: 3,
        };
        let split = split_kk_uu(&ds, &spec, 0.2).unwrap();
        assert_eq!(split.d_kk_train.class_names().len(), 6);
        assert_eq!(split.d_uu_test.class_names().len(), 4);
        assert_eq!(
            split.d_uu_test.class_names(),
            &["c6".to_string(), "c7".into(), "c8".into(), "c9".into()]
        );
        // KK names disjoint from UU names
        for n in split.d_kk_train.class_names() {
            assert!(!split.d_uu_test.class_names().contains(n));
        }
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(25, 4);
        let spec = SplitSpec {
            kk_class_ids: [0, 2].into_iter().collect(),
            uu_class_ids: [1, 3].into_iter().collect(),
            seed: 99,
        };
        let a = split_kk_uu(&ds, &spec, 0.25).unwrap();
        let b = split_kk_uu(&ds, &spec, 0.25).unwrap();
        assert_eq!(a.d_kk_train.items(), b.d_kk_train.items());
        assert_eq!(a.d_kk_test.items(), b.d_kk_test.items());
        assert_eq!(a.d_uu_test.items(), b.d_uu_test.items());
    }

    #[test]
    fn split_counts_80_20() {
        let ds = toy(100, 3);
        let spec = SplitSpec {
            kk_class_ids: [0, 1].into_iter().collect(),
            uu_class_ids: [2].into_iter().collect(),
            seed: 1,
        };
        let split = split_kk_uu(&ds, &spec, 0.2).unwrap();
        assert_eq!(split.d_kk_train.len(), 160);
        assert_eq!(split.d_kk_test.len(), 40);
        assert_eq!(split.d_uu_test.len(), 20);
        for c in 0..2 {
            let train = split.d_kk_train.items().iter().filter(|i| i.class_id == c).count();
            let test = split.d_kk_test.items().iter().filter(|i| i.class_id == c).count();
            assert_eq!((train, test), (80, 20));
        }
    }

    #[test]
    fn split_rejects_overlap() {
        let ds = toy(5, 4);
        let spec = SplitSpec {
            kk_class_ids: [0, 1].into_iter().collect(),
            uu_class_ids: [1, 2].into_iter().collect(),
            seed: 0,
        };
        assert!(matches!(
            split_kk_uu(&ds, &spec, 0.2),
            Err(Error::ClassOverlap(_))
        ));
    }

    #[test]
    fn hflip_is_involution_and_matches_hand_flip() {
        let img = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let flipped = augment(&img, AugmentOp::HFlip).unwrap();
        assert_eq!(flipped.data(), &[2.0, 1.0, 4.0, 3.0]);
        let back = augment(&flipped, AugmentOp::HFlip).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn translate_zero_is_identity_and_cap_enforced() {
        let img = Tensor::new(vec![1, 3, 3], (0..9).map(|i| i as f64 / 10.0).collect()).unwrap();
        let same = augment(&img, AugmentOp::Translate { dx: 0, dy: 0 }).unwrap();
        assert_eq!(same.data(), img.data());
        assert!(augment(&img, AugmentOp::Translate { dx: 5, dy: 0 }).is_err());
        let shifted = augment(&img, AugmentOp::Translate { dx: 1, dy: 0 }).unwrap();
        assert_eq!(shifted.data()[0], 0.0);
        assert_eq!(shifted.data()[1], img.data()[0]);
    }
}
