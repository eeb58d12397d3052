//! Backbone training loop: shuffled minibatches, optional image
//! augmentation, adaptive-rate momentum updates. Single-threaded by
//! contract so parameter trajectories are bit-reproducible.

use rand::Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{augment, AugmentOp, DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::backbone::BackboneNet;
use crate::nn::gdx::{GdxConfig, GdxState, StepOutcome};
use crate::seed;
use crate::tensor::Tensor;

/// Random horizontal flips and small translations, applied per sample per
/// epoch to image datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub max_shift: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gdx: GdxConfig,
    pub augment: Option<AugmentConfig>,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            seed,
            gdx: GdxConfig::default(),
            augment: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the parameter state the network was left in (the best
    /// observed batch loss).
    pub final_loss: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Set when training stopped early ("learning rate collapsed").
    pub halted: Option<String>,
}

/// Trains the backbone on a KK training fold with summed cross-entropy
/// (gradients and the optimizer's loss signal are normalized per sample so
/// step sizes do not depend on batch size).
pub fn train_backbone(
    net: &mut BackboneNet,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if ds.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs and batch_size must be positive"));
    }
    if ds.class_names().len() != net.n_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, net expects {}",
            ds.class_names().len(),
            net.n_classes()
        )));
    }
    net.set_training_context(ds.class_names(), &ds.origin_summary())?;

    let n_classes = net.n_classes();
    let mut gdx = GdxState::new(cfg.gdx.clone())?;
    let mut loss_prev = f64::INFINITY;
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        final_loss: f64::NAN,
        steps: 0,
        rejected_steps: 0,
        halted: None,
    };

    // the adaptive rate oscillates (grow until a step overshoots, then cut);
    // keep the best parameter state seen and restore it at the end so the
    // returned model never sits on a post-blow-up state
    let mut best_loss = f64::INFINITY;
    let mut best_params: Vec<Vec<f64>> = Vec::new();

    let mut order: Vec<usize> = (0..ds.len()).collect();
    'epochs: for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_tagged(cfg.seed, "shuffle", &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut aug_rng =
            ChaCha8Rng::seed_from_u64(seed::derive_tagged(cfg.seed, "augment", &[epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut epoch_samples = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = assemble_batch(ds, chunk, cfg.augment.as_ref(), &mut aug_rng)?;
            let targets = one_hot_targets(ds, chunk, n_classes)?;
            let pass = net.backward(&batch, &targets)?;
            let b = chunk.len() as f64;
            let loss_now = pass.loss / b;
            let mut grads = pass.gradients;
            grads.scale(1.0 / b);

            if loss_now < best_loss {
                best_loss = loss_now;
                best_params = net.param_slices().iter().map(|s| s.to_vec()).collect();
            }

            let mut params = net.param_slices_mut();
            match gdx.step(&mut params, &grads.entries, loss_now, loss_prev) {
                Ok(StepOutcome::Accepted) => {
                    loss_prev = loss_now;
                    report.steps += 1;
                }
                Ok(StepOutcome::Rejected) => {
                    report.rejected_steps += 1;
                    // a rejection leaves the parameters of the last accepted
                    // step in place; this batch's loss is the freshest
                    // estimate of that state, so it becomes the baseline
                    loss_prev = loss_now;
                }
                Err(Error::LearningRateCollapsed) => {
                    report.halted = Some("learning rate collapsed".into());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            epoch_loss += loss_now * b;
            epoch_samples += chunk.len();
        }
        report.epoch_losses.push(epoch_loss / epoch_samples as f64);
    }

    if !best_params.is_empty() {
        for (slot, best) in net.param_slices_mut().into_iter().zip(&best_params) {
            slot.copy_from_slice(best);
        }
    }
    report.final_loss = best_loss;
    net.set_training_metadata(report.epoch_losses.len(), Some(report.final_loss));
    Ok(report)
}

fn assemble_batch(
    ds: &LabeledDataset,
    indices: &[usize],
    aug: Option<&AugmentConfig>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let apply_aug = aug.is_some() && ds.kind() == DatasetKind::Image;
    if !apply_aug {
        return ds.batch_from_indices(indices);
    }
    let aug = aug.unwrap();
    let mut shape = vec![indices.len()];
    shape.extend_from_slice(ds.sample_shape());
    let mut data = Vec::with_capacity(indices.len() * ds.sample_len());
    for &i in indices {
        let mut sample = ds.items()[i].sample.clone();
        if aug.hflip && rng.random_range(0..2) == 1 {
            sample = augment(&sample, AugmentOp::HFlip)?;
        }
        if aug.max_shift > 0 {
            let dx = rng.random_range(-aug.max_shift..=aug.max_shift);
            let dy = rng.random_range(-aug.max_shift..=aug.max_shift);
            if dx != 0 || dy != 0 {
                sample = augment(&sample, AugmentOp::Translate { dx, dy })?;
            }
        }
        data.extend_from_slice(sample.data());
    }
    Tensor::new(shape, data)
}

fn one_hot_targets(ds: &LabeledDataset, indices: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; indices.len() * n_classes];
    for (row, &i) in indices.iter().enumerate() {
        let c = ds.items()[i].class_id;
        if c >= n_classes {
            return Err(Error::invalid(format!("class id {c} out of range")));
        }
        data[row * n_classes + c] = 1.0;
    }
    Tensor::new(vec![indices.len(), n_classes], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::GaussianClassSpec;

    fn blobs(seed: u64) -> LabeledDataset {
        crate::datasets::synth_gaussians(
            &[
                GaussianClassSpec {
                    name: "a".into(),
                    mean: vec![2.0, 0.0],
                    scale: 0.3,
                    count: 40,
                },
                GaussianClassSpec {
                    name: "b".into(),
                    mean: vec![-2.0, 0.0],
                    scale: 0.3,
                    count: 40,
                },
            ],
            seed,
            "blobs",
        )
        .unwrap()
    }

    #[test]
    fn training_reduces_loss_and_learns_blobs() {
        let ds = blobs(5);
        let mut net = BackboneNet::mlp(2, &[8], 4, 2, 1).unwrap();
        let report = train_backbone(&mut net, &ds, &TrainConfig::new(30, 16, 3)).unwrap();
        assert!(report.halted.is_none());
        assert!(report.final_loss < report.epoch_losses[0]);
        let fwd = net.forward(&ds.full_batch().unwrap()).unwrap();
        let mut correct = 0;
        for (i, item) in ds.items().iter().enumerate() {
            if crate::tensor::argmax(fwd.probs.outer(i)) == item.class_id {
                correct += 1;
            }
        }
        assert!(correct as f64 / ds.len() as f64 > 0.95);
        assert_eq!(net.trained_epochs(), 30);
    }

    #[test]
    fn identical_seeds_identical_parameters() {
        let ds = blobs(5);
        let mut a = BackboneNet::mlp(2, &[8], 4, 2, 1).unwrap();
        let mut b = BackboneNet::mlp(2, &[8], 4, 2, 1).unwrap();
        train_backbone(&mut a, &ds, &TrainConfig::new(12, 8, 3)).unwrap();
        train_backbone(&mut b, &ds, &TrainConfig::new(12, 8, 3)).unwrap();
        for (pa, pb) in a.param_slices().iter().zip(b.param_slices().iter()) {
            for (x, y) in pa.iter().zip(pb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
