//! Finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::backbone::{BackboneNet, Gradients};
use crate::nn::loss::multiclass_ce_loss;
use crate::tensor::Tensor;

/// Worst relative error observed among the sampled parameters of one layer.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub pass: bool,
    pub tolerance: f64,
    pub step: f64,
}

impl GradCheckReport {
    /// Layers whose worst sampled error exceeded the tolerance.
    pub fn failing_layers(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.max_rel_err >= self.tolerance)
            .map(|l| l.layer.as_str())
            .collect()
    }

    pub fn worst(&self) -> Option<(&str, f64)> {
        self.layers
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
            .map(|l| (l.layer.as_str(), l.max_rel_err))
    }
}

fn layer_of(param_name: &str) -> String {
    param_name
        .trim_end_matches(".weight")
        .trim_end_matches(".bias")
        .to_string()
}

fn loss_at(net: &BackboneNet, batch: &Tensor, targets: &Tensor) -> Result<f64> {
    let pass = net.forward(batch)?;
    multiclass_ce_loss(&pass.probs, &targets.clone())
}

/// Checks the network's own backward pass against central differences on a
/// random sample of at least `samples` parameters (all of them when the net
/// is smaller). Relative error is `|analytic - fd| / max(1, |fd|)`.
pub fn grad_check(
    net: &mut BackboneNet,
    batch: &Tensor,
    targets: &Tensor,
    h: f64,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let grads = net.backward(batch, targets)?.gradients;
    grad_check_against(net, batch, targets, &grads, h, tol, samples, seed)
}

/// Core routine: verifies an externally supplied gradient set. Split out so
/// fault-injection tests can corrupt a gradient and watch the check fail.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_against(
    net: &mut BackboneNet,
    batch: &Tensor,
    targets: &Tensor,
    grads: &Gradients,
    h: f64,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::invalid(format!("step h = {h} outside [1e-8, 1e-4]")));
    }
    if tol <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }

    let names = grads.names.clone();
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (pi, entry) in grads.entries.iter().enumerate() {
        for i in 0..entry.len() {
            flat.push((pi, i));
        }
    }
    if flat.len() > samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        flat.shuffle(&mut rng);
        flat.truncate(samples);
        flat.sort_unstable();
    }

    let mut per_layer: Vec<LayerCheck> = names
        .iter()
        .map(|n| LayerCheck {
            layer: layer_of(n),
            max_rel_err: 0.0,
            checked: 0,
        })
        .collect();
    // merge weight/bias entries of the same layer
    per_layer.dedup_by(|a, b| a.layer == b.layer);

    for (pi, i) in flat {
        let analytic = grads.entries[pi][i];
        let original = net.param_slices()[pi][i];

        net.param_slices_mut()[pi][i] = original + h;
        let loss_plus = loss_at(net, batch, targets)?;
        net.param_slices_mut()[pi][i] = original - h;
        let loss_minus = loss_at(net, batch, targets)?;
        net.param_slices_mut()[pi][i] = original;

        let fd = (loss_plus - loss_minus) / (2.0 * h);
        let rel = (analytic - fd).abs() / fd.abs().max(1.0);

        let layer = layer_of(&names[pi]);
        let entry = per_layer
            .iter_mut()
            .find(|l| l.layer == layer)
            .expect("layer entry");
        entry.checked += 1;
        if rel > entry.max_rel_err {
            entry.max_rel_err = rel;
        }
    }

    let pass = per_layer.iter().all(|l| l.max_rel_err < tol);
    Ok(GradCheckReport {
        layers: per_layer,
        pass,
        tolerance: tol,
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::LayerSpec;

    fn one_hot(rows: &[usize], k: usize) -> Tensor {
        let mut data = vec![0.0; rows.len() * k];
        for (i, &c) in rows.iter().enumerate() {
            data[i * k + c] = 1.0;
        }
        Tensor::new(vec![rows.len(), k], data).unwrap()
    }

    fn vec_batch(b: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let data = (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![b, d], data).unwrap()
    }

    #[test]
    fn single_layer_softmax_net_passes() {
        let mut net = BackboneNet::new(&[4], &[], 3, 3, crate::nn::WeightInit::XavierUniform, 5).unwrap();
        let batch = vec_batch(6, 4, 1);
        let targets = one_hot(&[0, 1, 2, 0, 1, 2], 3);
        let report = grad_check(&mut net, &batch, &targets, 1e-6, 1e-6, 200, 3).unwrap();
        assert!(report.pass, "worst: {:?}", report.worst());
    }

    #[test]
    fn conv_net_passes() {
        let specs = vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 2 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
        ];
        let mut net = BackboneNet::new(
            &[1, 5, 5],
            &specs,
            4,
            2,
            crate::nn::WeightInit::XavierUniform,
            7,
        )
        .unwrap();
        let batch = {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            use rand::Rng;
            let data = (0..3 * 25).map(|_| rng.random_range(0.0..1.0)).collect();
            Tensor::new(vec![3, 1, 5, 5], data).unwrap()
        };
        let targets = one_hot(&[0, 1, 0], 2);
        let report = grad_check(&mut net, &batch, &targets, 1e-6, 1e-5, 150, 9).unwrap();
        assert!(report.pass, "worst: {:?}", report.worst());
    }

    #[test]
    fn corrupted_gradient_fails_and_names_layer() {
        let mut net = BackboneNet::mlp(4, &[5], 4, 3, 11).unwrap();
        let batch = vec_batch(5, 4, 4);
        let targets = one_hot(&[0, 1, 2, 1, 0], 3);
        let mut grads = net.backward(&batch, &targets).unwrap().gradients;
        // double one fc1 weight gradient
        let idx = grads.names.iter().position(|n| n == "fc1.weight").unwrap();
        let victim = grads.entries[idx]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        grads.entries[idx][victim] *= 2.0;
        let total: usize = grads.entries.iter().map(|e| e.len()).sum();
        let report =
            grad_check_against(&mut net, &batch, &targets, &grads, 1e-6, 1e-6, total, 0).unwrap();
        assert!(!report.pass);
        assert!(report.failing_layers().contains(&"fc1"));
    }

    #[test]
    fn rejects_out_of_range_h() {
        let mut net = BackboneNet::mlp(2, &[], 2, 2, 0).unwrap();
        let batch = vec_batch(2, 2, 0);
        let targets = one_hot(&[0, 1], 2);
        assert!(grad_check(&mut net, &batch, &targets, 1e-3, 1e-6, 10, 0).is_err());
        assert!(grad_check(&mut net, &batch, &targets, 1e-9, 1e-6, 10, 0).is_err());
    }
}
