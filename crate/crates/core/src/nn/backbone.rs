//! The backbone network: a feature stack followed by a dedicated FC1
//! feature layer (ReLU) and an N-way FC_Soft + softmax head. The FC1
//! activations double as the input representation for the confidence
//! subnetwork, so `forward` always returns them alongside the class
//! probabilities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::nn::layers::{softmax_row, Dense, Layer, LayerSpec, WeightInit};
use crate::nn::loss::LOG_CLAMP_EPSILON;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub layer: Layer,
    pub name: String,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

/// Feature extractor + FC1 + FC_Soft + softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneNet {
    pub(crate) slots: Vec<Slot>,
    pub(crate) fc1: Dense,
    pub(crate) fc_soft: Dense,
    input_shape: Vec<usize>,
    class_names: Vec<String>,
    origin: String,
    init_seed: u64,
    trained_epochs: usize,
    final_loss: Option<f64>,
}

/// Batched forward result: class probabilities `[B, N]` and post-activation
/// FC1 features `[B, d1]`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Tensor,
    pub fc1: Tensor,
}

/// Named per-parameter gradient arrays, in the network's canonical
/// parameter order (feature stack first, then fc1, then fc_soft).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub names: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            for v in e.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Result of a backward pass: the summed multi-class cross-entropy over the
/// batch and the gradient of that loss for every parameter.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub loss: f64,
    pub gradients: Gradients,
}

impl BackboneNet {
    /// Builds a backbone from feature-stack specs plus the two mandatory FC
    /// layers. The feature stack must reduce each sample to a rank-1 shape
    /// (insert `Flatten` after convolutions).
    pub fn new(
        input_shape: &[usize],
        feature_specs: &[LayerSpec],
        fc1_width: usize,
        n_classes: usize,
        init: WeightInit,
        seed: u64,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid(format!("bad input shape {input_shape:?}")));
        }
        if fc1_width == 0 || n_classes == 0 {
            return Err(Error::invalid("fc1 width and class count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slots = Vec::with_capacity(feature_specs.len());
        let mut shape = input_shape.to_vec();
        for (i, spec) in feature_specs.iter().enumerate() {
            let name = format!("feature.{i}.{}", spec.kind());
            let out_shape = spec.out_shape(&name, &shape)?;
            slots.push(Slot {
                layer: Layer::from_spec(spec, init, &mut rng),
                name,
                in_shape: shape.clone(),
                out_shape: out_shape.clone(),
            });
            shape = out_shape;
        }
        if shape.len() != 1 {
            return Err(Error::ShapeMismatch {
                layer: "fc1".into(),
                expected: "rank-1 feature input (add a flatten layer)".into(),
                actual: format!("{shape:?}"),
            });
        }
        let fc1 = Dense::new(shape[0], fc1_width, init, &mut rng);
        let fc_soft = Dense::new(fc1_width, n_classes, init, &mut rng);
        Ok(BackboneNet {
            slots,
            fc1,
            fc_soft,
            input_shape: input_shape.to_vec(),
            class_names: (0..n_classes).map(|i| format!("class_{i}")).collect(),
            origin: String::new(),
            init_seed: seed,
            trained_epochs: 0,
            final_loss: None,
        })
    }

    /// MLP backbone for vector data: `hidden` dense+relu pairs, then FC1.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        fc1_width: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                in_dim: prev,
                out_dim: h,
            });
            specs.push(LayerSpec::Relu);
            prev = h;
        }
        BackboneNet::new(
            &[input_dim],
            &specs,
            fc1_width,
            n_classes,
            WeightInit::XavierUniform,
            seed,
        )
    }

    /// Plain CNN for 28x28-style grayscale images: three 3x3 conv blocks
    /// (8, 16, 32 filters), then a 128-unit FC1 and the N-way head.
    pub fn image_cnn(channels: usize, height: usize, width: usize, n_classes: usize, seed: u64) -> Result<Self> {
        let specs = vec![
            LayerSpec::Conv2d {
                in_channels: channels,
                out_channels: 8,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_channels: 8,
                out_channels: 16,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_channels: 16,
                out_channels: 32,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
        ];
        BackboneNet::new(
            &[channels, height, width],
            &specs,
            128,
            n_classes,
            WeightInit::XavierUniform,
            seed,
        )
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn fc1_width(&self) -> usize {
        self.fc1.out_dim
    }

    pub fn n_classes(&self) -> usize {
        self.fc_soft.out_dim
    }

    pub fn feature_specs(&self) -> Vec<LayerSpec> {
        self.slots.iter().map(|s| s.layer.spec()).collect()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.final_loss
    }

    /// Records which dataset the net was trained on; used to enforce
    /// class-disjointness when mining an auxiliary dataset.
    pub fn set_training_context(&mut self, class_names: &[String], origin: &str) -> Result<()> {
        if class_names.len() != self.n_classes() {
            return Err(Error::invalid(format!(
                "training context has {} class names, net has {} outputs",
                class_names.len(),
                self.n_classes()
            )));
        }
        self.class_names = class_names.to_vec();
        self.origin = origin.to_string();
        Ok(())
    }

    pub(crate) fn set_training_metadata(&mut self, epochs: usize, final_loss: Option<f64>) {
        self.trained_epochs = epochs;
        self.final_loss = final_loss;
    }

    pub(crate) fn restore_metadata(
        &mut self,
        init_seed: u64,
        trained_epochs: usize,
        final_loss: Option<f64>,
    ) {
        self.init_seed = init_seed;
        self.trained_epochs = trained_epochs;
        self.final_loss = final_loss;
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.inner_shape() != self.input_shape.as_slice() {
            let layer = self
                .slots
                .first()
                .map(|s| s.name.clone())
                .unwrap_or_else(|| "fc1".into());
            return Err(Error::ShapeMismatch {
                layer,
                expected: format!("{:?}", self.input_shape),
                actual: format!("{:?}", batch.inner_shape()),
            });
        }
        Ok(())
    }

    /// Per-sample forward core. Every public path (batched, cached,
    /// parallel) funnels through this so their outputs are bit-identical.
    fn forward_sample(&self, x: &[f64]) -> SamplePass {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.slots.len() + 1);
        acts.push(x.to_vec());
        for slot in &self.slots {
            let mut out = vec![0.0; slot.out_shape.iter().product()];
            slot.layer.forward(acts.last().unwrap(), &slot.in_shape, &mut out);
            acts.push(out);
        }
        let feat = acts.last().unwrap();
        let mut z1 = vec![0.0; self.fc1.out_dim];
        self.fc1.forward(feat, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let mut logits = vec![0.0; self.fc_soft.out_dim];
        self.fc_soft.forward(&a1, &mut logits);
        let mut probs = vec![0.0; logits.len()];
        softmax_row(&logits, &mut probs);
        SamplePass {
            acts,
            z1,
            a1,
            logits,
            probs,
        }
    }

    fn forward_impl(&self, batch: &Tensor, parallel: bool) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let b = batch.outer_len();
        let run = |i: usize| {
            let pass = self.forward_sample(batch.outer(i));
            (pass.probs, pass.a1)
        };
        let rows = if parallel {
            exec::map_range(b, run)
        } else {
            exec::map_range_seq(b, run)
        };
        let mut probs = Vec::with_capacity(b * self.n_classes());
        let mut fc1 = Vec::with_capacity(b * self.fc1_width());
        for (p, f) in rows {
            probs.extend_from_slice(&p);
            fc1.extend_from_slice(&f);
        }
        Ok(ForwardPass {
            probs: Tensor::new(vec![b, self.n_classes()], probs)?,
            fc1: Tensor::new(vec![b, self.fc1_width()], fc1)?,
        })
    }

    /// Batched forward pass. Pure; samples are processed independently and
    /// may be fanned out over threads (feature `parallel`).
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.forward_impl(batch, true)
    }

    /// Sequential forward pass; baseline for the benchmark suite.
    pub fn forward_seq(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.forward_impl(batch, false)
    }

    /// Pre-softmax FC_Soft outputs, used as distribution-level features.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let b = batch.outer_len();
        let rows = exec::map_range(b, |i| self.forward_sample(batch.outer(i)).logits);
        let mut data = Vec::with_capacity(b * self.n_classes());
        for r in rows {
            data.extend_from_slice(&r);
        }
        Tensor::new(vec![b, self.n_classes()], data)
    }

    pub(crate) fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for slot in &self.slots {
            if slot.layer.param_len().is_some() {
                names.push(format!("{}.weight", slot.name));
                names.push(format!("{}.bias", slot.name));
            }
        }
        names.push("fc1.weight".into());
        names.push("fc1.bias".into());
        names.push("fc_soft.weight".into());
        names.push("fc_soft.bias".into());
        names
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for slot in &self.slots {
            match &slot.layer {
                Layer::Dense(d) => {
                    v.push(&d.weights);
                    v.push(&d.biases);
                }
                Layer::Conv2d(c) => {
                    v.push(&c.weights);
                    v.push(&c.biases);
                }
                _ => {}
            }
        }
        v.push(&self.fc1.weights);
        v.push(&self.fc1.biases);
        v.push(&self.fc_soft.weights);
        v.push(&self.fc_soft.biases);
        v
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for slot in &mut self.slots {
            match &mut slot.layer {
                Layer::Dense(d) => {
                    v.push(&mut d.weights);
                    v.push(&mut d.biases);
                }
                Layer::Conv2d(c) => {
                    v.push(&mut c.weights);
                    v.push(&mut c.biases);
                }
                _ => {}
            }
        }
        v.push(&mut self.fc1.weights);
        v.push(&mut self.fc1.biases);
        v.push(&mut self.fc_soft.weights);
        v.push(&mut self.fc_soft.biases);
        v
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients {
            names: self.param_names(),
            entries: self.param_slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    fn validate_targets(&self, batch: &Tensor, targets: &Tensor) -> Result<()> {
        if targets.rank() != 2
            || targets.outer_len() != batch.outer_len()
            || targets.inner_len() != self.n_classes()
        {
            return Err(Error::invalid(format!(
                "targets must be one-hot [{} x {}], got {:?}",
                batch.outer_len(),
                self.n_classes(),
                targets.shape()
            )));
        }
        for i in 0..targets.outer_len() {
            let row = targets.outer(i);
            let ones = row.iter().filter(|v| **v == 1.0).count();
            if ones != 1 || row.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::invalid(format!("target row {i} is not one-hot")));
            }
        }
        Ok(())
    }

    /// Backpropagation of the summed multi-class cross-entropy. Sequential
    /// over the batch by contract: training must be bit-deterministic.
    pub fn backward(&self, batch: &Tensor, targets: &Tensor) -> Result<BackwardPass> {
        self.check_batch(batch)?;
        self.validate_targets(batch, targets)?;
        let mut grads = self.zero_gradients();
        let mut loss = 0.0;
        for i in 0..batch.outer_len() {
            let pass = self.forward_sample(batch.outer(i));
            let t = targets.outer(i);
            for (p, tv) in pass.probs.iter().zip(t) {
                if *tv == 1.0 {
                    loss -= p.clamp(LOG_CLAMP_EPSILON, 1.0).ln();
                }
            }
            self.backward_sample(&pass, t, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("backward loss".into()));
        }
        Ok(BackwardPass {
            loss,
            gradients: grads,
        })
    }

    fn backward_sample(&self, pass: &SamplePass, target: &[f64], grads: &mut Gradients) {
        let n_feature_params = grads.entries.len() - 4;
        // Softmax + summed cross-entropy collapse to probs - target.
        let d_logits: Vec<f64> = pass.probs.iter().zip(target).map(|(p, t)| p - t).collect();

        let mut d_a1 = vec![0.0; self.fc1.out_dim];
        {
            let (head, tail) = grads.entries.split_at_mut(n_feature_params + 2);
            let (dw, db) = tail.split_at_mut(1);
            self.fc_soft.backward(&pass.a1, &d_logits, &mut dw[0], &mut db[0], &mut d_a1);
            let _ = head;
        }
        let d_z1: Vec<f64> = d_a1
            .iter()
            .zip(&pass.z1)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();

        let feat = pass.acts.last().unwrap();
        let mut d_feat = vec![0.0; feat.len()];
        {
            let (_, tail) = grads.entries.split_at_mut(n_feature_params);
            let (dw, rest) = tail.split_at_mut(1);
            self.fc1.backward(feat, &d_z1, &mut dw[0], &mut rest[0], &mut d_feat);
        }

        // Feature stack, back to front.
        let mut d_out = d_feat;
        let mut grad_idx = n_feature_params;
        for (k, slot) in self.slots.iter().enumerate().rev() {
            let x = &pass.acts[k];
            let y = &pass.acts[k + 1];
            let mut d_in = vec![0.0; x.len()];
            if slot.layer.param_len().is_some() {
                grad_idx -= 2;
                let (_, tail) = grads.entries.split_at_mut(grad_idx);
                let (dw, rest) = tail.split_at_mut(1);
                slot.layer.backward(
                    x,
                    &slot.in_shape,
                    y,
                    &d_out,
                    Some((&mut dw[0], &mut rest[0])),
                    &mut d_in,
                );
            } else {
                slot.layer.backward(x, &slot.in_shape, y, &d_out, None, &mut d_in);
            }
            d_out = d_in;
        }
        debug_assert_eq!(grad_idx, 0);
    }
}

struct SamplePass {
    acts: Vec<Vec<f64>>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}
