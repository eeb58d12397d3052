//! Confidence-subnetwork training on FC1 features, assembly with the
//! backbone, gated inference, and optimal cut-off estimation.
//!
//! The confidence subnetwork (CS) is a two-hidden-layer scorer mapping FC1
//! features to `S` in `(0, 1)`, where `S -> 1` means "probably unknown".
//! A KK item is labeled 0 and a mined known-unknown item 1. At inference
//! time the backbone's class prediction stands untouched; the verdict is
//! gated on `S < delta`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::{roc_auroc, RocCurve};
use crate::exec;
use crate::nn::{BackboneNet, GdxConfig, GdxState, StepOutcome};
use crate::nn::{Dense, WeightInit};
use crate::seed;
use crate::tensor::{argmax, Tensor};

/// Labeled FC1 feature rows: 0 = known known, 1 = known unknown.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    pub features: Tensor,
    pub labels: Vec<u8>,
}

impl FeatureBank {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.inner_len()
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Sub-bank at the given row indices.
    pub fn subset(&self, indices: &[usize]) -> Result<FeatureBank> {
        if indices.is_empty() {
            return Err(Error::invalid("empty feature bank subset"));
        }
        let w = self.width();
        let mut data = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.outer(i));
            labels.push(self.labels[i]);
        }
        Ok(FeatureBank {
            features: Tensor::new(vec![indices.len(), w], data)?,
            labels,
        })
    }
}

/// Extracts FC1 features for every KK training item (label 0) and every
/// mined known-unknown item (label 1).
pub fn build_feature_bank(
    backbone: &BackboneNet,
    d_kk_train: &LabeledDataset,
    d_kut: &LabeledDataset,
) -> Result<FeatureBank> {
    if d_kut.is_empty() {
        return Err(Error::invalid("KUT set empty; lower T"));
    }
    if d_kk_train.is_empty() {
        return Err(Error::invalid("KK training set empty"));
    }
    let kk = backbone.forward(&d_kk_train.full_batch()?)?.fc1;
    let ku = backbone.forward(&d_kut.full_batch()?)?.fc1;
    let w = kk.inner_len();
    let mut data = Vec::with_capacity((kk.outer_len() + ku.outer_len()) * w);
    data.extend_from_slice(kk.data());
    data.extend_from_slice(ku.data());
    let mut labels = vec![0u8; kk.outer_len()];
    labels.extend(std::iter::repeat_n(1u8, ku.outer_len()));
    Ok(FeatureBank {
        features: Tensor::new(vec![labels.len(), w], data)?,
        labels,
    })
}

/// Two hidden dense+relu layers of equal width and a single sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSubnetwork {
    pub(crate) h1: Dense,
    pub(crate) h2: Dense,
    pub(crate) out: Dense,
    init_seed: u64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ConfidenceSubnetwork {
    pub fn new(input_width: usize, hidden_width: usize, init: WeightInit, seed_value: u64) -> Result<Self> {
        if input_width == 0 || hidden_width == 0 {
            return Err(Error::invalid("CS widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
        Ok(ConfidenceSubnetwork {
            h1: Dense::new(input_width, hidden_width, init, &mut rng),
            h2: Dense::new(hidden_width, hidden_width, init, &mut rng),
            out: Dense::new(hidden_width, 1, init, &mut rng),
            init_seed: seed_value,
        })
    }

    pub fn input_width(&self) -> usize {
        self.h1.in_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.h1.out_dim
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub(crate) fn restore_seed(&mut self, seed_value: u64) {
        self.init_seed = seed_value;
    }

    fn score_sample(&self, x: &[f64]) -> SamplePass {
        let h = self.hidden_width();
        let mut z1 = vec![0.0; h];
        self.h1.forward(x, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let mut z2 = vec![0.0; h];
        self.h2.forward(&a1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
        let mut z3 = vec![0.0; 1];
        self.out.forward(&a2, &mut z3);
        SamplePass {
            z1,
            a1,
            z2,
            a2,
            s: sigmoid(z3[0]),
        }
    }

    /// Confidence scores for a feature batch `[M, d1]`; each score is in
    /// `(0, 1)`. Pure and parallelizable.
    pub fn score(&self, features: &Tensor) -> Result<Vec<f64>> {
        if features.rank() != 2 || features.inner_len() != self.input_width() {
            return Err(Error::ShapeMismatch {
                layer: "cs.h1".into(),
                expected: format!("[M, {}]", self.input_width()),
                actual: format!("{:?}", features.shape()),
            });
        }
        Ok(exec::map_range(features.outer_len(), |i| {
            self.score_sample(features.outer(i)).s
        }))
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.h1.weights,
            &mut self.h1.biases,
            &mut self.h2.weights,
            &mut self.h2.biases,
            &mut self.out.weights,
            &mut self.out.biases,
        ]
    }

    /// Mean binary cross-entropy and its gradients over a row subset.
    fn backward(&self, bank: &FeatureBank, indices: &[usize]) -> (f64, Vec<Vec<f64>>) {
        let mut grads: Vec<Vec<f64>> = vec![
            vec![0.0; self.h1.weights.len()],
            vec![0.0; self.h1.biases.len()],
            vec![0.0; self.h2.weights.len()],
            vec![0.0; self.h2.biases.len()],
            vec![0.0; self.out.weights.len()],
            vec![0.0; self.out.biases.len()],
        ];
        let b = indices.len() as f64;
        let mut loss = 0.0;
        for &i in indices {
            let x = bank.features.outer(i);
            let t = f64::from(bank.labels[i]);
            let pass = self.score_sample(x);
            let s = pass
                .s
                .clamp(crate::nn::LOG_CLAMP_EPSILON, 1.0 - crate::nn::LOG_CLAMP_EPSILON);
            loss -= (t * s.ln() + (1.0 - t) * (1.0 - s).ln()) / b;

            // sigmoid + mean BCE collapse to (s - t) / B at the logit
            let d_z3 = [(pass.s - t) / b];
            let mut d_a2 = vec![0.0; self.hidden_width()];
            {
                let (head, tail) = grads.split_at_mut(5);
                self.out.backward(&pass.a2, &d_z3, &mut head[4], &mut tail[0], &mut d_a2);
            }
            let d_z2: Vec<f64> = d_a2
                .iter()
                .zip(&pass.z2)
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
            let mut d_a1 = vec![0.0; self.hidden_width()];
            {
                let (head, tail) = grads.split_at_mut(3);
                self.h2.backward(&pass.a1, &d_z2, &mut head[2], &mut tail[0], &mut d_a1);
            }
            let d_z1: Vec<f64> = d_a1
                .iter()
                .zip(&pass.z1)
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
            let mut d_x = vec![0.0; self.input_width()];
            {
                let (head, tail) = grads.split_at_mut(1);
                self.h1.backward(x, &d_z1, &mut head[0], &mut tail[0], &mut d_x);
            }
        }
        (loss, grads)
    }
}

struct SamplePass {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    s: f64,
}

/// Training configuration for the confidence subnetwork.
#[derive(Debug, Clone, PartialEq)]
pub struct CsTrainConfig {
    /// Hidden width candidates; `None` derives `{d1/2, d1, 2*d1}` from the
    /// feature width.
    pub hidden_widths: Option<Vec<usize>>,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gdx: GdxConfig,
}

impl CsTrainConfig {
    pub fn new(seed_value: u64) -> Self {
        CsTrainConfig {
            hidden_widths: None,
            folds: 10,
            epochs: 60,
            batch_size: 64,
            seed: seed_value,
            gdx: GdxConfig::default(),
        }
    }
}

/// Candidate hidden widths bracketing the feature width.
pub fn default_h_grid(feature_width: usize) -> Vec<usize> {
    vec![(feature_width / 2).max(1), feature_width, feature_width * 2]
}

/// Cross-validation scores for one hidden-width candidate.
#[derive(Debug, Clone)]
pub struct HCandidateScore {
    pub hidden_width: usize,
    pub fold_aurocs: Vec<f64>,
    pub mean_auroc: f64,
}

#[derive(Debug, Clone)]
pub struct CsSelectionReport {
    pub candidates: Vec<HCandidateScore>,
    pub chosen_width: usize,
}

/// Stratified fold id for the `ordinal`-th item of a class under `seed`;
/// pure in (index, seed) so fold membership is reproducible anywhere.
fn fold_assignment(bank: &FeatureBank, folds: usize, seed_value: u64) -> Vec<usize> {
    let mut fold_of = vec![0usize; bank.len()];
    for label in [0u8, 1u8] {
        let mut idxs: Vec<usize> = (0..bank.len()).filter(|&i| bank.labels[i] == label).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive_tagged(seed_value, "folds", &[u64::from(label)]));
        idxs.shuffle(&mut rng);
        for (ordinal, &i) in idxs.iter().enumerate() {
            fold_of[i] = ordinal % folds;
        }
    }
    fold_of
}

fn fit_cs(
    bank: &FeatureBank,
    train_rows: &[usize],
    hidden_width: usize,
    cfg: &CsTrainConfig,
    seed_value: u64,
) -> Result<ConfidenceSubnetwork> {
    let mut cs = ConfidenceSubnetwork::new(bank.width(), hidden_width, WeightInit::XavierUniform, seed_value)?;
    let mut gdx = GdxState::new(cfg.gdx.clone())?;
    let mut loss_prev = f64::INFINITY;
    // keep the best parameter state; the adaptive rate oscillates
    let mut best_loss = f64::INFINITY;
    let mut best_params: Vec<Vec<f64>> = Vec::new();
    let mut order = train_rows.to_vec();
    'epochs: for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive_tagged(seed_value, "shuffle", &[epoch as u64]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (loss_now, grads) = cs.backward(bank, chunk);
            if loss_now < best_loss {
                best_loss = loss_now;
                best_params = cs.param_slices_mut().iter().map(|s| s.to_vec()).collect();
            }
            let mut params = cs.param_slices_mut();
            match gdx.step(&mut params, &grads, loss_now, loss_prev) {
                // on rejection the parameters still belong to the last
                // accepted step; re-baseline on this fresher loss estimate
                Ok(StepOutcome::Accepted) | Ok(StepOutcome::Rejected) => loss_prev = loss_now,
                Err(Error::LearningRateCollapsed) => break 'epochs,
                Err(e) => return Err(e),
            }
        }
    }
    if !best_params.is_empty() {
        for (slot, best) in cs.param_slices_mut().into_iter().zip(&best_params) {
            slot.copy_from_slice(best);
        }
    }
    Ok(cs)
}

/// Selects the best hidden width by k-fold cross-validated AUROC, then
/// retrains that configuration on the full bank. Fold training is
/// independent per (width, fold) and runs in parallel under the
/// `parallel` feature; seeds are derived per fold so the outcome does not
/// depend on scheduling.
pub fn train_cs(bank: &FeatureBank, cfg: &CsTrainConfig) -> Result<(ConfidenceSubnetwork, CsSelectionReport)> {
    if bank.is_empty() {
        return Err(Error::invalid("feature bank is empty"));
    }
    if cfg.folds < 2 {
        return Err(Error::invalid("folds must be >= 2"));
    }
    let n0 = bank.count(0);
    let n1 = bank.count(1);
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid("feature bank must contain both labels"));
    }
    if n0 < cfg.folds || n1 < cfg.folds {
        return Err(Error::invalid(format!(
            "each label needs at least {} items for {}-fold training (have {n0}/{n1})",
            cfg.folds, cfg.folds
        )));
    }

    let grid = cfg
        .hidden_widths
        .clone()
        .unwrap_or_else(|| default_h_grid(bank.width()));
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::invalid("hidden width grid must be non-empty and positive"));
    }

    let fold_of = fold_assignment(bank, cfg.folds, cfg.seed);
    let mut candidates = Vec::with_capacity(grid.len());
    for &h in &grid {
        let fold_aurocs: Vec<Result<f64>> = exec::map_range(cfg.folds, |fold| {
            let train_rows: Vec<usize> = (0..bank.len()).filter(|&i| fold_of[i] != fold).collect();
            let val_rows: Vec<usize> = (0..bank.len()).filter(|&i| fold_of[i] == fold).collect();
            let cs = fit_cs(
                bank,
                &train_rows,
                h,
                cfg,
                seed::derive_tagged(cfg.seed, "cs-fold", &[h as u64, fold as u64]),
            )?;
            let val = bank.subset(&val_rows)?;
            let scores = cs.score(&val.features)?;
            Ok(roc_auroc(&scores, &val.labels)?.auroc)
        });
        let fold_aurocs: Vec<f64> = fold_aurocs.into_iter().collect::<Result<_>>()?;
        let mean_auroc = fold_aurocs.iter().sum::<f64>() / fold_aurocs.len() as f64;
        candidates.push(HCandidateScore {
            hidden_width: h,
            fold_aurocs,
            mean_auroc,
        });
    }

    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.mean_auroc > best.mean_auroc {
            best = c;
        }
    }
    let chosen_width = best.hidden_width;
    let all_rows: Vec<usize> = (0..bank.len()).collect();
    let cs = fit_cs(
        bank,
        &all_rows,
        chosen_width,
        cfg,
        seed::derive_tagged(cfg.seed, "cs-final", &[chosen_width as u64]),
    )?;
    Ok((
        cs,
        CsSelectionReport {
            candidates,
            chosen_width,
        },
    ))
}

/// Misclassification / correct-classification costs for the optimal
/// operating point: `c_fp = C(P|N)`, `c_fn = C(N|P)`, `c_tn = C(N|N)`,
/// `c_tp = C(P|P)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_tn: f64,
    pub c_tp: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            c_fp: 0.5,
            c_fn: 0.5,
            c_tn: 0.0,
            c_tp: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub s_op: f64,
    pub fpr: f64,
    pub tpr: f64,
    /// Set when the ROC was degenerate (a single real operating point).
    pub degenerate: bool,
}

/// Estimates the confidence cut-off from the ROC optimal operating point.
///
/// `S_op = [(C(P|N) - C(N|N)) / (C(N|P) - C(P|P))] * (N/P)`; a line of
/// slope `S_op` swept down from `(FPR 0, TPR 1)` first touches the ROC
/// point maximizing `TPR - S_op * FPR`, ties broken toward lower FPR. The
/// returned delta is that point's score threshold.
pub fn estimate_delta(
    roc: &RocCurve,
    costs: &CostSpec,
    pos_count: usize,
    neg_count: usize,
) -> Result<DeltaEstimate> {
    if pos_count == 0 || neg_count == 0 {
        return Err(Error::invalid("both classes must be present for delta estimation"));
    }
    let denom = costs.c_fn - costs.c_tp;
    if denom == 0.0 {
        return Err(Error::invalid("cost denominator C(N|P) - C(P|P) is zero"));
    }
    let s_op = (costs.c_fp - costs.c_tn) / denom * (neg_count as f64 / pos_count as f64);

    // points[0] is the artificial (0, 0, +inf) corner, not an operating point
    let real = &roc.points[1..];
    if real.is_empty() {
        return Err(Error::invalid("ROC curve has no operating points"));
    }
    // epsilon absorbs 1-ulp wobble in tpr - s_op * fpr so exact ties keep
    // the earlier (lower FPR) point
    let eps = 1e-12 * (1.0 + s_op.abs());
    let mut best = &real[0];
    for p in &real[1..] {
        if p.tpr - s_op * p.fpr > best.tpr - s_op * best.fpr + eps {
            best = p;
        }
    }
    Ok(DeltaEstimate {
        delta: best.threshold,
        s_op,
        fpr: best.fpr,
        tpr: best.tpr,
        degenerate: real.len() == 1,
    })
}

/// Inference verdict for one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Known(usize),
    Unknown,
}

impl Verdict {
    pub fn is_known(&self) -> bool {
        matches!(self, Verdict::Known(_))
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub verdict: Verdict,
    /// Backbone class probabilities, reported regardless of the verdict.
    pub class_probs: Vec<f64>,
    pub argmax_class: usize,
    pub max_prob: f64,
    pub confidence: f64,
}

/// The assembled recognizer: backbone + confidence subnetwork + cut-off.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetRecognizer {
    pub backbone: BackboneNet,
    pub cs: ConfidenceSubnetwork,
    pub delta: f64,
}

/// Attaches a trained CS to a backbone. The backbone's parameters are
/// moved, not modified: classification outputs are identical before and
/// after assembly.
pub fn assemble(backbone: BackboneNet, cs: ConfidenceSubnetwork, delta: f64) -> Result<OpenSetRecognizer> {
    if cs.input_width() != backbone.fc1_width() {
        return Err(Error::ShapeMismatch {
            layer: "cs.h1".into(),
            expected: format!("input width {}", backbone.fc1_width()),
            actual: format!("input width {}", cs.input_width()),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} must lie in (0, 1)")));
    }
    Ok(OpenSetRecognizer { backbone, cs, delta })
}

impl OpenSetRecognizer {
    /// Gated inference: verdict is `Known(argmax)` iff `S < delta`
    /// (boundary `S == delta` rejects).
    pub fn infer(&self, batch: &Tensor) -> Result<Vec<Inference>> {
        let pass = self.backbone.forward(batch)?;
        let scores = self.cs.score(&pass.fc1)?;
        let mut out = Vec::with_capacity(scores.len());
        for (i, s) in scores.iter().enumerate() {
            let probs = pass.probs.outer(i).to_vec();
            let arg = argmax(&probs);
            out.push(Inference {
                verdict: if *s < self.delta {
                    Verdict::Known(arg)
                } else {
                    Verdict::Unknown
                },
                max_prob: probs[arg],
                argmax_class: arg,
                class_probs: probs,
                confidence: *s,
            });
        }
        Ok(out)
    }

    /// Confidence scores for every item of a dataset.
    pub fn confidence_scores(&self, ds: &LabeledDataset) -> Result<Vec<f64>> {
        let pass = self.backbone.forward(&ds.full_batch()?)?;
        self.cs.score(&pass.fc1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synth_gaussians, GaussianClassSpec};

    fn blob(name: &str, mean: Vec<f64>, count: usize) -> GaussianClassSpec {
        GaussianClassSpec {
            name: name.into(),
            mean,
            scale: 0.4,
            count,
        }
    }

    fn separable_bank() -> FeatureBank {
        // two disjoint 2-d blobs, 500/500
        let kk = synth_gaussians(&[blob("kk", vec![2.0, 2.0], 500)], 5, "kk").unwrap();
        let ku = synth_gaussians(&[blob("ku", vec![-2.0, -2.0], 500)], 6, "ku").unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for item in kk.items() {
            data.extend_from_slice(item.sample.data());
            labels.push(0u8);
        }
        for item in ku.items() {
            data.extend_from_slice(item.sample.data());
            labels.push(1u8);
        }
        FeatureBank {
            features: Tensor::new(vec![1000, 2], data).unwrap(),
            labels,
        }
    }

    #[test]
    fn bank_counts() {
        let bank = separable_bank();
        assert_eq!(bank.len(), 1000);
        assert_eq!(bank.count(0), 500);
        assert_eq!(bank.count(1), 500);
    }

    #[test]
    fn linearly_separable_bank_trains_to_high_auroc() {
        let bank = separable_bank();
        let mut cfg = CsTrainConfig::new(3);
        cfg.folds = 5;
        cfg.epochs = 30;
        cfg.hidden_widths = Some(vec![4]);
        let (cs, report) = train_cs(&bank, &cfg).unwrap();
        assert!(report.candidates[0].mean_auroc >= 0.99, "mean {}", report.candidates[0].mean_auroc);
        let scores = cs.score(&bank.features).unwrap();
        assert!(scores.iter().all(|s| *s > 0.0 && *s < 1.0));
        let roc = roc_auroc(&scores, &bank.labels).unwrap();
        assert!(roc.auroc >= 0.99);
    }

    #[test]
    fn h_grid_defaults_match_feature_width_rule() {
        assert_eq!(default_h_grid(128), vec![64, 128, 256]);
        assert_eq!(default_h_grid(256), vec![128, 256, 512]);
    }

    #[test]
    fn single_class_bank_rejected() {
        let bank = FeatureBank {
            features: Tensor::new(vec![20, 2], vec![0.1; 40]).unwrap(),
            labels: vec![0; 20],
        };
        assert!(train_cs(&bank, &CsTrainConfig::new(0)).is_err());
    }

    #[test]
    fn fold_assignment_is_pure_in_index_and_seed() {
        let bank = separable_bank();
        let a = fold_assignment(&bank, 10, 42);
        let b = fold_assignment(&bank, 10, 42);
        assert_eq!(a, b);
        let c = fold_assignment(&bank, 10, 43);
        assert_ne!(a, c);
        // stratified round-robin puts items of each class in every fold
        for fold in 0..10 {
            for label in [0u8, 1u8] {
                let n = (0..bank.len())
                    .filter(|&i| a[i] == fold && bank.labels[i] == label)
                    .count();
                assert!(n > 0);
            }
        }
    }

    #[test]
    fn cs_gradients_match_finite_differences() {
        // wide enough that no sample kills an entire relu layer, which
        // would park a pre-activation exactly on the kink where central
        // differences and the subgradient legitimately disagree
        let bank = separable_bank();
        let mut cs = ConfidenceSubnetwork::new(2, 8, WeightInit::XavierUniform, 9).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let (_, grads) = cs.backward(&bank, &rows);
        let h = 1e-6;
        for pi in 0..6 {
            for i in 0..grads[pi].len() {
                let orig = cs.param_slices_mut()[pi][i];
                cs.param_slices_mut()[pi][i] = orig + h;
                let scores_p = cs.score(&bank.subset(&rows).unwrap().features).unwrap();
                cs.param_slices_mut()[pi][i] = orig - h;
                let scores_m = cs.score(&bank.subset(&rows).unwrap().features).unwrap();
                cs.param_slices_mut()[pi][i] = orig;
                let loss = |scores: &[f64]| -> f64 {
                    let mut l = 0.0;
                    for (k, &r) in rows.iter().enumerate() {
                        let t = f64::from(bank.labels[r]);
                        let s = scores[k].clamp(1e-12, 1.0 - 1e-12);
                        l -= (t * s.ln() + (1.0 - t) * (1.0 - s).ln()) / rows.len() as f64;
                    }
                    l
                };
                let fd = (loss(&scores_p) - loss(&scores_m)) / (2.0 * h);
                let rel = (grads[pi][i] - fd).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-6, "param {pi}[{i}]: analytic {} fd {fd}", grads[pi][i]);
            }
        }
    }

    #[test]
    fn delta_equal_costs_balanced_slope_one() {
        let scores = [0.9, 0.8, 0.3, 0.7, 0.2, 0.1];
        let labels = [1, 1, 1, 0, 0, 0];
        let roc = roc_auroc(&scores, &labels).unwrap();
        let est = estimate_delta(&roc, &CostSpec::default(), 3, 3).unwrap();
        assert_eq!(est.s_op, 1.0);
        // brute-force over the hand case: best point accepts {0.9, 0.8}
        assert_eq!(est.delta, 0.8);
        assert_eq!(est.fpr, 0.0);
        assert!((est.tpr - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn delta_separable_scores_sit_in_the_gap() {
        let scores = [0.9, 0.85, 0.8, 0.3, 0.2, 0.1];
        let labels = [1, 1, 1, 0, 0, 0];
        let roc = roc_auroc(&scores, &labels).unwrap();
        let est = estimate_delta(&roc, &CostSpec::default(), 3, 3).unwrap();
        assert_eq!((est.fpr, est.tpr), (0.0, 1.0));
        assert!(est.delta > 0.3 && est.delta <= 0.8);
    }

    #[test]
    fn delta_degenerate_single_point_flagged() {
        let scores = [0.5, 0.5, 0.5, 0.5];
        let labels = [1, 0, 1, 0];
        let roc = roc_auroc(&scores, &labels).unwrap();
        let est = estimate_delta(&roc, &CostSpec::default(), 2, 2).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.delta, 0.5);
    }

    #[test]
    fn gating_boundary_is_strict() {
        let backbone = BackboneNet::mlp(2, &[4], 3, 2, 1).unwrap();
        let cs = ConfidenceSubnetwork::new(3, 4, WeightInit::XavierUniform, 2).unwrap();
        let osr = assemble(backbone, cs, 0.5).unwrap();
        let batch = Tensor::new(vec![4, 2], vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.0, 0.0]).unwrap();
        let inferences = osr.infer(&batch).unwrap();
        for inf in &inferences {
            let expect_known = inf.confidence < 0.5;
            assert_eq!(inf.verdict.is_known(), expect_known);
            let s: f64 = inf.class_probs.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_score_equal_to_delta_is_unknown() {
        // zero output weights pin every confidence score at sigmoid(0) = 0.5
        let backbone = BackboneNet::mlp(2, &[4], 3, 2, 1).unwrap();
        let cs = ConfidenceSubnetwork::new(3, 4, WeightInit::Zeros, 2).unwrap();
        let batch = Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0]).unwrap();

        let at_boundary = assemble(backbone.clone(), cs.clone(), 0.5).unwrap();
        for inf in at_boundary.infer(&batch).unwrap() {
            assert_eq!(inf.confidence, 0.5);
            assert_eq!(inf.verdict, Verdict::Unknown); // S == delta rejects
        }
        let above = assemble(backbone, cs, 0.5000001).unwrap();
        for inf in above.infer(&batch).unwrap() {
            assert!(inf.verdict.is_known());
        }
    }

    #[test]
    fn train_cs_is_deterministic_per_bank_and_seed() {
        let bank = separable_bank();
        let mut cfg = CsTrainConfig::new(7);
        cfg.folds = 3;
        cfg.epochs = 10;
        cfg.hidden_widths = Some(vec![3]);
        let (a, _) = train_cs(&bank, &cfg).unwrap();
        let (b, _) = train_cs(&bank, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 8;
        let (c, _) = train_cs(&bank, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn assemble_rejects_width_mismatch_and_bad_delta() {
        let backbone = BackboneNet::mlp(2, &[4], 3, 2, 1).unwrap();
        let cs = ConfidenceSubnetwork::new(4, 4, WeightInit::XavierUniform, 2).unwrap();
        assert!(assemble(backbone.clone(), cs, 0.5).is_err());
        let cs = ConfidenceSubnetwork::new(3, 4, WeightInit::XavierUniform, 2).unwrap();
        assert!(assemble(backbone, cs, 1.0).is_err());
    }

    #[test]
    fn non_interference_on_argmax() {
        let kk = synth_gaussians(
            &[blob("a", vec![2.0, 0.0], 30), blob("b", vec![-2.0, 0.0], 30)],
            8,
            "kk",
        )
        .unwrap();
        let mut backbone = BackboneNet::mlp(2, &[6], 4, 2, 3).unwrap();
        crate::nn::train_backbone(&mut backbone, &kk, &crate::nn::TrainConfig::new(10, 16, 5)).unwrap();
        let batch = kk.full_batch().unwrap();
        let bare = backbone.forward(&batch).unwrap();
        let cs = ConfidenceSubnetwork::new(4, 4, WeightInit::XavierUniform, 2).unwrap();
        let osr = assemble(backbone, cs, 0.5).unwrap();
        let inferences = osr.infer(&batch).unwrap();
        for (i, inf) in inferences.iter().enumerate() {
            assert_eq!(inf.argmax_class, argmax(bare.probs.outer(i)));
            assert_eq!(inf.class_probs, bare.probs.outer(i).to_vec());
        }
    }
}
