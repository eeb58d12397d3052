//! Known-unknown mining: scoring an auxiliary dataset with a trained
//! backbone, admitting items whose top probability exceeds a threshold T,
//! and selecting T from the maximum of a least-squares cubic fitted to
//! (T, AUROC) sample points.

use crate::datasets::{DatasetItem, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::roc_auroc;
use crate::exec;
use crate::nn::BackboneNet;
use crate::osrnet::{build_feature_bank, train_cs, CsTrainConfig};
use crate::seed;
use crate::tensor::argmax;

/// Class label given to every mined known-unknown item.
pub const KNOWN_UNKNOWN_CLASS: &str = "known_unknown";

/// Per-item score of an auxiliary dataset item.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxScore {
    pub max_prob: f64,
    pub entropy_bits: f64,
}

/// An auxiliary dataset together with per-item backbone scores, aligned by
/// index.
#[derive(Debug, Clone)]
pub struct ScoredAux {
    pub dataset: LabeledDataset,
    pub scores: Vec<AuxScore>,
}

/// Shannon entropy in bits of a probability vector, with `0 log 0 := 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::invalid("entropy of empty vector"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("entropy needs non-negative finite probabilities"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(p.iter()
        .map(|&v| if v > 0.0 { -v * v.log2() } else { 0.0 })
        .sum())
}

/// Runs the auxiliary dataset through the backbone and records each item's
/// maximum softmax probability and entropy. The auxiliary classes must be
/// disjoint from the backbone's training classes; when the aux set shares
/// an origin with the training data the overlap check is by construction
/// impossible to satisfy, so it is rejected outright.
pub fn score_aux(net: &BackboneNet, d_x: &LabeledDataset) -> Result<ScoredAux> {
    if d_x.is_empty() {
        return Err(Error::invalid("auxiliary dataset is empty"));
    }
    let trained: std::collections::BTreeSet<&str> =
        net.class_names().iter().map(|s| s.as_str()).collect();
    let overlap: Vec<&str> = d_x
        .class_names()
        .iter()
        .map(|s| s.as_str())
        .filter(|n| trained.contains(n))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::ClassOverlap(format!(
            "auxiliary classes {overlap:?} appear in the backbone's training classes"
        )));
    }
    if !net.origin().is_empty() && d_x.origins().contains(net.origin()) {
        return Err(Error::ClassOverlap(format!(
            "auxiliary items share origin {:?} with the backbone's training data",
            net.origin()
        )));
    }

    let pass = net.forward(&d_x.full_batch()?)?;
    let scores = exec::map_range(d_x.len(), |i| {
        let row = pass.probs.outer(i);
        AuxScore {
            max_prob: row[argmax(row)],
            entropy_bits: entropy(row).expect("softmax rows are valid distributions"),
        }
    });
    Ok(ScoredAux {
        dataset: d_x.clone(),
        scores,
    })
}

/// Result of mining: the admitted items under one class tag, plus a
/// warning when nothing was admitted (downstream CS training rejects an
/// empty trainer set).
#[derive(Debug, Clone)]
pub struct MiningResult {
    pub kut: LabeledDataset,
    pub threshold: f64,
    pub warning: Option<String>,
}

/// Admits exactly the items with `max_prob > T` (strict), preserving
/// order. Original class ids are replaced by the single known-unknown tag.
pub fn mine_kut(scored: &ScoredAux, t: f64) -> Result<MiningResult> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
    }
    let mut items = Vec::new();
    for (item, score) in scored.dataset.items().iter().zip(&scored.scores) {
        if score.max_prob > t {
            items.push(DatasetItem {
                sample: item.sample.clone(),
                class_id: 0,
                origin: item.origin.clone(),
            });
        }
    }
    let warning = if items.is_empty() {
        Some(format!("no auxiliary item has max_prob > {t}; lower T"))
    } else {
        None
    };
    let kind = scored.dataset.kind();
    let kut = if items.is_empty() {
        LabeledDataset::new(Vec::new(), vec![KNOWN_UNKNOWN_CLASS.to_string()], kind)?
    } else {
        LabeledDataset::new(items, vec![KNOWN_UNKNOWN_CLASS.to_string()], kind)?
    };
    Ok(MiningResult {
        kut,
        threshold: t,
        warning,
    })
}

/// A fitted AUROC-vs-T cubic `F(T) = A + BT + CT^2 + DT^3` and the
/// location of its maximum over the sampled T range.
#[derive(Debug, Clone)]
pub struct ThresholdCurve {
    /// `[A, B, C, D]`, constant term first.
    pub coefficients: [f64; 4],
    pub sample_points: Vec<(f64, f64)>,
    pub t_star: f64,
}

impl ThresholdCurve {
    pub fn eval(&self, t: f64) -> f64 {
        let [a, b, c, d] = self.coefficients;
        a + b * t + c * t * t + d * t * t * t
    }
}

/// Solves a small linear system by Gaussian elimination with partial
/// pivoting. Rejects (near-)singular systems.
fn solve_linear(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::invalid("rank-deficient system"));
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = v[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

/// Least-squares cubic through the (T, AUROC) sample points, with T
/// rescaled to `[0, 1]` before solving the normal equations for
/// conditioning and the coefficients mapped back afterward.
///
/// `t_star` is the argmax of the fitted cubic over the sampled T range:
/// real roots of `F'(T) = B + 2CT + 3DT^2` that lie in range with
/// `F'' < 0` are compared against both endpoints. Points are sorted by T
/// first so the fit is invariant under reordering of the inputs.
pub fn fit_threshold_curve(points: &[(f64, f64)]) -> Result<ThresholdCurve> {
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "cubic fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in pts.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::invalid(format!(
                "duplicate T value {} makes the system rank-deficient",
                pair[0].0
            )));
        }
    }
    let t_min = pts.first().unwrap().0;
    let t_max = pts.last().unwrap().0;
    let span = t_max - t_min;

    // Normal equations on the rescaled Vandermonde, using the Chebyshev
    // basis over u in [-1, 1]: the power basis squares an already large
    // condition number and cannot reproduce exact cubics to 1e-9 in f64.
    let cheb = |u: f64| [1.0, u, 2.0 * u * u - 1.0, 4.0 * u * u * u - 3.0 * u];
    let mut m = vec![vec![0.0f64; 4]; 4];
    let mut rhs = vec![0.0f64; 4];
    for &(t, y) in &pts {
        let u = 2.0 * (t - t_min) / span - 1.0;
        let basis = cheb(u);
        for j in 0..4 {
            rhs[j] += y * basis[j];
            for k in 0..4 {
                m[j][k] += basis[j] * basis[k];
            }
        }
    }
    let mut coeff_c = solve_linear(m.clone(), rhs.clone())?;
    // one step of iterative refinement
    let mut residual = vec![0.0; 4];
    for j in 0..4 {
        let mut acc = rhs[j];
        for k in 0..4 {
            acc = (-m[j][k]).mul_add(coeff_c[k], acc);
        }
        residual[j] = acc;
    }
    if let Ok(correction) = solve_linear(m, residual) {
        for (c, d) in coeff_c.iter_mut().zip(correction) {
            *c += d;
        }
    }

    // Chebyshev -> power basis in u
    let b = [
        coeff_c[0] - coeff_c[2],
        coeff_c[1] - 3.0 * coeff_c[3],
        2.0 * coeff_c[2],
        4.0 * coeff_c[3],
    ];
    // substitute u = alpha*t + beta to get powers of t
    let alpha = 2.0 / span;
    let beta = -(t_min + t_max) / span;
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let mut coefficients = [0.0f64; 4];
    for (k, &bk) in b.iter().enumerate() {
        for j in 0..=k {
            coefficients[j] +=
                bk * binom[k][j] * alpha.powi(j as i32) * beta.powi((k - j) as i32);
        }
    }

    let t_star = locate_maximum(&coefficients, t_min, t_max);
    Ok(ThresholdCurve {
        coefficients,
        sample_points: pts,
        t_star,
    })
}

fn locate_maximum(coefficients: &[f64; 4], t_min: f64, t_max: f64) -> f64 {
    let [_, b, c, d] = *coefficients;
    let f = |t: f64| {
        let [a0, b0, c0, d0] = *coefficients;
        a0 + b0 * t + c0 * t * t + d0 * t * t * t
    };
    let second = |t: f64| 2.0 * c + 6.0 * d * t;

    let mut candidates: Vec<f64> = Vec::new();
    let scale = b.abs().max(c.abs()).max(d.abs()).max(1.0);
    if d.abs() > 1e-12 * scale {
        // F' = 3D t^2 + 2C t + B
        let disc = 4.0 * c * c - 12.0 * d * b;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for root in [(-2.0 * c + sq) / (6.0 * d), (-2.0 * c - sq) / (6.0 * d)] {
                if root >= t_min && root <= t_max && second(root) < 0.0 {
                    candidates.push(root);
                }
            }
        }
    } else if c.abs() > 1e-12 * scale {
        let root = -b / (2.0 * c);
        if root >= t_min && root <= t_max && second(root) < 0.0 {
            candidates.push(root);
        }
    }
    candidates.push(t_min);
    candidates.push(t_max);
    candidates.sort_by(f64::total_cmp);

    let mut best = candidates[0];
    for &t in &candidates[1..] {
        if f(t) > f(best) {
            best = t;
        }
    }
    best
}

/// Everything a threshold sweep needs: the trained backbone, the scored
/// auxiliary set, the KK training fold for feature banks, the evaluation
/// folds, and how to train each candidate's CS.
pub struct SweepContext<'a> {
    pub backbone: &'a BackboneNet,
    pub scored: &'a ScoredAux,
    pub d_kk_train: &'a LabeledDataset,
    /// Evaluation fold of known-known items (AUROC label 0).
    pub eval_kk: &'a LabeledDataset,
    /// Evaluation fold of unknown items (AUROC label 1).
    pub eval_uu: &'a LabeledDataset,
    pub cs_config: &'a CsTrainConfig,
    /// Independently seeded CS trainings averaged per candidate; damps
    /// single-model training noise so the threshold trend is visible.
    pub replicates: usize,
}

/// One sweep sample. `auroc` is absent when the candidate admitted no
/// items, or too few to train on (never fabricated).
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t: f64,
    pub auroc: Option<f64>,
    pub mean_admitted_entropy: Option<f64>,
    pub kut_size: usize,
    pub chosen_width: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub warnings: Vec<String>,
}

/// For each candidate T: mine, train a CS, and measure the AUROC of its
/// confidence scores on the evaluation folds; also records the mean
/// entropy of the admitted items. Candidates are independent given their
/// derived seeds and run in parallel under the `parallel` feature.
pub fn sweep_thresholds(ctx: &SweepContext<'_>, candidates: &[f64]) -> Result<SweepReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("no sweep candidates"));
    }
    let mut warnings = Vec::new();
    let mut unique: Vec<f64> = Vec::new();
    for &t in candidates {
        if unique.contains(&t) {
            warnings.push(format!("duplicate sweep candidate {t} dropped"));
        } else {
            unique.push(t);
        }
    }

    let results: Vec<(SweepPoint, Option<String>)> = exec::map_range(unique.len(), |i| {
        let t = unique[i];
        let absent = |kut_size: usize, why: Option<String>| {
            (
                SweepPoint {
                    t,
                    auroc: None,
                    mean_admitted_entropy: None,
                    kut_size,
                    chosen_width: None,
                },
                why,
            )
        };
        let mined = match mine_kut(ctx.scored, t) {
            Ok(m) => m,
            Err(e) => return absent(0, Some(format!("T = {t}: {e}"))),
        };
        let kut_size = mined.kut.len();
        if kut_size == 0 {
            return absent(0, Some(format!("T = {t}: no items admitted")));
        }
        let admitted_entropy = ctx
            .scored
            .scores
            .iter()
            .filter(|s| s.max_prob > t)
            .map(|s| s.entropy_bits)
            .sum::<f64>()
            / kut_size as f64;

        let bank = match build_feature_bank(ctx.backbone, ctx.d_kk_train, &mined.kut) {
            Ok(b) => b,
            Err(e) => return absent(kut_size, Some(format!("T = {t}: {e}"))),
        };

        let evaluated = (|| -> Result<(f64, usize)> {
            let kk_features = ctx.backbone.forward(&ctx.eval_kk.full_batch()?)?.fc1;
            let uu_features = ctx.backbone.forward(&ctx.eval_uu.full_batch()?)?.fc1;
            let replicates = ctx.replicates.max(1);
            let mut auroc_sum = 0.0;
            let mut first_width = 0;
            for r in 0..replicates {
                let mut cs_cfg = ctx.cs_config.clone();
                cs_cfg.seed =
                    seed::derive_tagged(ctx.cs_config.seed, "sweep", &[i as u64, r as u64]);
                let (cs, selection) = train_cs(&bank, &cs_cfg)?;
                if r == 0 {
                    first_width = selection.chosen_width;
                }
                let mut scores = cs.score(&kk_features)?;
                let mut labels = vec![0u8; scores.len()];
                scores.extend(cs.score(&uu_features)?);
                labels.extend(std::iter::repeat_n(1u8, uu_features.outer_len()));
                auroc_sum += roc_auroc(&scores, &labels)?.auroc;
            }
            Ok((auroc_sum / replicates as f64, first_width))
        })();
        match evaluated {
            Ok((auroc, width)) => (
                SweepPoint {
                    t,
                    auroc: Some(auroc),
                    mean_admitted_entropy: Some(admitted_entropy),
                    kut_size,
                    chosen_width: Some(width),
                },
                None,
            ),
            // a starved candidate (too few admitted items to cross-validate)
            // is reported absent, never fabricated
            Err(e) => absent(kut_size, Some(format!("T = {t}: {e}"))),
        }
    });
    let mut points = Vec::with_capacity(results.len());
    for (point, warning) in results {
        if let Some(w) = warning {
            warnings.push(w);
        }
        points.push(point);
    }
    Ok(SweepReport { points, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synth_gaussians, DatasetKind, GaussianClassSpec};
    use crate::nn::{train_backbone, TrainConfig};

    fn blob(name: &str, mean: Vec<f64>, count: usize) -> GaussianClassSpec {
        GaussianClassSpec {
            name: name.into(),
            mean,
            scale: 0.4,
            count,
        }
    }

    fn scored_fixture() -> ScoredAux {
        let kk = synth_gaussians(
            &[blob("a", vec![3.0, 0.0], 60), blob("b", vec![-3.0, 0.0], 60)],
            1,
            "kk_world",
        )
        .unwrap();
        let mut net = crate::nn::BackboneNet::mlp(2, &[8], 4, 2, 2).unwrap();
        train_backbone(&mut net, &kk, &TrainConfig::new(15, 16, 3)).unwrap();
        let aux = synth_gaussians(
            &[blob("x0", vec![2.0, 1.0], 40), blob("x1", vec![0.0, 4.0], 40)],
            4,
            "aux_world",
        )
        .unwrap();
        score_aux(&net, &aux).unwrap()
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let u10 = vec![0.1; 10];
        assert!((entropy(&u10).unwrap() - 10.0f64.log2()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(entropy(&[0.5, 0.4]).is_err());
        assert!(entropy(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn entropy_permutation_invariant_and_uniform_maximal() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let q = [0.4, 0.1, 0.3, 0.2];
        assert!((entropy(&p).unwrap() - entropy(&q).unwrap()).abs() < 1e-12);
        assert!(entropy(&[0.25; 4]).unwrap() > entropy(&p).unwrap());
    }

    #[test]
    fn zero_weight_net_scores_uniform() {
        let net = crate::nn::BackboneNet::new(
            &[2],
            &[],
            3,
            4,
            crate::nn::WeightInit::Zeros,
            0,
        )
        .unwrap();
        let aux = synth_gaussians(&[blob("x", vec![0.0, 0.0], 10)], 3, "aux").unwrap();
        let scored = score_aux(&net, &aux).unwrap();
        for s in &scored.scores {
            assert!((s.max_prob - 0.25).abs() < 1e-12);
            assert!((s.entropy_bits - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_match_independent_forward_reimplementation() {
        // naive second implementation of the forward pass, built from the
        // raw parameter arrays with its own matmul and softmax
        let scored = scored_fixture();
        let kk = synth_gaussians(
            &[blob("a", vec![3.0, 0.0], 60), blob("b", vec![-3.0, 0.0], 60)],
            1,
            "kk_world",
        )
        .unwrap();
        let mut net = crate::nn::BackboneNet::mlp(2, &[8], 4, 2, 2).unwrap();
        train_backbone(&mut net, &kk, &TrainConfig::new(15, 16, 3)).unwrap();

        let params = net.param_slices();
        let dense = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            let input = x.len();
            b.iter()
                .enumerate()
                .map(|(o, bias)| {
                    bias + (0..input).map(|i| w[o * input + i] * x[i]).sum::<f64>()
                })
                .collect()
        };
        let relu = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|z| z.max(0.0)).collect() };
        let naive_max_prob = |x: &[f64]| -> f64 {
            let h = relu(dense(params[0], params[1], x));
            let a1 = relu(dense(params[2], params[3], &h));
            let logits = dense(params[4], params[5], &a1);
            let exps: Vec<f64> = logits.iter().map(|z| z.exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().map(|e| e / sum).fold(f64::MIN, f64::max)
        };

        for (item, score) in scored.dataset.items().iter().take(100).zip(&scored.scores) {
            let want = naive_max_prob(item.sample.data());
            assert!(
                (score.max_prob - want).abs() < 1e-12,
                "recorded {} vs naive {want}",
                score.max_prob
            );
        }
    }

    #[test]
    fn score_aux_rejects_class_overlap_and_shared_origin() {
        let kk = synth_gaussians(&[blob("a", vec![1.0], 20), blob("b", vec![-1.0], 20)], 1, "base").unwrap();
        let mut net = crate::nn::BackboneNet::mlp(1, &[4], 3, 2, 2).unwrap();
        train_backbone(&mut net, &kk, &TrainConfig::new(3, 8, 3)).unwrap();

        let overlapping = synth_gaussians(&[blob("b", vec![5.0], 5)], 9, "elsewhere").unwrap();
        assert!(matches!(score_aux(&net, &overlapping), Err(Error::ClassOverlap(_))));

        let same_origin = synth_gaussians(&[blob("z", vec![5.0], 5)], 9, "base").unwrap();
        assert!(matches!(score_aux(&net, &same_origin), Err(Error::ClassOverlap(_))));
    }

    #[test]
    fn mining_thresholds() {
        let scored = scored_fixture();
        let all = mine_kut(&scored, 0.0).unwrap();
        assert_eq!(all.kut.len(), scored.dataset.len());
        assert!(all.warning.is_none());

        let none = mine_kut(&scored, 1.0).unwrap();
        assert_eq!(none.kut.len(), 0);
        assert!(none.warning.is_some());
    }

    #[test]
    fn mining_is_strict_and_order_preserving() {
        let scored = scored_fixture();
        let mut hacked = scored.clone();
        let probs = [0.95, 0.81, 0.80, 0.5, 0.3];
        for (s, p) in hacked.scores.iter_mut().zip(probs) {
            s.max_prob = p;
        }
        hacked.scores.truncate(5);
        let mut ds_items = hacked.dataset.items()[..5].to_vec();
        for (k, item) in ds_items.iter_mut().enumerate() {
            item.sample.data_mut()[0] = k as f64;
        }
        hacked.dataset =
            LabeledDataset::new(ds_items, hacked.dataset.class_names().to_vec(), DatasetKind::Vector)
                .unwrap();
        let mined = mine_kut(&hacked, 0.8).unwrap();
        assert_eq!(mined.kut.len(), 2); // 0.80 excluded by strict >
        assert_eq!(mined.kut.items()[0].sample.data()[0], 0.0);
        assert_eq!(mined.kut.items()[1].sample.data()[0], 1.0);
        assert_eq!(mined.kut.class_names(), &[KNOWN_UNKNOWN_CLASS.to_string()]);
    }

    #[test]
    fn anti_monotone_inclusion() {
        let scored = scored_fixture();
        let low = mine_kut(&scored, 0.55).unwrap().kut;
        let high = mine_kut(&scored, 0.75).unwrap().kut;
        assert!(high.len() <= low.len());
        // every admitted-high item appears in admitted-low, in order
        let mut cursor = 0;
        for item in high.items() {
            while cursor < low.len() && low.items()[cursor].sample != item.sample {
                cursor += 1;
            }
            assert!(cursor < low.len(), "high-threshold item missing at low threshold");
        }
    }

    #[test]
    fn cubic_fit_recovers_exact_polynomial() {
        // F(T) = 1 + 2T - 0.03T^2 (D = 0)
        let f = |t: f64| 1.0 + 2.0 * t - 0.03 * t * t;
        let points: Vec<(f64, f64)> = [0.0, 20.0, 40.0, 60.0].iter().map(|&t| (t, f(t))).collect();
        let curve = fit_threshold_curve(&points).unwrap();
        let want = [1.0, 2.0, -0.03, 0.0];
        for (got, want) in curve.coefficients.iter().zip(want) {
            assert!((got - want).abs() < 1e-9, "{:?}", curve.coefficients);
        }
        // maximum of the parabola at T = B / (2 |C|) = 33.333..
        assert!((curve.t_star - 100.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn fit_rejects_few_or_duplicate_points() {
        assert!(fit_threshold_curve(&[(1.0, 1.0), (2.0, 2.0), (3.0, 1.0)]).is_err());
        assert!(fit_threshold_curve(&[(1.0, 1.0), (2.0, 2.0), (2.0, 1.5), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn monotone_cubic_picks_endpoint() {
        let f = |t: f64| 0.001 * t * t * t + 0.5 * t;
        let points: Vec<(f64, f64)> = [60.0, 70.0, 80.0, 90.0].iter().map(|&t| (t, f(t))).collect();
        let curve = fit_threshold_curve(&points).unwrap();
        assert_eq!(curve.t_star, 90.0);
    }

    #[test]
    fn t_star_invariant_under_reordering() {
        let points = [(60.0, 75.60), (70.0, 78.85), (80.0, 89.25), (90.0, 86.32)];
        let shuffled = [(80.0, 89.25), (60.0, 75.60), (90.0, 86.32), (70.0, 78.85)];
        let a = fit_threshold_curve(&points).unwrap();
        let b = fit_threshold_curve(&shuffled).unwrap();
        assert_eq!(a.t_star.to_bits(), b.t_star.to_bits());
        // interior maximum of this grid sits between 80 and 90
        assert!(a.t_star > 80.0 && a.t_star < 90.0, "t* = {}", a.t_star);
    }

    #[test]
    fn fit_is_least_squares_minimum() {
        // overdetermined: 6 noisy points; perturbing any coefficient must
        // not lower the residual
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let t = i as f64 * 15.0 + 10.0;
                (t, 50.0 + 0.9 * t - 0.004 * t * t + ((i * 37) % 5) as f64 * 0.3)
            })
            .collect();
        let curve = fit_threshold_curve(&pts).unwrap();
        let residual = |c: &[f64; 4]| -> f64 {
            pts.iter()
                .map(|&(t, y)| {
                    let fit = c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
                    (fit - y) * (fit - y)
                })
                .sum()
        };
        let base = residual(&curve.coefficients);
        for k in 0..4 {
            for delta in [-1e-3, 1e-3] {
                let mut c = curve.coefficients;
                c[k] += delta;
                assert!(residual(&c) >= base - 1e-9);
            }
        }
    }
}
