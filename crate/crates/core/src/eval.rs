//! Measurement layer: ROC/AUROC with tie handling, top-1 accuracy, and
//! maximum mean discrepancy between feature sets.

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::BackboneNet;
use crate::tensor::{argmax, Tensor};

/// One ROC operating point. The decision rule at a point is
/// `score >= threshold -> positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Threshold-sweep ROC curve. Points are ordered by descending threshold,
/// starting at `(0, 0)` (threshold +inf) and ending at `(1, 1)`; tied
/// scores collapse into a single point.
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Builds the ROC curve and its trapezoidal area. Labels are binary with
/// 1 = positive; both classes must be present. The trapezoidal area equals
/// the pairwise statistic `P(s_pos > s_neg) + 0.5 P(s_pos = s_neg)`.
pub fn roc_auroc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("empty score list"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    if labels.iter().any(|l| *l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("both labels must be present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    // trapezoid area accumulated as an exact integer numerator over
    // 2 * n_pos * n_neg, so the area equals the pairwise win statistic to
    // the last bit and AUROC(s) + AUROC(-s) is exactly 1
    let mut area_twice = 0u64;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        // consume the whole tie group
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area_twice += (fp - prev_fp) * (tp + prev_tp);
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }

    let auroc = area_twice as f64 / (2 * n_pos as u64 * n_neg as u64) as f64;
    Ok(RocCurve { points, auroc })
}

/// Brute-force pairwise AUROC: fraction of (positive, negative) pairs
/// ranked correctly, ties counting half. O(n^2); the independent oracle
/// for the trapezoidal computation.
pub fn auroc_pairwise(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == 1)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == 0)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("both labels must be present"));
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// Fraction of positions where prediction equals label.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("accuracy of empty input"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Kernel selection for MMD. `Rbf { bandwidth: None }` resolves the
/// bandwidth with the median heuristic over the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { bandwidth: Option<f64> },
}

/// Kernel with any bandwidth resolution already applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { bandwidth: f64 },
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { bandwidth } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MmdResult {
    pub distance: f64,
    pub kernel: Kernel,
    /// True when the median heuristic degenerated (all points identical)
    /// and the bandwidth fell back to 1.
    pub bandwidth_fallback: bool,
}

fn median_bandwidth(x: &Tensor, y: &Tensor) -> f64 {
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(x.outer_len() + y.outer_len());
    for i in 0..x.outer_len() {
        pooled.push(x.outer(i));
    }
    for i in 0..y.outer_len() {
        pooled.push(y.outer(i));
    }
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            let sq: f64 = pooled[i]
                .iter()
                .zip(pooled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(sq.sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        (dists[mid - 1] + dists[mid]) / 2.0
    }
}

fn mmd_impl(x: &Tensor, y: &Tensor, kernel: KernelSpec, parallel: bool) -> Result<MmdResult> {
    if x.rank() != 2 || y.rank() != 2 {
        return Err(Error::invalid("mmd expects rank-2 [n, d] feature tensors"));
    }
    if x.inner_len() != y.inner_len() {
        return Err(Error::invalid(format!(
            "feature dims differ: {} vs {}",
            x.inner_len(),
            y.inner_len()
        )));
    }
    let n1 = x.outer_len();
    let n2 = y.outer_len();

    let mut fallback = false;
    let kernel = match kernel {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Rbf { bandwidth: Some(b) } => {
            if b <= 0.0 {
                return Err(Error::invalid("rbf bandwidth must be positive"));
            }
            Kernel::Rbf { bandwidth: b }
        }
        KernelSpec::Rbf { bandwidth: None } => {
            let med = median_bandwidth(x, y);
            if med == 0.0 {
                fallback = true;
                Kernel::Rbf { bandwidth: 1.0 }
            } else {
                Kernel::Rbf { bandwidth: med }
            }
        }
    };

    // Biased V-statistic: diagonal terms included, rows reduced in index
    // order so the parallel and sequential paths agree bitwise.
    let sum_pair = |a: &Tensor, b: &Tensor, par: bool| -> f64 {
        let row = |i: usize| {
            let ai = a.outer(i);
            let mut acc = 0.0;
            for j in 0..b.outer_len() {
                acc += kernel.eval(ai, b.outer(j));
            }
            acc
        };
        if par {
            exec::sum_range(a.outer_len(), row)
        } else {
            exec::sum_range_seq(a.outer_len(), row)
        }
    };

    let xx = sum_pair(x, x, parallel) / (n1 * n1) as f64;
    let yy = sum_pair(y, y, parallel) / (n2 * n2) as f64;
    let xy = sum_pair(x, y, parallel) / (n1 * n2) as f64;
    let squared = xx + yy - 2.0 * xy;
    Ok(MmdResult {
        distance: squared.max(0.0).sqrt(),
        kernel,
        bandwidth_fallback: fallback,
    })
}

/// Maximum mean discrepancy between two feature sets, computed through the
/// kernel expansion of the squared mean-embedding distance.
pub fn mmd(x: &Tensor, y: &Tensor, kernel: KernelSpec) -> Result<MmdResult> {
    mmd_impl(x, y, kernel, true)
}

/// Sequential variant of [`mmd`]; baseline for the benchmark suite.
pub fn mmd_seq(x: &Tensor, y: &Tensor, kernel: KernelSpec) -> Result<MmdResult> {
    mmd_impl(x, y, kernel, false)
}

/// Brute-force MMD oracle: evaluates the definition term by term with no
/// shared structure with [`mmd`]'s accumulation.
pub fn mmd_bruteforce(x: &Tensor, y: &Tensor, kernel: Kernel) -> f64 {
    let n1 = x.outer_len() as f64;
    let n2 = y.outer_len() as f64;
    let mut total = 0.0;
    for i in 0..x.outer_len() {
        for j in 0..x.outer_len() {
            total += kernel.eval(x.outer(i), x.outer(j)) / (n1 * n1);
        }
    }
    for i in 0..y.outer_len() {
        for j in 0..y.outer_len() {
            total += kernel.eval(y.outer(i), y.outer(j)) / (n2 * n2);
        }
    }
    for i in 0..x.outer_len() {
        for j in 0..y.outer_len() {
            total -= 2.0 * kernel.eval(x.outer(i), y.outer(j)) / (n1 * n2);
        }
    }
    total.max(0.0).sqrt()
}

/// "Unknown-ness" scores of the max-softmax-probability baseline:
/// `1 - max_i p_i` per item, so higher means more likely unknown.
pub fn msp_unknown_scores(net: &BackboneNet, ds: &LabeledDataset) -> Result<Vec<f64>> {
    let pass = net.forward(&ds.full_batch()?)?;
    Ok((0..ds.len())
        .map(|i| {
            let row = pass.probs.outer(i);
            1.0 - row[argmax(row)]
        })
        .collect())
}

/// MMD from the KK set to each named feature set, measured on the
/// backbone's final FC layer outputs, sorted ascending by distance.
pub fn compare_distribution_distances(
    net: &BackboneNet,
    d_kk: &LabeledDataset,
    others: &[(String, &LabeledDataset)],
    kernel: KernelSpec,
) -> Result<Vec<(String, f64)>> {
    if others.is_empty() {
        return Ok(Vec::new());
    }
    let kk_features = net.logits(&d_kk.full_batch()?)?;
    let mut table = Vec::with_capacity(others.len());
    for (name, ds) in others {
        let features = net.logits(&ds.full_batch()?)?;
        let result = mmd(&kk_features, &features, kernel)?;
        table.push((name.clone(), result.distance));
    }
    table.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(table)
}
