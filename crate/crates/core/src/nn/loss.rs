//! The two loss functions used in the pipeline.
//!
//! Multi-class cross-entropy is summed over the batch (no averaging);
//! binary cross-entropy is the full two-term form averaged over the batch.
//! Probabilities are clamped before the log so saturated outputs cannot
//! produce infinite losses.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_CLAMP_EPSILON: f64 = 1e-12;

fn validate_prob_row(row: &[f64], i: usize) -> Result<()> {
    if row.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) {
        return Err(Error::invalid(format!("probs row {i} has entries outside [0, 1]")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "probs row {i} sums to {sum}, not a distribution"
        )));
    }
    Ok(())
}

/// Summed multi-class cross-entropy: `-sum_i sum_j t_ij ln y_ij`.
pub fn multiclass_ce_loss(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    if probs.shape() != targets.shape() || probs.rank() != 2 {
        return Err(Error::invalid(format!(
            "probs {:?} and one-hot targets {:?} must be equal rank-2 shapes",
            probs.shape(),
            targets.shape()
        )));
    }
    let mut loss = 0.0;
    for i in 0..probs.outer_len() {
        let p = probs.outer(i);
        let t = targets.outer(i);
        validate_prob_row(p, i)?;
        let ones = t.iter().filter(|v| **v == 1.0).count();
        if ones != 1 || t.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::invalid(format!("target row {i} is not one-hot")));
        }
        for (pv, tv) in p.iter().zip(t) {
            if *tv == 1.0 {
                loss -= pv.clamp(LOG_CLAMP_EPSILON, 1.0).ln();
            }
        }
    }
    Ok(loss)
}

/// Mean two-term binary cross-entropy:
/// `-(1/B) sum_i [ t_i ln y_i + (1 - t_i) ln(1 - y_i) ]`.
pub fn binary_ce_loss(outputs: &Tensor, targets: &Tensor) -> Result<f64> {
    if outputs.shape() != targets.shape() {
        return Err(Error::invalid(format!(
            "outputs {:?} and targets {:?} differ",
            outputs.shape(),
            targets.shape()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::invalid("binary cross-entropy on empty batch"));
    }
    binary_ce_slice(outputs.data(), targets.data())
}

pub(crate) fn binary_ce_slice(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    let mut loss = 0.0;
    for (i, (y, t)) in outputs.iter().zip(targets).enumerate() {
        if *t != 0.0 && *t != 1.0 {
            return Err(Error::invalid(format!("target {i} is {t}, not binary")));
        }
        let y = y.clamp(LOG_CLAMP_EPSILON, 1.0 - LOG_CLAMP_EPSILON);
        loss -= t * y.ln() + (1.0 - t) * (1.0 - y).ln();
    }
    Ok(loss / outputs.len() as f64)
}
