use ndarray::ArrayView2;

use super::Real;
use crate::error::{Error, Result};

/// Lower bound applied to the true-class probability before the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mean cross-entropy and accuracy of sample-major probabilities.
/// Ties in the argmax go to the lowest class index.
pub fn loss_and_accuracy<F: Real>(probs: ArrayView2<'_, F>, labels: &[usize]) -> Result<(f64, f64)> {
    if probs.nrows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} probability rows for {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Domain("loss of an empty batch".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &label) in probs.rows().into_iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::Consistency(format!("label {label} ≥ {} classes", row.len())));
        }
        loss -= row[label].as_f64().max(LOG_CLAMP).ln();
        let mut best = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
