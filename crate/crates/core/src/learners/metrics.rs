use crate::error::{Error, Result};

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r2_score(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets, {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty("r2 of no observations".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 of a constant target".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// F1 score of the positive class; 0 when precision + recall is 0.
pub fn f1_score(truth: &[u8], pred: &[u8]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels, {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.iter().chain(pred).any(|&v| v > 1) {
        return Err(Error::invalid("f1 requires 0/1 labels"));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}
