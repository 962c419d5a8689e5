use super::Tensor;
use crate::error::{Error, Result};

/// Softmax cross-entropy averaged over the batch. Returns the loss and its
/// gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = logits.rows();
    if labels.len() != n {
        return Err(Error::Input(format!("{} labels for a batch of {n}", labels.len())));
    }
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for ((row, g), &y) in logits.data().chunks(k).zip(grad.data_mut().chunks_mut(k)).zip(labels) {
        if y >= k {
            return Err(Error::Input(format!("label {y} out of range for {k} classes")));
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += m + z.ln() - row[y];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - m).exp() / z / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("cross-entropy is {loss}")));
    }
    Ok((loss, grad))
}

/// Per-class sigmoid cross-entropy in logit space, summed over classes and
/// averaged over the batch.
pub fn binary_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    super::same_shape("binary cross-entropy", logits, targets)?;
    if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::Input("multi-label targets must be 0 or 1".into()));
    }
    let (n, _) = logits.rows();
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets.data()) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let p = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
        *g = (p - y) / n as f64;
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("binary cross-entropy is {loss}")));
    }
    Ok((loss, grad))
}
