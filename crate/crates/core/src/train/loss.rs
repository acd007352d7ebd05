use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `−log softmax(logits)[label]`, evaluated as
/// `(max − x_label) + ln(1 + Σ_{i ≠ argmax} exp(x_i − max))`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Usage(format!("cross entropy needs at least 2 classes, got {}", logits.len())));
    }
    if label >= logits.len() {
        return Err(Error::Usage(format!("label {label} out of range for {} classes", logits.len())));
    }
    let mut top = 0;
    for (i, &x) in logits.iter().enumerate() {
        if x > logits[top] {
            top = i;
        }
    }
    let m = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &x)| (x - m).exp())
        .sum();
    Ok(((m - logits[label]) + rest.ln_1p()).max(0.0))
}

/// Mean loss over a batch and its gradient with respect to the logits,
/// `(softmax − onehot) / n`.
pub fn cross_entropy_batch(logits: &[f64], labels: &[usize], classes: usize) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if n == 0 || logits.len() != n * classes {
        return Err(Error::dim(format!("{} logits for {n} labels of {classes} classes", logits.len())));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks(classes).zip(labels) {
        loss += cross_entropy(row, label)?;
        let p = softmax(row);
        grad.extend(p.iter().enumerate().map(|(i, &pi)| (pi - if i == label { 1.0 } else { 0.0 }) / n as f64));
    }
    Ok((loss / n as f64, grad))
}
