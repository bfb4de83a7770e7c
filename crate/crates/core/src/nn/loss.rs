use ndarray::{Array1, Array2, ArrayView1};

use crate::data::EmotionClass;
use crate::error::{Error, Result};

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    exps / sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub grad_logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Loss `-log p[label]`, gradient `p - onehot(label)`.
pub fn softmax_cross_entropy(logits: ArrayView1<f64>, label: EmotionClass) -> Result<CrossEntropy> {
    let c = logits.len();
    if label.index() >= c {
        return Err(Error::contract(format!(
            "label {} out of range for {c} classes",
            label.index()
        )));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::contract("logits must be finite"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted = logits.mapv(|v| v - max);
    let log_sum = shifted.mapv(f64::exp).sum().ln();
    let probs = shifted.mapv(|v| (v - log_sum).exp());
    let loss = log_sum - shifted[label.index()];
    let mut grad_logits = probs.clone();
    grad_logits[label.index()] -= 1.0;
    Ok(CrossEntropy {
        loss,
        grad_logits,
        probs,
    })
}

/// Mean cross-entropy over a batch of logit rows; the returned gradient is
/// already divided by the batch size.
pub fn batch_cross_entropy(logits: &Array2<f64>, labels: &[EmotionClass]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::contract("batch cross-entropy needs one label per logit row"));
    }
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let ce = softmax_cross_entropy(row, label)?;
        total += ce.loss;
        grad.row_mut(i).assign(&(ce.grad_logits / n));
    }
    Ok((total / n, grad))
}
