use crate::error::{Error, Result};
use crate::tensor::Matrix;

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::LengthMismatch {
            expected: logits.rows(),
            actual: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.cols(),
        });
    }
    Ok(())
}

/// Softmax of one row after subtracting its maximum, and `log(sum(exp))`
/// relative to that maximum.
fn stable_softmax(row: &[f64], out: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    max + sum.ln()
}

/// `-log softmax(logits[r])[labels[r]]` for every row.
pub fn cross_entropy_per_row(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    let mut probs = vec![0.0; logits.cols()];
    Ok(labels
        .iter()
        .enumerate()
        .map(|(r, &label)| {
            let row = logits.row(r);
            stable_softmax(row, &mut probs) - row[label]
        })
        .collect())
}

/// Mean cross-entropy over the batch and its gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let rows = logits.rows();
    let mut grad = Matrix::zeros(rows, logits.cols());
    let mut total = 0.0;
    let inv = 1.0 / rows as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let g = grad.row_mut(r);
        let log_z = stable_softmax(row, g);
        total += log_z - row[label];
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((total * inv, grad))
}
