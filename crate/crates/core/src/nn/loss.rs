use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax of a B×C matrix with max subtraction.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    logits.expect_rank(2, "softmax")?;
    let c = logits.dim(1);
    let mut out = logits.clone();
    if c == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(row[0], F::max);
        let mut sum = F::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Mean categorical cross entropy over the batch and its gradient
/// `(softmax − onehot) / B` with respect to the logits.
pub fn softmax_crossentropy<F: Scalar>(logits: &Tensor<F>, labels: &[usize]) -> Result<(F, Tensor<F>)> {
    logits.expect_rank(2, "softmax_crossentropy")?;
    let (b, c) = (logits.dim(0), logits.dim(1));
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidLabel { label, classes: c });
    }
    let mut grad = softmax(logits)?;
    let inv_b = F::from_f64(1.0 / b.max(1) as f64);
    let mut loss = 0.0f64;
    for ((row, logit_row), &label) in grad.data_mut().chunks_mut(c).zip(logits.data().chunks(c)).zip(labels) {
        let max = logit_row.iter().copied().fold(logit_row[0], F::max).to_f64();
        let lse = max
            + logit_row
                .iter()
                .map(|v| (v.to_f64() - max).exp())
                .sum::<f64>()
                .ln();
        loss += lse - logit_row[label].to_f64();
        row[label] -= F::ONE;
        row.iter_mut().for_each(|v| *v = *v * inv_b);
    }
    Ok((F::from_f64(loss / b.max(1) as f64), grad))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
