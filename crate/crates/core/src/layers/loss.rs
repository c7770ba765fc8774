use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CceOutput<T> {
    /// Batch mean of `−ln p[true]`.
    pub loss: T,
    /// `(probs − one_hot) / batch`
    pub grad_logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Row-wise softmax over the flattened items of `logits`, computed with
/// max-subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = logits.shape().item_len();
    let mut out = Vec::with_capacity(logits.shape().len());
    for row in logits.data().chunks_exact(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(logits.shape(), out).expect("softmax keeps shape")
}

/// Softmax cross-entropy against class indices.
pub fn softmax_cce<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<CceOutput<T>> {
    let n = logits.shape().n;
    let k = logits.shape().item_len();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "softmax_cce",
            axis: "n",
            left: n,
            right: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let probs = softmax(logits);
    let batch = T::of(n as f64);
    let mut loss = T::zero();
    let mut grad = probs.data().to_vec();
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits.data()[b * k..(b + 1) * k];
        // log-sum-exp form keeps the loss finite when p[true] underflows
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[label];
        grad[b * k + label] -= T::one();
    }
    grad.iter_mut().for_each(|g| *g /= batch);
    Ok(CceOutput {
        loss: loss / batch,
        grad_logits: Tensor::from_vec(logits.shape(), grad)?,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::filled(Shape::new(3, 1, 1, 4), 0.3);
        let out = softmax_cce(&logits, &[0, 1, 3]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn dominant_true_logit_drives_loss_to_zero() {
        let logits = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1e4, 0.0]).unwrap();
        let out = softmax_cce(&logits, &[1]).unwrap();
        assert!(out.loss.abs() < 1e-12);
        let wrong = softmax_cce(&logits, &[0]).unwrap();
        assert!(wrong.loss.is_finite() && wrong.loss > 9e3);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let logits = Tensor::<f32>::from_fn(Shape::new(5, 1, 1, 44), |n, _, _, c| {
            ((n * 13 + c * 7) % 19) as f32 - 9.0
        });
        let out = softmax_cce(&logits, &[0, 5, 43, 2, 17]).unwrap();
        for row in out.probs.data().chunks_exact(44) {
            let s: f64 = row.iter().map(|&p| p as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_range_label() {
        let logits = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 4));
        assert!(matches!(
            softmax_cce(&logits, &[4]),
            Err(Error::LabelOutOfRange { label: 4, classes: 4 })
        ));
    }
}
