use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{gemm_into, softmax_rows_in_place, MatMut, MatRef, Scalar, Tensor};

use super::embedding::check_tokens;

/// Output layer mapping hidden states to vocabulary logits: `h · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    /// `H × V`
    pub weights: Tensor<T>,
    /// `V`
    pub bias: Tensor<T>,
}

impl<T: Scalar> Projection<T> {
    pub fn new(hidden: usize, vocab: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            weights: rng.glorot(hidden, vocab, &[hidden, vocab])?,
            bias: Tensor::zeros(&[vocab]),
        })
    }

    pub fn zeros(hidden: usize, vocab: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[hidden, vocab]),
            bias: Tensor::zeros(&[vocab]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn vocab(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Logits for `n` stacked hidden rows (`n × H` → `n × V`).
    pub fn logits(&self, h: &[T], n: usize) -> Vec<T> {
        let v = self.vocab();
        let mut out = Vec::with_capacity(n * v);
        for _ in 0..n {
            out.extend_from_slice(self.bias.data());
        }
        gemm_into(
            T::one(),
            MatRef::new(h, n, self.hidden()),
            MatRef::new(self.weights.data(), self.hidden(), v),
            T::one(),
            MatMut::new(&mut out, n, v),
        );
        out
    }

    pub fn forward(&self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let m = h.as_matrix()?;
        if m.cols() != self.hidden() {
            return Err(Error::shape(
                "projection",
                format!("input width {} does not match hidden size {}", m.cols(), self.hidden()),
            ));
        }
        Tensor::new(vec![m.rows(), self.vocab()], self.logits(h.data(), m.rows()))
    }

    /// Accumulates `dW += hᵀ·dlogits`, `db += Σ rows` and returns `dlogits · Wᵀ`.
    pub fn backward(&self, h: &[T], dlogits: &[T], n: usize, grads: &mut Projection<T>) -> Vec<T> {
        let (hid, v) = (self.hidden(), self.vocab());
        gemm_into(
            T::one(),
            MatRef::new(h, n, hid).t(),
            MatRef::new(dlogits, n, v),
            T::one(),
            MatMut::new(grads.weights.data_mut(), hid, v),
        );
        let db = grads.bias.data_mut();
        for row in dlogits.chunks_exact(v) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let mut dh = vec![T::zero(); n * hid];
        gemm_into(
            T::one(),
            MatRef::new(dlogits, n, v),
            MatRef::new(self.weights.data(), hid, v).t(),
            T::zero(),
            MatMut::new(&mut dh, n, hid),
        );
        dh
    }
}

/// Replaces each row of logits by its softmax and returns
/// `−Σ_rows ln p[target]` (unnormalized). Rows whose target probability
/// underflows contribute `−ln(min positive)` instead of infinity.
pub(crate) fn softmax_nll_sum<T: Scalar>(logits: &mut [T], width: usize, targets: &[usize]) -> f64 {
    softmax_rows_in_place(logits, width);
    let mut loss = 0.0;
    for (row, &t) in logits.chunks_exact(width).zip(targets) {
        loss -= row[t].to_f64().max(f64::from(f32::MIN_POSITIVE)).ln();
    }
    loss
}

/// Mean per-row cross-entropy of `probs` (`L × V`) against `targets`, and the
/// gradient with respect to the pre-softmax logits, `(probs − onehot) / L`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, targets: &[usize]) -> Result<(f64, Tensor<T>)> {
    let m = probs.as_matrix()?;
    let (rows, v) = (m.rows(), m.cols());
    if targets.len() != rows {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} targets for {rows} rows", targets.len()),
        ));
    }
    check_tokens(targets, v)?;
    let scale = T::one() / T::from_f64(rows as f64);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (row, &t) in grad.data_mut().chunks_exact_mut(v).zip(targets) {
        loss -= row[t].to_f64().ln();
        row[t] -= T::one();
        for g in row.iter_mut() {
            *g *= scale;
        }
    }
    Ok((loss / rows as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::tensor::softmax;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let probs = Tensor::<f64>::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&probs, &[1, 0]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln_v() {
        let v = 7;
        let probs = Tensor::<f64>::from_fn(&[3, v], |_| 1.0 / v as f64);
        let (loss, grad) = cross_entropy(&probs, &[0, 6, 3]).unwrap();
        assert_abs_diff_eq!(loss, (v as f64).ln(), epsilon = 1e-12);
        for row in grad.data().chunks(v) {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_out_of_range_target() {
        let probs = Tensor::<f32>::from_fn(&[2, 3], |_| 1.0 / 3.0);
        assert!(cross_entropy(&probs, &[0, 3]).is_err());
        assert!(cross_entropy(&probs, &[0]).is_err());
    }

    #[test]
    fn logits_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(1, Stream::Custom(3));
        let layer = Projection::<f64>::new(4, 5, &mut rng).unwrap();
        let h = Tensor::from_fn(&[3, 4], |i| ((i * 7) as f64).sin());
        let targets = [4, 0, 2];
        let loss_of = |logits: &Tensor<f64>| cross_entropy(&softmax(logits), &targets).unwrap().0;
        let logits = layer.forward(&h).unwrap();
        let (_, grad) = cross_entropy(&softmax(&logits), &targets).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits.clone();
            up.data_mut()[i] += eps;
            let mut down = logits.clone();
            down.data_mut()[i] -= eps;
            let num = (loss_of(&up) - loss_of(&down)) / (2.0 * eps);
            assert_abs_diff_eq!(num, grad.data()[i], epsilon = 1e-8);
        }
    }
}
