use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

/// Token lookup table, `V × D`. Row `i` is the vector for token `i`; a lookup
/// is the one-hot product without materializing the one-hot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub weights: Tensor<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(vocab: usize, dim: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            weights: rng.glorot(vocab, dim, &[vocab, dim])?,
        })
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[vocab, dim]),
        }
    }

    pub fn from_weights(weights: Tensor<T>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::shape(
                "embedding",
                format!("weights must be V×D, got {:?}", weights.shape()),
            ));
        }
        Ok(Self { weights })
    }

    pub fn vocab(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn row(&self, token: usize) -> &[T] {
        let d = self.dim();
        &self.weights.data()[token * d..(token + 1) * d]
    }

    /// Looks up `tokens`, returning an `L × D` matrix.
    pub fn forward(&self, tokens: &[usize]) -> Result<Tensor<T>> {
        check_tokens(tokens, self.vocab())?;
        let d = self.dim();
        let mut out = Vec::with_capacity(tokens.len() * d);
        for &t in tokens {
            out.extend_from_slice(self.row(t));
        }
        Tensor::new(vec![tokens.len(), d], out)
    }

    /// Scatter-adds the rows of `grad_out` (`L × D`) into `grads` at the
    /// looked-up rows.
    pub fn backward(&self, tokens: &[usize], grad_out: &[T], grads: &mut Embedding<T>) -> Result<()> {
        check_tokens(tokens, self.vocab())?;
        let d = self.dim();
        if grad_out.len() != tokens.len() * d {
            return Err(Error::shape(
                "embedding backward",
                format!("gradient has {} values, expected {}", grad_out.len(), tokens.len() * d),
            ));
        }
        scatter_add_rows(grads.weights.data_mut(), d, tokens, grad_out);
        Ok(())
    }
}

pub fn check_tokens(tokens: &[usize], vocab: usize) -> Result<()> {
    match tokens.iter().position(|&t| t >= vocab) {
        Some(position) => Err(Error::TokenOutOfRange {
            position,
            token: tokens[position],
            vocab,
        }),
        None => Ok(()),
    }
}

/// `table[idx[r]] += rows[r]` for every row `r`, in row order.
pub(crate) fn scatter_add_rows<T: Scalar>(table: &mut [T], width: usize, idx: &[usize], rows: &[T]) {
    for (&i, src) in idx.iter().zip(rows.chunks_exact(width)) {
        for (dst, &g) in table[i * width..(i + 1) * width].iter_mut().zip(src) {
            *dst += g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn repeated_lookup_gives_identical_rows() {
        let mut rng = SeededRng::new(0, Stream::Init);
        let e = Embedding::<f32>::new(5, 3, &mut rng).unwrap();
        let out = e.forward(&[0, 0]).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        assert_eq!(&out.data()[..3], &out.data()[3..]);
    }

    #[test]
    fn identity_table_gives_one_hot() {
        let e = Embedding::from_weights(Tensor::<f64>::identity(4)).unwrap();
        let out = e.forward(&[2]).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn out_of_range_token_reports_position() {
        let e = Embedding::<f64>::zeros(4, 2);
        match e.forward(&[1, 3, 4]) {
            Err(Error::TokenOutOfRange { position, token, vocab }) => {
                assert_eq!((position, token, vocab), (2, 4, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backward_of_sum_matches_finite_differences() {
        let mut rng = SeededRng::new(5, Stream::Init);
        let mut e = Embedding::<f64>::new(3, 2, &mut rng).unwrap();
        let tokens = [2, 0, 2];
        let mut grads = Embedding::zeros(3, 2);
        e.backward(&tokens, &[1.0; 6], &mut grads).unwrap();
        assert_eq!(grads.weights.data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);

        let eps = 1e-6;
        for i in 0..6 {
            let orig = e.weights.data()[i];
            e.weights.data_mut()[i] = orig + eps;
            let up: f64 = e.forward(&tokens).unwrap().data().iter().sum();
            e.weights.data_mut()[i] = orig - eps;
            let down: f64 = e.forward(&tokens).unwrap().data().iter().sum();
            e.weights.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            assert!((numeric - grads.weights.data()[i]).abs() < 1e-8);
        }
    }
}
