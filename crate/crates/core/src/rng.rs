use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Named substreams carved out of one experiment seed. Drawing from one never
/// perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    DataTrain,
    DataVal,
    DataTest,
    Init,
    Shuffle,
    /// Free-form substream for tests and tools.
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::DataTrain => 1,
            Stream::DataVal => 2,
            Stream::DataTest => 3,
            Stream::Init => 16,
            Stream::Shuffle => 17,
            Stream::Custom(n) => 1 << 32 | n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: Stream,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    /// Uniform integer in the closed range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty integer range [{lo}, {hi}]")));
        }
        Ok(self.inner.gen_range(lo..=hi))
    }

    /// Uniform index in `[0, n)`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Glorot-uniform tensor with bound `sqrt(6 / (fan_in + fan_out))`.
    ///
    /// Samples are drawn in double precision and rounded, so single and double
    /// models built from the same seed agree up to rounding.
    pub fn glorot<T: Scalar>(&mut self, fan_in: usize, fan_out: usize, shape: &[usize]) -> Result<Tensor<T>> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "glorot fans must be positive, got ({fan_in}, {fan_out})"
            )));
        }
        let bound = glorot_bound(fan_in, fan_out);
        let dist = Uniform::new_inclusive(-bound, bound);
        Ok(Tensor::from_fn(shape, |_| T::from_f64(dist.sample(&mut self.inner))))
    }

    /// Fills `out` with Glorot-uniform values.
    pub fn fill_glorot<T: Scalar>(&mut self, fan_in: usize, fan_out: usize, out: &mut [T]) {
        let bound = glorot_bound(fan_in, fan_out);
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in out {
            *v = T::from_f64(dist.sample(&mut self.inner));
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
