//! The encoder-decoder: token embedding, two encoder LSTM layers, a context
//! vector repeated as the decoder input at every output step, two decoder
//! LSTM layers, and a softmax projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::embedding::{check_tokens, scatter_add_rows};
use crate::layers::projection::softmax_nll_sum;
use crate::layers::{Embedding, Lstm, LstmTape, Projection, GATES};
use crate::rng::{SeededRng, Stream};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub input_length: usize,
    pub output_length: usize,
}

impl ModelConfig {
    pub const DEFAULT_EMBED_DIM: usize = 300;
    pub const DEFAULT_LENGTH: usize = 25;

    pub fn new(vocab_size: usize, hidden_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: Self::DEFAULT_EMBED_DIM,
            hidden_size,
            encoder_layers: 2,
            decoder_layers: 2,
            input_length: Self::DEFAULT_LENGTH,
            output_length: Self::DEFAULT_LENGTH,
        }
    }

    pub fn with_embed_dim(mut self, d: usize) -> Self {
        self.embed_dim = d;
        self
    }

    pub fn with_length(mut self, len: usize) -> Self {
        self.input_length = len;
        self.output_length = len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if self.hidden_size == 0 || self.embed_dim == 0 {
            return bad("hidden_size and embed_dim must be positive".into());
        }
        if self.encoder_layers != 2 || self.decoder_layers != 2 {
            return bad(format!(
                "encoder and decoder have exactly 2 layers each, got {} and {}",
                self.encoder_layers, self.decoder_layers
            ));
        }
        if self.input_length == 0 || self.input_length != self.output_length {
            return bad(format!(
                "input and output lengths must be equal and positive, got {} and {}",
                self.input_length, self.output_length
            ));
        }
        Ok(())
    }
}

/// Loss and accuracy counts for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    /// Sum over tokens of `−ln p(target)`.
    pub loss_sum: f64,
    pub tokens: usize,
    pub correct_tokens: usize,
    pub sequences: usize,
    pub correct_sequences: usize,
}

impl BatchStats {
    pub fn merge(&mut self, other: &BatchStats) {
        self.loss_sum += other.loss_sum;
        self.tokens += other.tokens;
        self.correct_tokens += other.correct_tokens;
        self.sequences += other.sequences;
        self.correct_sequences += other.correct_sequences;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.tokens.max(1) as f64
    }

    pub fn token_accuracy(&self) -> f64 {
        self.correct_tokens as f64 / self.tokens.max(1) as f64
    }

    pub fn sequence_accuracy(&self) -> f64 {
        self.correct_sequences as f64 / self.sequences.max(1) as f64
    }
}

/// A named view of one registered parameter tensor.
pub struct Param<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct ParamMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel<T> {
    config: ModelConfig,
    pub embedding: Embedding<T>,
    pub encoder: [Lstm<T>; 2],
    pub decoder: [Lstm<T>; 2],
    pub projection: Projection<T>,
}

/// How the first encoder layer's input projection was obtained.
enum EncoderInput<T> {
    /// `E · W_xᵀ` for every vocabulary row (`V × 4H`); cheaper when the batch
    /// holds more tokens than the vocabulary has entries.
    Table,
    /// Gathered embedding rows, `L·B × D`.
    Gathered(Vec<T>),
}

struct Tape<T> {
    batch: usize,
    /// time-major `L × B`
    tokens: Vec<usize>,
    input: EncoderInput<T>,
    encoder: [LstmTape<T>; 2],
    context: Vec<T>,
    decoder: [LstmTape<T>; 2],
    /// time-major `L′·B × V`
    probs: Vec<T>,
}

fn lstm_param_names(prefix: &str) -> impl Iterator<Item = String> + '_ {
    GATES
        .iter()
        .map(move |g| format!("{prefix}.w_{g}"))
        .chain(GATES.iter().map(move |g| format!("{prefix}.b_{g}")))
}

fn time_major<S: AsRef<[usize]>>(rows: &[S], len: usize) -> Vec<usize> {
    let b = rows.len();
    let mut out = vec![0; len * b];
    for (i, row) in rows.iter().enumerate() {
        for (t, &tok) in row.as_ref().iter().enumerate() {
            out[t * b + i] = tok;
        }
    }
    out
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Seq2SeqModel<T> {
    /// Fresh model with weights drawn from the `Init` substream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed, Stream::Init);
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_size);
        Ok(Self {
            embedding: Embedding::new(v, d, &mut rng)?,
            encoder: [Lstm::new(d, h, &mut rng)?, Lstm::new(h, h, &mut rng)?],
            decoder: [Lstm::new(h, h, &mut rng)?, Lstm::new(h, h, &mut rng)?],
            projection: Projection::new(h, v, &mut rng)?,
            config,
        })
    }

    /// Same architecture with every parameter zero; doubles as a gradient
    /// accumulator.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_size);
        Ok(Self {
            embedding: Embedding::zeros(v, d),
            encoder: [Lstm::zeros(d, h)?, Lstm::zeros(h, h)?],
            decoder: [Lstm::zeros(h, h)?, Lstm::zeros(h, h)?],
            projection: Projection::zeros(h, v),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config already validated")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_zero(&mut self) {
        for p in self.params_mut() {
            p.data.fill(T::zero());
        }
    }

    /// Every parameter tensor exactly once, in a stable order.
    pub fn params(&self) -> Vec<Param<'_, T>> {
        let mut out = vec![Param {
            name: "embedding.weight".into(),
            shape: self.embedding.weights.shape().to_vec(),
            data: self.embedding.weights.data(),
        }];
        let layers = [
            ("encoder.0", &self.encoder[0]),
            ("encoder.1", &self.encoder[1]),
            ("decoder.0", &self.decoder[0]),
            ("decoder.1", &self.decoder[1]),
        ];
        for (prefix, layer) in layers {
            let (h, w) = (layer.hidden(), layer.input_dim() + layer.hidden());
            let slices = layer
                .weights
                .data()
                .chunks_exact(h * w)
                .map(|s| (vec![h, w], s))
                .chain(layer.bias.data().chunks_exact(h).map(|s| (vec![h], s)));
            for (name, (shape, data)) in lstm_param_names(prefix).zip(slices) {
                out.push(Param { name, shape, data });
            }
        }
        out.push(Param {
            name: "projection.weight".into(),
            shape: self.projection.weights.shape().to_vec(),
            data: self.projection.weights.data(),
        });
        out.push(Param {
            name: "projection.bias".into(),
            shape: self.projection.bias.shape().to_vec(),
            data: self.projection.bias.data(),
        });
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let Self {
            embedding,
            encoder,
            decoder,
            projection,
            ..
        } = self;
        let mut out = vec![ParamMut {
            name: "embedding.weight".into(),
            shape: embedding.weights.shape().to_vec(),
            data: embedding.weights.data_mut(),
        }];
        let [e0, e1] = encoder;
        let [d0, d1] = decoder;
        for (prefix, layer) in [
            ("encoder.0", e0),
            ("encoder.1", e1),
            ("decoder.0", d0),
            ("decoder.1", d1),
        ] {
            let (h, w) = (layer.hidden(), layer.input_dim() + layer.hidden());
            let Lstm { weights, bias, .. } = layer;
            let slices = weights
                .data_mut()
                .chunks_exact_mut(h * w)
                .map(|s| (vec![h, w], s))
                .chain(bias.data_mut().chunks_exact_mut(h).map(|s| (vec![h], s)));
            for (name, (shape, data)) in lstm_param_names(prefix).zip(slices) {
                out.push(ParamMut { name, shape, data });
            }
        }
        let Projection { weights, bias } = projection;
        out.push(ParamMut {
            name: "projection.weight".into(),
            shape: weights.shape().to_vec(),
            data: weights.data_mut(),
        });
        out.push(ParamMut {
            name: "projection.bias".into(),
            shape: bias.shape().to_vec(),
            data: bias.data_mut(),
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn check_batch<S: AsRef<[usize]>>(&self, rows: &[S], what: &str, len: usize) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("empty {what} batch")));
        }
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != len {
                return Err(Error::shape(
                    "seq2seq",
                    format!("{what} sequence {i} has length {}, expected {len}", row.len()),
                ));
            }
            check_tokens(row, self.config.vocab_size)?;
        }
        Ok(())
    }

    fn run_forward<S: AsRef<[usize]>>(&self, xs: &[S]) -> Result<Tape<T>> {
        let len = self.config.input_length;
        let out_len = self.config.output_length;
        self.check_batch(xs, "input", len)?;
        let b = xs.len();
        let (v, d, h) = (self.config.vocab_size, self.config.embed_dim, self.config.hidden_size);
        let h4 = 4 * h;
        let stride = b * h4;
        let tokens = time_major(xs, len);

        let (input, proj) = if v <= len * b {
            let table = self.encoder[0].project_inputs(self.embedding.weights.data(), v);
            let mut proj = Vec::with_capacity(len * b * h4);
            for &tok in &tokens {
                proj.extend_from_slice(&table[tok * h4..(tok + 1) * h4]);
            }
            (EncoderInput::Table, proj)
        } else {
            let mut x = Vec::with_capacity(len * b * d);
            for &tok in &tokens {
                x.extend_from_slice(self.embedding.row(tok));
            }
            let proj = self.encoder[0].project_inputs(&x, len * b);
            (EncoderInput::Gathered(x), proj)
        };
        let enc0 = self.encoder[0].run(len, b, |t| &proj[t * stride..(t + 1) * stride], None, None);
        let proj = self.encoder[1].project_inputs(enc0.outputs(), len * b);
        let enc1 = self.encoder[1].run(len, b, |t| &proj[t * stride..(t + 1) * stride], None, None);

        let context = enc1.final_hidden().to_vec();
        let cproj = self.decoder[0].project_inputs(&context, b);
        let dec0 = self.decoder[0].run(out_len, b, |_| &cproj, None, None);
        let proj = self.decoder[1].project_inputs(dec0.outputs(), out_len * b);
        let dec1 = self.decoder[1].run(out_len, b, |t| &proj[t * stride..(t + 1) * stride], None, None);

        let probs = self.projection.logits(dec1.outputs(), out_len * b);
        Ok(Tape {
            batch: b,
            tokens,
            input,
            encoder: [enc0, enc1],
            context,
            decoder: [dec0, dec1],
            probs,
        })
    }

    /// Per-position output distributions, `B × L′ × V`.
    pub fn forward<S: AsRef<[usize]>>(&self, xs: &[S]) -> Result<Tensor<T>> {
        let mut tape = self.run_forward(xs)?;
        let v = self.config.vocab_size;
        crate::tensor::softmax_rows_in_place(&mut tape.probs, v);
        let (b, out_len) = (tape.batch, self.config.output_length);
        let mut out = vec![T::zero(); b * out_len * v];
        for t in 0..out_len {
            for i in 0..b {
                let src = &tape.probs[(t * b + i) * v..(t * b + i + 1) * v];
                out[(i * out_len + t) * v..(i * out_len + t + 1) * v].copy_from_slice(src);
            }
        }
        Tensor::new(vec![b, out_len, v], out)
    }

    /// Argmax decoding of [`Seq2SeqModel::forward`].
    pub fn predict<S: AsRef<[usize]>>(&self, xs: &[S]) -> Result<Vec<Vec<usize>>> {
        let tape = self.run_forward(xs)?;
        Ok(self.decode(&tape))
    }

    fn decode(&self, tape: &Tape<T>) -> Vec<Vec<usize>> {
        // argmax of logits equals argmax of their softmax
        let (b, v) = (tape.batch, self.config.vocab_size);
        let mut out = vec![Vec::with_capacity(self.config.output_length); b];
        for (r, row) in tape.probs.chunks_exact(v).enumerate() {
            out[r % b].push(argmax(row));
        }
        out
    }

    fn score(&self, tape: &mut Tape<T>, targets: &[usize], predictions: &[Vec<usize>]) -> BatchStats {
        let v = self.config.vocab_size;
        let b = tape.batch;
        let loss_sum = softmax_nll_sum(&mut tape.probs, v, targets);
        let mut stats = BatchStats {
            loss_sum,
            tokens: targets.len(),
            sequences: b,
            ..BatchStats::default()
        };
        for (i, pred) in predictions.iter().enumerate() {
            let correct = pred
                .iter()
                .enumerate()
                .filter(|&(t, &p)| p == targets[t * b + i])
                .count();
            stats.correct_tokens += correct;
            if correct == pred.len() {
                stats.correct_sequences += 1;
            }
        }
        stats
    }

    /// Forward-only loss and accuracy counts.
    pub fn evaluate_batch<S: AsRef<[usize]>, R: AsRef<[usize]>>(&self, xs: &[S], ys: &[R]) -> Result<BatchStats> {
        let mut tape = self.run_forward(xs)?;
        self.check_targets(xs.len(), ys)?;
        let targets = time_major(ys, self.config.output_length);
        let pred = self.decode(&tape);
        Ok(self.score(&mut tape, &targets, &pred))
    }

    fn check_targets<R: AsRef<[usize]>>(&self, batch: usize, ys: &[R]) -> Result<()> {
        if ys.len() != batch {
            return Err(Error::shape(
                "seq2seq",
                format!("{} target sequences for {batch} inputs", ys.len()),
            ));
        }
        self.check_batch(ys, "target", self.config.output_length)
    }

    /// Adds the gradients of the batch-mean token cross-entropy to `grads`
    /// and returns the batch statistics (measured before any update).
    pub fn accumulate_gradients<S: AsRef<[usize]>, R: AsRef<[usize]>>(
        &self,
        xs: &[S],
        ys: &[R],
        grads: &mut Seq2SeqModel<T>,
    ) -> Result<BatchStats> {
        if grads.config != self.config {
            return Err(Error::Config("gradient buffer built for a different model".into()));
        }
        let mut tape = self.run_forward(xs)?;
        self.check_targets(xs.len(), ys)?;
        let targets = time_major(ys, self.config.output_length);
        let pred = self.decode(&tape);
        let stats = self.score(&mut tape, &targets, &pred);
        self.backward(&tape, &targets, grads);
        Ok(stats)
    }

    /// Mean token cross-entropy over the batch and its full gradient.
    pub fn loss_and_gradients<S: AsRef<[usize]>, R: AsRef<[usize]>>(
        &self,
        xs: &[S],
        ys: &[R],
    ) -> Result<(f64, Seq2SeqModel<T>)> {
        let mut grads = self.zeros_like();
        let stats = self.accumulate_gradients(xs, ys, &mut grads)?;
        Ok((stats.mean_loss(), grads))
    }

    fn backward(&self, tape: &Tape<T>, targets: &[usize], grads: &mut Seq2SeqModel<T>) {
        let (len, out_len) = (self.config.input_length, self.config.output_length);
        let (v, h) = (self.config.vocab_size, self.config.hidden_size);
        let b = tape.batch;
        let n = b * h;
        let h4 = 4 * h;

        let scale = T::one() / T::from_f64((b * out_len) as f64);
        let mut dlogits = tape.probs.clone();
        for (row, &t) in dlogits.chunks_exact_mut(v).zip(targets) {
            row[t] -= T::one();
            for g in row.iter_mut() {
                *g *= scale;
            }
        }

        let [dec0, dec1] = &tape.decoder;
        let dh = self
            .projection
            .backward(dec1.outputs(), &dlogits, out_len * b, &mut grads.projection);
        let (dz, _, _) = self.decoder[1].run_backward(
            dec1,
            |t| Some(&dh[t * n..(t + 1) * n]),
            None,
            None,
            &mut grads.decoder[1],
        );
        let dh = self.decoder[1].input_backward(&dz, dec0.outputs(), out_len * b, &mut grads.decoder[1]);
        let (dz, _, _) = self.decoder[0].run_backward(
            dec0,
            |t| Some(&dh[t * n..(t + 1) * n]),
            None,
            None,
            &mut grads.decoder[0],
        );
        // the context fed every decoder step, so its projection gradient is the sum over steps
        let mut dz_sum = vec![T::zero(); b * h4];
        for step in dz.chunks_exact(b * h4) {
            for (s, &g) in dz_sum.iter_mut().zip(step) {
                *s += g;
            }
        }
        let dcontext = self.decoder[0].input_backward(&dz_sum, &tape.context, b, &mut grads.decoder[0]);

        let [enc0, enc1] = &tape.encoder;
        let (dz, _, _) = self.encoder[1].run_backward(enc1, |_| None, Some(&dcontext), None, &mut grads.encoder[1]);
        let dh = self.encoder[1].input_backward(&dz, enc0.outputs(), len * b, &mut grads.encoder[1]);
        let (dz, _, _) = self.encoder[0].run_backward(
            enc0,
            |t| Some(&dh[t * n..(t + 1) * n]),
            None,
            None,
            &mut grads.encoder[0],
        );

        let d = self.config.embed_dim;
        match &tape.input {
            EncoderInput::Table => {
                let mut per_token = vec![T::zero(); v * h4];
                scatter_add_rows(&mut per_token, h4, &tape.tokens, &dz);
                let de =
                    self.encoder[0].input_backward(&per_token, self.embedding.weights.data(), v, &mut grads.encoder[0]);
                for (g, &x) in grads.embedding.weights.data_mut().iter_mut().zip(&de) {
                    *g += x;
                }
            }
            EncoderInput::Gathered(x) => {
                let dx = self.encoder[0].input_backward(&dz, x, len * b, &mut grads.encoder[0]);
                scatter_add_rows(grads.embedding.weights.data_mut(), d, &tape.tokens, &dx);
            }
        }
    }

    /// Copies every parameter from `other`, which must share this config.
    pub fn copy_from(&mut self, other: &Self) {
        assert_eq!(self.config, other.config);
        self.clone_from(other);
    }
}
