//! Finite-difference gradient checks for every layer and the assembled model
//! at tiny sizes, in double precision.

use serde::Serialize;

use crate::error::Result;
use crate::layers::gradcheck::{grad_check, Differentiable, GradCheckReport};
use crate::layers::{cross_entropy, Embedding, Lstm, Projection, GATES};
use crate::model::{ModelConfig, Seq2SeqModel};
use crate::rng::{SeededRng, Stream};
use crate::tensor::{softmax, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Step for the assembled model. Many of its gradient entries are around
/// 1e-9..1e-8, where small steps leave central differences dominated by
/// round-off and large ones by truncation; 3e-4 balances the two.
pub const MODEL_EPSILON: f64 = 3e-4;
/// Largest relative error a passing check may report.
pub const TOLERANCE: f64 = 1e-4;

fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_f64(-1.0, 1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embedding lookup under a random linear read-out.
pub struct EmbeddingProbe {
    pub layer: Embedding<f64>,
    pub tokens: Vec<usize>,
    pub readout: Vec<f64>,
}

impl Differentiable for EmbeddingProbe {
    fn param_names(&self) -> Vec<String> {
        vec!["embedding.weight".into()]
    }
    fn param_mut(&mut self, _: usize) -> &mut [f64] {
        self.layer.weights.data_mut()
    }
    fn loss(&mut self) -> f64 {
        dot(self.layer.forward(&self.tokens).unwrap().data(), &self.readout)
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let mut g = Embedding::zeros(self.layer.vocab(), self.layer.dim());
        self.layer.backward(&self.tokens, &self.readout, &mut g).unwrap();
        vec![g.weights.into_data()]
    }
}

/// LSTM sequence with loss `Σ_t readout_t · h_t`.
pub struct LstmProbe {
    pub layer: Lstm<f64>,
    pub inputs: Vec<f64>,
    pub steps: usize,
    pub batch: usize,
    pub readout: Vec<f64>,
}

impl Differentiable for LstmProbe {
    fn param_names(&self) -> Vec<String> {
        GATES
            .iter()
            .map(|g| format!("w_{g}"))
            .chain(GATES.iter().map(|g| format!("b_{g}")))
            .collect()
    }
    fn param_mut(&mut self, index: usize) -> &mut [f64] {
        let h = self.layer.hidden();
        let block = h * (h + self.layer.input_dim());
        if index < 4 {
            &mut self.layer.weights.data_mut()[index * block..(index + 1) * block]
        } else {
            &mut self.layer.bias.data_mut()[(index - 4) * h..(index - 3) * h]
        }
    }
    fn loss(&mut self) -> f64 {
        let tape = self
            .layer
            .sequence_forward(&self.inputs, self.steps, self.batch)
            .unwrap();
        dot(tape.outputs(), &self.readout)
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let tape = self
            .layer
            .sequence_forward(&self.inputs, self.steps, self.batch)
            .unwrap();
        let mut g = Lstm::zeros(self.layer.input_dim(), self.layer.hidden()).unwrap();
        self.layer
            .sequence_backward(&tape, &self.inputs, &self.readout, &mut g)
            .unwrap();
        let h = self.layer.hidden();
        let block = h * (h + self.layer.input_dim());
        g.weights
            .data()
            .chunks_exact(block)
            .chain(g.bias.data().chunks_exact(h))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Projection + softmax + cross-entropy.
pub struct ProjectionProbe {
    pub layer: Projection<f64>,
    pub hidden: Tensor<f64>,
    pub targets: Vec<usize>,
}

impl Differentiable for ProjectionProbe {
    fn param_names(&self) -> Vec<String> {
        vec!["projection.weight".into(), "projection.bias".into()]
    }
    fn param_mut(&mut self, index: usize) -> &mut [f64] {
        if index == 0 {
            self.layer.weights.data_mut()
        } else {
            self.layer.bias.data_mut()
        }
    }
    fn loss(&mut self) -> f64 {
        let logits = self.layer.forward(&self.hidden).unwrap();
        cross_entropy(&softmax(&logits), &self.targets).unwrap().0
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let logits = self.layer.forward(&self.hidden).unwrap();
        let (_, dlogits) = cross_entropy(&softmax(&logits), &self.targets).unwrap();
        let mut g = Projection::zeros(self.layer.hidden(), self.layer.vocab());
        let n = self.targets.len();
        self.layer.backward(self.hidden.data(), dlogits.data(), n, &mut g);
        vec![g.weights.into_data(), g.bias.into_data()]
    }
}

/// The whole encoder-decoder on a fixed batch.
pub struct ModelProbe {
    pub model: Seq2SeqModel<f64>,
    pub xs: Vec<Vec<usize>>,
    pub ys: Vec<Vec<usize>>,
}

impl Differentiable for ModelProbe {
    fn param_names(&self) -> Vec<String> {
        self.model.params().into_iter().map(|p| p.name).collect()
    }
    fn param_mut(&mut self, index: usize) -> &mut [f64] {
        self.model.params_mut().swap_remove(index).data
    }
    fn loss(&mut self) -> f64 {
        self.model.evaluate_batch(&self.xs, &self.ys).unwrap().mean_loss()
    }
    fn gradients(&mut self) -> Vec<Vec<f64>> {
        let (_, g) = self.model.loss_and_gradients(&self.xs, &self.ys).unwrap();
        g.params().into_iter().map(|p| p.data.to_vec()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedReport {
    pub target: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: GradCheckReport,
}

impl NamedReport {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE
    }
}

/// Size of the tiny configuration used by the checks.
#[derive(Debug, Clone, Copy)]
pub struct TinySizes {
    pub vocab: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub length: usize,
}

impl Default for TinySizes {
    fn default() -> Self {
        Self {
            vocab: 7,
            embed_dim: 6,
            hidden: 5,
            length: 4,
        }
    }
}

fn tokens(rng: &mut SeededRng, n: usize, vocab: usize) -> Vec<usize> {
    (0..n).map(|_| rng.index(vocab)).collect()
}

/// Embedding, each of the four LSTM layer shapes, projection, and the full
/// model, all seeded from `seed`. The full model is checked with a batch of
/// one (gathered-embedding path) and a batch of two (embedding-table path).
pub fn layer_and_model_checks(seed: u64, sizes: TinySizes) -> Result<Vec<NamedReport>> {
    checks_with_epsilon(seed, sizes, DEFAULT_EPSILON, MODEL_EPSILON)
}

pub fn checks_with_epsilon(seed: u64, sizes: TinySizes, eps: f64, model_eps: f64) -> Result<Vec<NamedReport>> {
    let TinySizes {
        vocab: v,
        embed_dim: d,
        hidden: h,
        length: l,
    } = sizes;
    let mut rng = SeededRng::new(seed, Stream::Custom(0x6772_6164));
    let mut out = Vec::new();
    let mut push = |target: &str, report: GradCheckReport| {
        out.push(NamedReport {
            target: target.to_string(),
            seed,
            report,
        })
    };

    let mut probe = EmbeddingProbe {
        layer: Embedding::new(v, d, &mut rng)?,
        tokens: tokens(&mut rng, l, v),
        readout: random_vec(&mut rng, l * d),
    };
    push("embedding", grad_check(&mut probe, eps));

    for (name, input) in [("encoder.0", d), ("encoder.1", h), ("decoder.0", h), ("decoder.1", h)] {
        let batch = 2;
        let mut layer = Lstm::new(input, h, &mut rng)?;
        for b in layer.bias.data_mut() {
            *b += rng.uniform_f64(-0.5, 0.5);
        }
        let mut probe = LstmProbe {
            layer,
            inputs: random_vec(&mut rng, l * batch * input),
            steps: l,
            batch,
            readout: random_vec(&mut rng, l * batch * h),
        };
        push(name, grad_check(&mut probe, eps));
    }

    let mut probe = ProjectionProbe {
        layer: Projection::new(h, v, &mut rng)?,
        hidden: Tensor::new(vec![l, h], random_vec(&mut rng, l * h))?,
        targets: tokens(&mut rng, l, v),
    };
    push("projection", grad_check(&mut probe, eps));

    let config = ModelConfig::new(v, h).with_embed_dim(d).with_length(l);
    for batch in [1, 2] {
        let mut model = Seq2SeqModel::new(config.clone(), seed)?;
        // move biases off their initial constants so every gate path is exercised
        for p in model.params_mut() {
            if p.name.contains(".b_") || p.name == "projection.bias" {
                for b in p.data.iter_mut() {
                    *b += rng.uniform_f64(-0.3, 0.3);
                }
            }
        }
        let mut probe = ModelProbe {
            model,
            xs: (0..batch).map(|_| tokens(&mut rng, l, v)).collect(),
            ys: (0..batch).map(|_| tokens(&mut rng, l, v)).collect(),
        };
        push(&format!("model(batch={batch})"), grad_check(&mut probe, model_eps));
    }
    Ok(out)
}
