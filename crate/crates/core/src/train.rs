//! Mini-batch RMSprop training with early stopping on validation loss.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{BatchStats, Seq2SeqModel};
use crate::optim::{RmspropConfig, RmspropState};
use crate::rng::{SeededRng, Stream};
use crate::tasks::SequencePair;
use crate::tensor::Scalar;

/// Evaluation batches are this size regardless of thread count, so metrics do
/// not depend on scheduling.
pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub optimizer: RmspropConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: RmspropConfig::default(),
            batch_size: 128,
            max_epochs: 200,
            patience: 5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Running mean over the epoch's mini-batches, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_token_acc: f64,
    pub val_token_acc: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub token_acc: f64,
    pub seq_acc: f64,
}

impl From<BatchStats> for EvalMetrics {
    fn from(s: BatchStats) -> Self {
        Self {
            loss: s.mean_loss(),
            token_acc: s.token_accuracy(),
            seq_acc: s.sequence_accuracy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Improved,
    Wait,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` consecutive
/// epochs without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Decision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            Decision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                Decision::Stop
            } else {
                Decision::Wait
            }
        }
    }

    /// Epoch of the best loss so far; 0 when nothing has been observed.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    /// Loss or gradient went non-finite during `epoch`.
    Diverged {
        epoch: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    /// 0 means the initial parameters were never improved upon.
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// Loss and accuracies of `model` over `pairs`.
pub fn evaluate<T: Scalar>(model: &Seq2SeqModel<T>, pairs: &[SequencePair]) -> Result<EvalMetrics> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    Ok(evaluate_stats(model, pairs)?.into())
}

pub fn evaluate_stats<T: Scalar>(model: &Seq2SeqModel<T>, pairs: &[SequencePair]) -> Result<BatchStats> {
    let parts: Vec<BatchStats> = pairs
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let xs: Vec<&[usize]> = chunk.iter().map(|p| p.x.as_slice()).collect();
            let ys: Vec<&[usize]> = chunk.iter().map(|p| p.y.as_slice()).collect();
            model.evaluate_batch(&xs, &ys)
        })
        .collect::<Result<_>>()?;
    let mut total = BatchStats::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

pub fn check_compatible<T: Scalar>(model: &Seq2SeqModel<T>, dataset: &Dataset) -> Result<()> {
    let (m, t) = (model.config(), &dataset.task);
    if m.vocab_size != t.vocab_size || m.input_length != t.length {
        return Err(Error::Config(format!(
            "model expects vocabulary {} and length {}, dataset has vocabulary {} and length {}",
            m.vocab_size, m.input_length, t.vocab_size, t.length
        )));
    }
    Ok(())
}

/// Trains `model` in place. On return `model` holds the parameters with the
/// lowest validation loss seen (the initial ones if no epoch improved).
///
/// `on_epoch` is called after every completed epoch.
pub fn train<T: Scalar>(
    model: &mut Seq2SeqModel<T>,
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(model, dataset)?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs nonempty train and val splits".into(),
        ));
    }

    let mut optimizer = RmspropState::new(model, config.optimizer);
    let mut grads = model.zeros_like();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut shuffle_rng = SeededRng::new(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut running = BatchStats::default();
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[usize]> = batch.iter().map(|&i| dataset.train[i].x.as_slice()).collect();
            let ys: Vec<&[usize]> = batch.iter().map(|&i| dataset.train[i].y.as_slice()).collect();
            grads.set_zero();
            let stats = model.accumulate_gradients(&xs, &ys, &mut grads)?;
            if !stats.loss_sum.is_finite() || optimizer.step(model, &grads).is_err() {
                stop = StopReason::Diverged { epoch };
                break 'epochs;
            }
            running.merge(&stats);
        }
        let val = evaluate_stats(model, &dataset.val)?;
        if !val.loss_sum.is_finite() {
            stop = StopReason::Diverged { epoch };
            break;
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: running.mean_loss(),
            val_loss: val.mean_loss(),
            train_token_acc: running.token_accuracy(),
            val_token_acc: val.token_accuracy(),
            wall_time: started.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        let decision = stopper.observe(epoch, metrics.val_loss);
        history.push(metrics);
        match decision {
            Decision::Improved => best.copy_from(model),
            Decision::Wait => {}
            Decision::Stop => {
                stop = StopReason::EarlyStopped;
                break;
            }
        }
    }
    model.copy_from(&best);
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch(),
        stop,
    })
}
