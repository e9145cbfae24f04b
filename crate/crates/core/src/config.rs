//! The single JSON document that describes a run.
//!
//! Every key is optional in the file; `task` and `vocab_size` have no
//! default and must come from the file or the command line before a command
//! that needs them runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitSizes};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optim::RmspropConfig;
use crate::tasks::{TaskKind, TaskSpec};
use crate::tensor::Precision;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskKind>,
    pub vocab_size: Option<usize>,
    /// Defaults to 25.
    pub length: Option<usize>,
    /// Defaults to `vocab_size / 5` for replace and combine.
    pub modulus: Option<usize>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub hidden_size: usize,
    pub embed_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub threads: usize,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    /// When false the metrics CSV records 0 for wall time, so reruns are
    /// byte-identical.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            task: None,
            vocab_size: None,
            length: None,
            modulus: None,
            train_size: 9000,
            val_size: 1000,
            test_size: 10000,
            hidden_size: 128,
            embed_dim: ModelConfig::DEFAULT_EMBED_DIM,
            batch_size: train.batch_size,
            learning_rate: train.optimizer.learning_rate,
            rho: train.optimizer.rho,
            epsilon: train.optimizer.epsilon,
            max_epochs: train.max_epochs,
            patience: train.patience,
            seed: train.seed,
            threads: 1,
            precision: Precision::Single,
            out_dir: PathBuf::from("run"),
            dataset: None,
            record_wall_time: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn length(&self) -> usize {
        self.length.unwrap_or(TaskSpec::DEFAULT_LENGTH)
    }

    /// Takes task, vocabulary, length, modulus and split sizes from a loaded
    /// dataset. Values already set that disagree with it are an error.
    pub fn adopt_dataset(&mut self, ds: &Dataset) -> Result<()> {
        let t = &ds.task;
        let clash = |what: &str, ours: String, theirs: String| {
            Err(Error::Config(format!(
                "config sets {what} {ours} but the dataset has {theirs}"
            )))
        };
        if let Some(k) = self.task.filter(|&k| k != t.kind) {
            return clash("task", k.to_string(), t.kind.to_string());
        }
        if let Some(v) = self.vocab_size.filter(|&v| v != t.vocab_size) {
            return clash("vocab_size", v.to_string(), t.vocab_size.to_string());
        }
        if let Some(l) = self.length.filter(|&l| l != t.length) {
            return clash("length", l.to_string(), t.length.to_string());
        }
        if let Some(n) = self.modulus.filter(|&n| Some(n) != t.modulus) {
            return clash("modulus", n.to_string(), format!("{:?}", t.modulus));
        }
        self.task = Some(t.kind);
        self.vocab_size = Some(t.vocab_size);
        self.length = Some(t.length);
        self.modulus = t.modulus;
        let sizes = ds.sizes();
        self.train_size = sizes.train;
        self.val_size = sizes.val;
        self.test_size = sizes.test;
        Ok(())
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let kind = self.task.ok_or_else(|| Error::Config("task is required".into()))?;
        let vocab = self
            .vocab_size
            .ok_or_else(|| Error::Config("vocab_size is required".into()))?;
        let mut spec = TaskSpec::new(kind, vocab).with_length(self.length());
        if self.modulus.is_some() {
            if !kind.needs_modulus() {
                return Err(Error::Config(format!("task {kind} takes no modulus")));
            }
            spec = spec.with_modulus(self.modulus);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn split_sizes(&self) -> SplitSizes {
        SplitSizes::new(self.train_size, self.val_size, self.test_size)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let vocab = self
            .vocab_size
            .ok_or_else(|| Error::Config("vocab_size is required".into()))?;
        let cfg = ModelConfig::new(vocab, self.hidden_size)
            .with_embed_dim(self.embed_dim)
            .with_length(self.length());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            optimizer: RmspropConfig {
                learning_rate: self.learning_rate,
                rho: self.rho,
                epsilon: self.epsilon,
            },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.task_spec()?;
        self.model_config()?;
        self.train_config()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}
