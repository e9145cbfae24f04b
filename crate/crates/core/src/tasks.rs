//! Synthetic sequence transformation tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::embedding::check_tokens;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Reverse,
    Sort,
    /// `y_i = x_i mod n`
    Replace,
    /// residues, sorted, then reversed (nonincreasing residues)
    Combine,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Reverse, TaskKind::Sort, TaskKind::Replace, TaskKind::Combine];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Reverse => "reverse",
            TaskKind::Sort => "sort",
            TaskKind::Replace => "replace",
            TaskKind::Combine => "combine",
        }
    }

    pub fn needs_modulus(self) -> bool {
        matches!(self, TaskKind::Replace | TaskKind::Combine)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown task {s:?} (expected reverse, sort, replace or combine)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub length: usize,
    pub modulus: Option<usize>,
}

impl TaskSpec {
    pub const DEFAULT_LENGTH: usize = 25;

    /// Task with the default length; replace/combine get the modulus `V / 5`.
    pub fn new(kind: TaskKind, vocab_size: usize) -> Self {
        Self {
            kind,
            vocab_size,
            length: Self::DEFAULT_LENGTH,
            modulus: kind.needs_modulus().then(|| default_modulus(vocab_size)),
        }
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn with_modulus(mut self, modulus: Option<usize>) -> Self {
        self.modulus = modulus;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!(
                "vocabulary must have at least 2 symbols, got {}",
                self.vocab_size
            )));
        }
        if self.length == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        if self.kind.needs_modulus() {
            match self.modulus {
                None => return Err(Error::Config(format!("task {} requires a modulus", self.kind))),
                Some(n) if n == 0 || n > self.vocab_size => {
                    return Err(Error::Config(format!(
                        "modulus {n} must lie in [1, {}]",
                        self.vocab_size
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// The target sequence for `x`.
    pub fn apply(&self, x: &[usize]) -> Result<Vec<usize>> {
        check_tokens(x, self.vocab_size)?;
        let modulus = || {
            self.modulus
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("task {} requires a modulus", self.kind)))
        };
        Ok(match self.kind {
            TaskKind::Reverse => x.iter().rev().copied().collect(),
            TaskKind::Sort => {
                let mut y = x.to_vec();
                y.sort_unstable();
                y
            }
            TaskKind::Replace => {
                let n = modulus()?;
                x.iter().map(|&v| v % n).collect()
            }
            TaskKind::Combine => {
                let n = modulus()?;
                let mut y: Vec<usize> = x.iter().map(|&v| v % n).collect();
                y.sort_unstable_by(|a, b| b.cmp(a));
                y
            }
        })
    }

    /// One pair with `x` drawn i.i.d. uniform over the vocabulary.
    pub fn generate_pair(&self, rng: &mut SeededRng) -> SequencePair {
        let x: Vec<usize> = (0..self.length).map(|_| rng.index(self.vocab_size)).collect();
        let y = self
            .apply(&x)
            .expect("generated tokens are in range and the spec is validated");
        SequencePair { x, y }
    }
}

/// `V / 5` (the top fifth of the vocabulary), at least 1.
pub fn default_modulus(vocab_size: usize) -> usize {
    (vocab_size / 5).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequencePair {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}
