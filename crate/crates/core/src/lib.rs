//! LSTM encoder-decoder trained from scratch on synthetic sequence
//! transformation tasks (reverse, sort, replace-by-residue, and their
//! combination), with the tooling to reproduce accuracy tables and inspect
//! the learned token embeddings.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod optim;
pub mod rng;
pub mod run;
pub mod tasks;
pub mod tensor;
pub mod train;
pub mod verify;

pub use data::{make_dataset, Dataset, Split, SplitSizes};
pub use error::{Error, Result};
pub use model::{BatchStats, ModelConfig, Seq2SeqModel};
pub use rng::{SeededRng, Stream};
pub use tasks::{SequencePair, TaskKind, TaskSpec};
pub use tensor::{Precision, Scalar, Tensor};
