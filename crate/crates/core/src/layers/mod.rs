//! Network building blocks with hand-written forward and backward passes.

pub mod embedding;
pub mod gradcheck;
pub mod lstm;
pub mod projection;

pub use embedding::Embedding;
pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use lstm::{Lstm, LstmTape, GATES};
pub use projection::{cross_entropy, Projection};
