//! Multi-perspective context matching (MPCM) for extractive question answering.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors with a reverse-mode tape and gradient checking.
//! * [`text`]: SQuAD loading, tokenization with character offsets, answer
//!   alignment, vocabularies, embeddings and batching.
//! * [`model`]: the six-layer network from word representation to boundary
//!   distributions.
//! * [`train`]: span loss, ADAM, checkpoints, the training loop and ensembles.
//! * [`eval`]: constrained span decoding, EM/F1 scoring, breakdown reports and
//!   ablation sweeps.

pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::{Real, Tensor};
