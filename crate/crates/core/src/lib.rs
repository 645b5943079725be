//! Personality-aware neural collaborative filtering.
//!
//! The crate covers the whole experimental pipeline:
//!
//! - [`corpus`]: Amazon-style JSON-lines reviews, the active-user filter,
//!   dense interaction sets, dataset statistics, leave-one-out splits,
//!   negative sampling and a synthetic personality-correlated generator.
//! - [`personality`]: OCEAN scores and the three feature transforms
//!   (most-salient label, softmax weights, fixed score vector), score CSV
//!   import, an offline lexicon scorer and distribution summaries.
//! - [`numerics`]: dense matrices, the MLP forward/backward pass, binary
//!   cross-entropy, Adam and finite-difference gradient checking.
//! - [`model`]: the NCF scorer with six personality modes.
//! - [`training`]: the mini-batch loop and the `PNCF` checkpoint format.
//! - [`evaluation`]: HR@K / NDCG@K under leave-one-out ranking, the per-trait
//!   breakdown and Cohen's kappa.
//! - [`cli`]: the `pncf` command-line front end.
//!
//! Runnable walkthroughs live in `crates/core/examples/`.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod personality;
pub mod plot;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
