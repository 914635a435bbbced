//! Columns of per-level embeddings over an image grid, settled by a
//! four-contribution update with similarity-gated lateral attention, trained
//! end to end with denoising reconstruction plus agreement and contrastive
//! regularizers. Settled levels are read out as islands of near-identical
//! vectors forming a parse tree. A standalone population-code module handles
//! log-space uncertainty combination.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod islands;
pub mod mlp;
pub mod optim;
pub mod model;
pub mod rng;
pub mod settle;
pub mod tape;
pub mod tensor;

pub use error::{GlomError, Result};
pub use tensor::Tensor;
