//! Video re-identification feature head built from two attention operators:
//! context sensing channel attention over per-frame feature maps, and
//! contrastive temporal aggregation of the resulting frame features.
//!
//! The crate carries its own small dense-tensor kernel with a reverse-mode
//! tape ([`numerics`]), a synthetic corrupted-tracklet generator
//! ([`synthdata`]) standing in for a CNN backbone, the assembled and
//! trainable head ([`model`]), retrieval metrics and the ablation harness
//! ([`eval`]), and the command-line front end ([`cli`]).

pub mod cfa;
pub mod cli;
pub mod csca;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
pub use numerics::Tensor;
