//! Dense tensors, forward primitives and the reverse-mode tape.

mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use gradcheck::{check as grad_check_with, grad_check, grad_check_sampled, GradCheckReport, ParamCheck, REL_ERR_FLOOR};
pub use ops::{cosine, matvec, reduce_mean, sigmoid_map, spatial_mean, temporal_mean, ReduceAxis};
pub use tape::{Gradients, ParamStore, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{channel_scale, contrastive_weights, cosine_matrix, row_mean, weighted_mean};
