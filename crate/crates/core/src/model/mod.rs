//! The CSA-Net head and its comparison variants: channel attention, GAP + FC
//! frame features, temporal aggregation, losses and training.

mod check;
mod checkpoint;
mod forward;
mod head;
mod loss;
mod sampling;
mod train;

pub use check::{check_gradients, gradcheck_instance, random_batch};
pub use checkpoint::{
    config_path, load_checkpoint, load_head, read_checkpoint, save_checkpoint, save_head, write_checkpoint,
    HeadConfig, CSAH_MAGIC, CSAH_VERSION,
};
pub use forward::{aggregate_frames, attend, frame_features, video_feature, Diagnostics, TapeHead, TapeVideo};
pub use head::*;
pub use loss::{loss_and_gradients, mine_hard_pairs, total_loss, Batch, BatchItem, HardPair, LossParts};
pub use sampling::{sample_frames, SampleMode, TEST_FULL_BELOW, TEST_SEGMENTS};
pub use train::{train, train_observed, Sgd, TrainOutcome, TrainSet};
