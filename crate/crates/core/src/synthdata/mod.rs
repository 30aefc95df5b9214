//! Synthetic stand-in for a CNN backbone and a video ReID dataset.
//!
//! Frame feature maps are generated directly: an identity prototype broadcast
//! over the spatial grid, per-frame jitter, and on a subset of frames one of
//! three corruptions (another pedestrian blended in, a block of channels
//! occluded, broadband detection noise). Every frame carries its ground-truth
//! quality so learned frame weights can be checked against it.

mod bank;
mod csaf;
mod dataset;
mod sequence;

pub use bank::{make_identity_bank, make_identity_bank_with, BankConfig, IdentityBank};
pub use csaf::{load_csaf, read_csaf, save_csaf, write_csaf, CSAF_MAGIC, CSAF_VERSION};
pub use dataset::{
    load_dataset, load_manifest, make_dataset, save_dataset, Dataset, DatasetConfig, Manifest, ManifestEntry,
    Split, MANIFEST_FILE,
};
pub use sequence::{make_sequence, CorruptionKind, CorruptionSpec, FrameConfig, SequenceBatch};
