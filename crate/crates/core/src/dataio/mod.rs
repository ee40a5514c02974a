//! Recording I/O, synchronization, splitting and feature assembly.

mod alignment;
mod convert;
mod features;
mod format;
mod split;
mod sync;

pub use alignment::Alignment;
pub use convert::convert_directory;
pub use features::{
    build_features, build_features_blocks, standardize, ChannelKinds, ChannelSelection, FeatureLayout,
    FeatureMatrix, Standardizer, TargetMatrix,
};
pub use format::{header, load_recording, manifest_path, read_manifest, save_recording, write_manifest};
pub use split::{split, SplitPart, SplitSpec, DEFAULT_BLOCK_SECONDS};
pub use sync::{synchronize, ImuStream, TreadmillStream, MAX_CLOCK_SKEW};
