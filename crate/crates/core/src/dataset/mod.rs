//! Paired face/MRI corpus ingestion: inventory, splitting and frame
//! preprocessing.

mod frames;
mod manifest;
mod split;

pub use frames::{check_target_size, extract_frame_pairs, FramePair};
pub use manifest::{
    frame_key, scan_corpus, ConsentScope, DatasetManifest, Demographics, Fps, PairRef,
    PermittedUse, Resample, ScanOptions, Split, FACE_DIR, MANIFEST_VERSION, MRI_DIR,
};
pub use split::{split_dataset, target_test_count, SplitKind, SplitPolicy};
