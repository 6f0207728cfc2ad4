use std::path::Path;

use log::warn;
use rayon::prelude::*;

use super::manifest::{frame_key, DatasetManifest, Fps, PairRef};
use crate::error::Result;
use crate::imaging::{open_image, preprocess_face, preprocess_mri, Frame};

/// One aligned (face, MRI) sample, preprocessed to `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub subject_id: String,
    pub sentence_id: String,
    pub frame_index: usize,
    /// (3, H, W)
    pub face: Frame,
    /// (1, H, W)
    pub mri: Frame,
    pub source_fps: Fps,
}

impl FramePair {
    pub fn key(&self) -> String {
        frame_key(&self.subject_id, &self.sentence_id, self.frame_index)
    }
}

/// Sides that reach a 1×1 bottleneck after `downsamplings` stride-2 layers.
pub fn check_target_size(size: (usize, usize), downsamplings: usize) -> bool {
    size.0 == size.1 && size.0.is_power_of_two() && size.0 >= 1 << downsamplings
}

fn load_pair(root: &Path, p: &PairRef, size: (usize, usize), fps: Fps) -> Result<FramePair> {
    let face = preprocess_face(&open_image(&root.join(&p.face_path))?, size);
    let mri = preprocess_mri(&open_image(&root.join(&p.mri_path))?, size);
    Ok(FramePair {
        subject_id: p.subject_id.clone(),
        sentence_id: p.sentence_id.clone(),
        frame_index: p.frame_index,
        face,
        mri,
        source_fps: fps,
    })
}

/// Decodes and preprocesses every pair of `manifest`, in manifest order.
///
/// A size the default generator cannot consume only produces a
/// warning here; the model layer rejects it.
pub fn extract_frame_pairs(
    manifest: &DatasetManifest,
    target_size: (usize, usize),
) -> Result<Vec<FramePair>> {
    if !check_target_size(target_size, 8) {
        warn!(
            "target size {}x{} does not fit the default 8-layer encoder (needs square power of two >= 256)",
            target_size.0, target_size.1
        );
    }
    let root = Path::new(&manifest.root);
    manifest
        .pairs
        .par_iter()
        .map(|p| load_pair(root, p, target_size, manifest.fps))
        .collect()
}
