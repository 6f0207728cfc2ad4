use serde::{Deserialize, Serialize};

use super::fid::{fid, FeatureExtractor};
use super::ssim::{ssim_mean, SsimParams};
use crate::error::{Error, Result};
use crate::imaging::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim_mean: f64,
    pub ssim_per_frame: Vec<f64>,
    /// `None` when the embedding is unavailable.
    pub fid: Option<f64>,
    pub embedding_id: String,
    pub feature_dim: Option<usize>,
    pub n_generated: usize,
    pub n_real: usize,
    pub frame_count: usize,
    pub ssim_params: SsimParams,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Scores generated frames against their ground truth, pairwise for SSIM
/// and as two distributions for FID.
pub fn evaluate_frames(
    generated: &[Frame],
    truth: &[Frame],
    ssim: &SsimParams,
    extractor: &dyn FeatureExtractor,
) -> Result<MetricReport> {
    if generated.len() != truth.len() {
        return Err(Error::MetricInput(format!(
            "{} generated frames but {} ground-truth frames",
            generated.len(),
            truth.len()
        )));
    }
    let summary = ssim_mean(generated.iter().zip(truth), ssim)?;
    let mut warnings = Vec::new();
    let (fid_value, dim) = match fid(generated, truth, extractor) {
        Ok(r) => {
            if r.n_a < r.dim || r.n_b < r.dim {
                warnings.push(format!(
                    "small sample: n_generated={} n_real={} below feature dimension d={}; covariance estimates are rank-deficient",
                    r.n_a, r.n_b, r.dim
                ));
            }
            (Some(r.value), Some(r.dim))
        }
        Err(Error::ExtractorUnavailable(msg)) => {
            warnings.push(format!("fid unavailable: {msg}"));
            (None, None)
        }
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        ssim_mean: summary.mean,
        frame_count: summary.per_frame.len(),
        ssim_per_frame: summary.per_frame,
        fid: fid_value,
        embedding_id: extractor.id(),
        feature_dim: dim,
        n_generated: generated.len(),
        n_real: truth.len(),
        ssim_params: *ssim,
        warnings,
    })
}
