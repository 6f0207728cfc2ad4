//! Image-quality metrics: windowed SSIM and Fréchet distance between
//! Gaussian fits of feature embeddings (FID).

mod fid;
mod report;
mod ssim;

pub use fid::{
    embed_features, fid, frechet_distance, gaussian_stats, to_three_channels, FeatureExtractor,
    FeatureStats, FidResult, IdentityExtractor, UnavailableExtractor, JITTER_MAX, JITTER_START,
};
pub use report::{evaluate_frames, MetricReport};
pub use ssim::{ssim_mean, ssim_pair, SsimParams, SsimSummary, Window};
