//! Face-to-MRI translation pipeline: paired-corpus ingestion, a conditional
//! U-Net/patch-discriminator GAN trained from scratch, FID/SSIM evaluation
//! and provenance tagging of synthetic frames.

pub mod dataset;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod provenance;
pub mod train;

pub use error::{Error, Result};
