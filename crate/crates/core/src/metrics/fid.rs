use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{resize_frame, Frame};

/// Image embedding used for FID. Inputs are always 3-channel frames in
/// `[-1, 1]`, already resized to [`FeatureExtractor::input_size`].
pub trait FeatureExtractor: Sync {
    fn id(&self) -> String;
    fn input_size(&self) -> Option<(usize, usize)>;
    fn embed(&self, image: &Frame) -> Result<Vec<f64>>;
}

/// Flattened pixels, optionally after a bilinear resize. Makes every step of
/// the FID computation checkable without pretrained weights.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor {
    pub size: Option<(usize, usize)>,
}

impl FeatureExtractor for IdentityExtractor {
    fn id(&self) -> String {
        match self.size {
            Some((h, w)) => format!("identity-{h}x{w}"),
            None => "identity".into(),
        }
    }

    fn input_size(&self) -> Option<(usize, usize)> {
        self.size
    }

    fn embed(&self, image: &Frame) -> Result<Vec<f64>> {
        Ok(image.iter().copied().collect())
    }
}

/// Stand-in for an embedding network whose weights are not present. Every
/// embedding attempt fails, so FID is reported as unavailable.
#[derive(Debug, Clone)]
pub struct UnavailableExtractor {
    pub name: String,
    pub reason: String,
}

impl UnavailableExtractor {
    pub fn inception() -> Self {
        Self {
            name: "inception-v3-pool3-2048".into(),
            reason: "pretrained Inception-v3 weights are not bundled with this build".into(),
        }
    }
}

impl FeatureExtractor for UnavailableExtractor {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn input_size(&self) -> Option<(usize, usize)> {
        Some((299, 299))
    }

    fn embed(&self, _image: &Frame) -> Result<Vec<f64>> {
        Err(Error::ExtractorUnavailable(format!("{}: {}", self.name, self.reason)))
    }
}

/// Replicates a 1-channel frame to 3 identical channels; 3-channel frames
/// pass through.
pub fn to_three_channels(frame: &Frame) -> Result<Frame> {
    match frame.dim().0 {
        3 => Ok(frame.clone()),
        1 => {
            let g = frame.index_axis(Axis(0), 0);
            Ok(ndarray::stack(Axis(0), &[g, g, g]).expect("same shape"))
        }
        c => Err(Error::MetricInput(format!("cannot embed a {c}-channel frame"))),
    }
}

/// (n × d) embedding matrix; row `i` embeds `images[i]`.
pub fn embed_features(images: &[Frame], extractor: &dyn FeatureExtractor) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| {
            let mut x = to_three_channels(img)?;
            if let Some((h, w)) = extractor.input_size() {
                x = resize_frame(&x, h, w);
            }
            extractor.embed(&x)
        })
        .collect::<Result<_>>()?;
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::MetricInput("extractor returned ragged embeddings".into()));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((images.len(), d), flat).expect("n × d"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased, symmetrized covariance.
pub fn gaussian_stats(features: &Array2<f64>) -> Result<FeatureStats> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::MetricInput(format!(
            "need at least 2 feature rows for a covariance, got {n}"
        )));
    }
    let mean = features.mean_axis(Axis(0)).expect("n >= 2");
    let centered = features - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let covariance = (&cov + &cov.t()) * 0.5;
    debug_assert_eq!(covariance.dim(), (d, d));
    Ok(FeatureStats {
        mean,
        covariance,
        n,
    })
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

fn eigen(m: DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = m.try_symmetric_eigen(1e-14, 10_000)?;
    e.eigenvalues.iter().all(|v| v.is_finite()).then_some(e)
}

/// Square roots of eigenvalues, treating values within rounding noise of
/// zero as zero (the square root would otherwise amplify that noise).
fn sqrt_eigenvalues(vals: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * vals.len() as f64 * f64::EPSILON;
    vals.map(|v| if v > tol { v.sqrt() } else { 0.0 })
}

/// Tr((A·B)^{1/2}) through the symmetric form Tr((√A·B·√A)^{1/2}), with
/// eigenvalue residue below zero clamped.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ea = eigen(a.clone())?;
    let sqrt_a = &ea.eigenvectors * DMatrix::from_diagonal(&sqrt_eigenvalues(&ea.eigenvalues)) * ea.eigenvectors.transpose();
    let m = &sqrt_a * b * &sqrt_a;
    let m = (&m + m.transpose()) * 0.5;
    let em = eigen(m)?;
    Some(sqrt_eigenvalues(&em.eigenvalues).sum())
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// ‖μa − μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^{1/2}), clamped at 0.
///
/// If the eigendecomposition fails, ε·I is added to both covariances with ε
/// growing tenfold from 1e-10 to 1e-6.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::MetricInput(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let ca = to_dmatrix(&a.covariance);
    let cb = to_dmatrix(&b.covariance);
    let trace_term = ca.trace() + cb.trace();

    let mut jitter = 0.0;
    loop {
        let (ja, jb) = if jitter > 0.0 {
            let eye = DMatrix::<f64>::identity(d, d) * jitter;
            (&ca + &eye, &cb + &eye)
        } else {
            (ca.clone(), cb.clone())
        };
        if let Some(tr) = trace_sqrt_product(&ja, &jb) {
            let fd = mean_term + trace_term - 2.0 * tr;
            return Ok(fd.max(0.0));
        }
        jitter = if jitter == 0.0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * 1.000_001 {
            return Err(Error::SqrtmFailed(jitter / 10.0));
        }
        log::warn!("matrix square root failed; retrying with jitter {jitter:e}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidResult {
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub dim: usize,
}

/// FID between two image sets under `extractor`.
pub fn fid(images_a: &[Frame], images_b: &[Frame], extractor: &dyn FeatureExtractor) -> Result<FidResult> {
    if images_a.len() < 2 || images_b.len() < 2 {
        return Err(Error::MetricInput(format!(
            "FID needs at least 2 images per set, got {} and {}",
            images_a.len(),
            images_b.len()
        )));
    }
    let sa = gaussian_stats(&embed_features(images_a, extractor)?)?;
    let sb = gaussian_stats(&embed_features(images_b, extractor)?)?;
    Ok(FidResult {
        value: frechet_distance(&sa, &sb)?,
        n_a: sa.n,
        n_b: sb.n,
        dim: sa.dim(),
    })
}
