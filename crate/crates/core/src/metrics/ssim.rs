use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    Gaussian { size: usize, sigma: f64 },
    Uniform { size: usize },
}

impl Window {
    pub fn size(&self) -> usize {
        match *self {
            Window::Gaussian { size, .. } | Window::Uniform { size } => size,
        }
    }

    /// 1-D taps; the 2-D window is their outer product and sums to 1.
    pub fn taps(&self) -> Vec<f64> {
        let raw: Vec<f64> = match *self {
            Window::Gaussian { size, sigma } => {
                let c = (size as f64 - 1.0) / 2.0;
                (0..size)
                    .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect()
            }
            Window::Uniform { size } => vec![1.0; size],
        };
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    pub fn weights(&self) -> Array2<f64> {
        let t = self.taps();
        Array2::from_shape_fn((t.len(), t.len()), |(i, j)| t[i] * t[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: Window,
    pub k1: f64,
    pub k2: f64,
    /// Value span of the images; 2.0 for the `[-1, 1]` domain.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: Window::Gaussian {
                size: 11,
                sigma: 1.5,
            },
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 2.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        if !(self.dynamic_range > 0.0) {
            return Err(Error::MetricInput(format!(
                "dynamic range {} must be positive",
                self.dynamic_range
            )));
        }
        if self.window.size() == 0 {
            return Err(Error::MetricInput("empty SSIM window".into()));
        }
        if let Window::Gaussian { sigma, .. } = self.window {
            if !(sigma > 0.0) {
                return Err(Error::MetricInput(format!("window sigma {sigma} must be positive")));
            }
        }
        Ok(())
    }
}

/// Separable "valid" filtering: only window positions fully inside the image.
fn filter_valid(img: ArrayView2<f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = Array2::zeros((h, wo));
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * img[[y, x + i]];
            }
            rows[[y, x]] = acc;
        }
    }
    let mut out = Array2::zeros((ho, wo));
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * rows[[y + i, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

fn ssim_channel(x: ArrayView2<f64>, y: ArrayView2<f64>, p: &SsimParams) -> f64 {
    let taps = p.window.taps();
    let (c1, c2) = (p.c1(), p.c2());
    let mu_x = filter_valid(x, &taps);
    let mu_y = filter_valid(y, &taps);
    let xx = filter_valid((&x * &x).view(), &taps);
    let yy = filter_valid((&y * &y).view(), &taps);
    let xy = filter_valid((&x * &y).view(), &taps);
    let mut sum = 0.0;
    for (((&mx, &my), (&exx, &eyy)), &exy) in mu_x
        .iter()
        .zip(mu_y.iter())
        .zip(xx.iter().zip(yy.iter()))
        .zip(xy.iter())
    {
        let sx = exx - mx * mx;
        let sy = eyy - my * my;
        let sxy = exy - mx * my;
        sum += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    sum / mu_x.len() as f64
}

/// Mean SSIM over all window positions, averaged across channels.
pub fn ssim_pair(x: &Frame, y: &Frame, p: &SsimParams) -> Result<f64> {
    p.validate()?;
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x.shape()),
            got: format!("{:?}", y.shape()),
        });
    }
    let (c, h, w) = x.dim();
    let k = p.window.size();
    if c == 0 || h < k || w < k {
        return Err(Error::MetricInput(format!(
            "{h}x{w} image smaller than the {k}x{k} SSIM window"
        )));
    }
    let total: f64 = (0..c)
        .map(|ch| ssim_channel(x.index_axis(Axis(0), ch), y.index_axis(Axis(0), ch), p))
        .sum();
    Ok(total / c as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimSummary {
    pub per_frame: Vec<f64>,
    pub mean: f64,
}

pub fn ssim_mean<'a>(
    pairs: impl IntoIterator<Item = (&'a Frame, &'a Frame)>,
    p: &SsimParams,
) -> Result<SsimSummary> {
    let per_frame = pairs
        .into_iter()
        .map(|(g, t)| ssim_pair(g, t, p))
        .collect::<Result<Vec<_>>>()?;
    if per_frame.is_empty() {
        return Err(Error::MetricInput("no frame pairs to score".into()));
    }
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(SsimSummary { per_frame, mean })
}
