//! Frame buffers and the conversions between 8-bit image files and the
//! `[-1, 1]` floating-point domain the networks operate in.

use std::io::Cursor;
use std::path::Path;

use image::{imageops::FilterType, DynamicImage, GrayImage, ImageFormat, RgbImage};
use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};

/// Channel-major (C, H, W) frame.
pub type Frame = Array3<f64>;

/// Native 8-bit range of decoded frames.
pub const NATIVE_RANGE: (f64, f64) = (0.0, 255.0);
/// Range the networks consume and produce.
pub const UNIT_RANGE: (f64, f64) = (-1.0, 1.0);

/// Linearly maps every value from `from` to `to`. An identity range is a no-op.
pub fn linear_map(frame: &mut Frame, from: (f64, f64), to: (f64, f64)) {
    if from == to {
        return;
    }
    let scale = (to.1 - to.0) / (from.1 - from.0);
    frame.mapv_inplace(|v| (v - from.0) * scale + to.0);
}

pub fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::UndecodableFrame {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Crops the largest centered region with the target aspect ratio, then
/// resamples it bilinearly to `(height, width)`.
pub fn crop_resize(img: &DynamicImage, height: u32, width: u32) -> DynamicImage {
    let (w, h) = (img.width(), img.height());
    // Compare w/h against width/height without floats.
    let (crop_w, crop_h) = if (w as u64) * (height as u64) > (h as u64) * (width as u64) {
        (((h as u64 * width as u64) / height as u64) as u32, h)
    } else {
        (w, ((w as u64 * height as u64) / width as u64) as u32)
    };
    let x = (w - crop_w) / 2;
    let y = (h - crop_h) / 2;
    let cropped = img.crop_imm(x, y, crop_w.max(1), crop_h.max(1));
    if cropped.width() == width && cropped.height() == height {
        return cropped;
    }
    cropped.resize_exact(width, height, FilterType::Triangle)
}

pub fn rgb_to_frame(img: &RgbImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut frame = Frame::zeros((3, h, w));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            frame[[c, y as usize, x as usize]] = px.0[c] as f64;
        }
    }
    frame
}

pub fn gray_to_frame(img: &GrayImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut frame = Frame::zeros((1, h, w));
    for (x, y, px) in img.enumerate_pixels() {
        frame[[0, y as usize, x as usize]] = px.0[0] as f64;
    }
    frame
}

/// Face frame: 3 channels, values in `[-1, 1]`.
pub fn preprocess_face(img: &DynamicImage, size: (usize, usize)) -> Frame {
    let resized = crop_resize(img, size.0 as u32, size.1 as u32);
    let mut frame = rgb_to_frame(&resized.to_rgb8());
    linear_map(&mut frame, NATIVE_RANGE, UNIT_RANGE);
    frame
}

/// MRI frame: 1 channel (luma), values in `[-1, 1]`.
pub fn preprocess_mri(img: &DynamicImage, size: (usize, usize)) -> Frame {
    let resized = crop_resize(img, size.0 as u32, size.1 as u32);
    let mut frame = gray_to_frame(&resized.to_luma8());
    linear_map(&mut frame, NATIVE_RANGE, UNIT_RANGE);
    frame
}

fn to_u8(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Quantizes a `[-1, 1]` frame to an 8-bit image (1 channel → gray, 3 → RGB).
pub fn frame_to_image(frame: ArrayView3<f64>) -> Result<DynamicImage> {
    let (c, h, w) = frame.dim();
    match c {
        1 => Ok(DynamicImage::ImageLuma8(GrayImage::from_fn(
            w as u32,
            h as u32,
            |x, y| image::Luma([to_u8(frame[[0, y as usize, x as usize]])]),
        ))),
        3 => Ok(DynamicImage::ImageRgb8(RgbImage::from_fn(
            w as u32,
            h as u32,
            |x, y| {
                let (x, y) = (x as usize, y as usize);
                image::Rgb([
                    to_u8(frame[[0, y, x]]),
                    to_u8(frame[[1, y, x]]),
                    to_u8(frame[[2, y, x]]),
                ])
            },
        ))),
        _ => Err(Error::ShapeMismatch {
            expected: "1 or 3 channels".into(),
            got: format!("{c} channels"),
        }),
    }
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<DynamicImage> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?)
}

/// Loads an 8-bit image as a 1-channel `[-1, 1]` frame at native resolution.
pub fn load_gray_frame(path: &Path) -> Result<Frame> {
    let mut frame = gray_to_frame(&open_image(path)?.to_luma8());
    linear_map(&mut frame, NATIVE_RANGE, UNIT_RANGE);
    Ok(frame)
}

/// Bilinear resize of a `[-1, 1]` frame, channel by channel, in floating point.
pub fn resize_frame(frame: &Frame, height: usize, width: usize) -> Frame {
    let (c, h, w) = frame.dim();
    if h == height && w == width {
        return frame.clone();
    }
    let mut out = Frame::zeros((c, height, width));
    let sy = h as f64 / height as f64;
    let sx = w as f64 / width as f64;
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for ch in 0..c {
                let top = frame[[ch, y0, x0]] * (1.0 - tx) + frame[[ch, y0, x1]] * tx;
                let bottom = frame[[ch, y1, x0]] * (1.0 - tx) + frame[[ch, y1, x1]] * tx;
                out[[ch, y, x]] = top * (1.0 - ty) + bottom * ty;
            }
        }
    }
    out
}
