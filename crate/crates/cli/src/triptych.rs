//! Side-by-side composites: face | ground truth | generated, under a
//! caption strip.

use image::{imageops, DynamicImage, Rgb, RgbImage};

use crate::font;

/// Height of the caption strip above the panels.
pub const CAPTION_HEIGHT: u32 = 20;
pub const FACE_LABEL: &str = "FACE";
pub const TRUTH_LABEL: &str = "GROUND TRUTH";
pub const GENERATED_LABEL: &str = "GENERATED";
pub const NO_TRUTH_LABEL: &str = "GENERATED (NO GROUND TRUTH)";

const CAPTION_BG: Rgb<u8> = Rgb([0, 0, 0]);
const CAPTION_FG: Rgb<u8> = Rgb([255, 255, 255]);

fn to_height(img: &DynamicImage, h: u32) -> RgbImage {
    let rgb = img.to_rgb8();
    if rgb.height() == h {
        return rgb;
    }
    let w = ((rgb.width() as u64 * h as u64 + rgb.height() as u64 / 2) / rgb.height() as u64).max(1) as u32;
    imageops::resize(&rgb, w, h, imageops::FilterType::Triangle)
}

/// Largest scale (2 or 1) at which the label fits; the label is cut short
/// when even scale 1 overflows the panel.
fn fit_label(label: &str, width: u32) -> (String, u32) {
    for scale in [2, 1] {
        if font::text_width(label, scale) + 2 <= width {
            return (label.to_string(), scale);
        }
    }
    let fits = ((width + 1) / (font::GLYPH_W + 1)) as usize;
    (label.chars().take(fits).collect(), 1)
}

fn caption(canvas: &mut RgbImage, label: &str, x0: u32, width: u32) {
    let (text, scale) = fit_label(label, width);
    let tw = font::text_width(&text, scale);
    let x = x0 + width.saturating_sub(tw) / 2;
    let y = CAPTION_HEIGHT.saturating_sub(font::GLYPH_H * scale) / 2;
    let (cw, ch) = canvas.dimensions();
    font::raster(&text, x, y, scale, |px, py| {
        if px < cw && py < ch {
            canvas.put_pixel(px, py, CAPTION_FG);
        }
    });
}

/// Panels are scaled to the face height and placed left to right; the face
/// panel is copied verbatim. Without `truth` the middle panel is dropped and
/// the generated panel is labelled accordingly.
pub fn render_triptych(face: &DynamicImage, truth: Option<&DynamicImage>, generated: &DynamicImage) -> RgbImage {
    let h = face.height();
    let mut panels = vec![(face.to_rgb8(), FACE_LABEL)];
    match truth {
        Some(t) => {
            panels.push((to_height(t, h), TRUTH_LABEL));
            panels.push((to_height(generated, h), GENERATED_LABEL));
        }
        None => panels.push((to_height(generated, h), NO_TRUTH_LABEL)),
    }
    let width: u32 = panels.iter().map(|(p, _)| p.width()).sum();
    let mut canvas = RgbImage::from_pixel(width, h + CAPTION_HEIGHT, CAPTION_BG);
    let mut x = 0;
    for (panel, label) in &panels {
        imageops::replace(&mut canvas, panel, x as i64, CAPTION_HEIGHT as i64);
        caption(&mut canvas, label, x, panel.width());
        x += panel.width();
    }
    canvas
}
