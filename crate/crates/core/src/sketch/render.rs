//! Deterministic plots of extracted distributions and side-by-side
//! comparison composites.

use image::imageops::FilterType;
use image::{Rgb, RgbImage};

use super::{FamilyParams, SketchError};

pub const PLOT_WIDTH: u32 = 512;
pub const PLOT_HEIGHT: u32 = 384;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const CURVE: Rgb<u8> = Rgb([70, 120, 180]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const MARGIN: u32 = 12;

/// Renders the density (or mass) implied by the parameters over
/// [x_axis_min, x_axis_max] onto a fixed canvas, returned as PNG bytes.
/// Identical inputs produce identical bytes.
pub fn render_interpretation(
    params: &FamilyParams,
    x_axis_min: f64,
    x_axis_max: f64,
    width: u32,
    height: u32,
) -> Vec<u8> {
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let (x_min, x_max) = if x_axis_max > x_axis_min {
        (x_axis_min, x_axis_max)
    } else {
        (0.0, 1.0)
    };
    let plot_w = width.saturating_sub(2 * MARGIN).max(1);
    let plot_h = height.saturating_sub(2 * MARGIN).max(1);

    let value_at = |x: f64| -> f64 {
        match params {
            FamilyParams::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp()
            }
            FamilyParams::Uniform { low, high } => {
                if x >= *low && x <= *high {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyParams::Poisson { lambda } => {
                // Bars of width 0.6 centered on the integer support points,
                // height proportional to lambda^k / k!.
                let k = x.round();
                if k < 1.0 || (x - k).abs() > 0.3 {
                    return 0.0;
                }
                let mut w = 1.0f64;
                let mut i = 1.0f64;
                while i < k {
                    w *= lambda / (i + 1.0);
                    i += 1.0;
                    if w > 1e250 {
                        w = 1e250;
                        break;
                    }
                }
                w
            }
        }
    };

    let samples: Vec<f64> = (0..plot_w)
        .map(|px| {
            let x = x_min + (px as f64 + 0.5) / plot_w as f64 * (x_max - x_min);
            value_at(x)
        })
        .collect();
    let max = samples.iter().copied().fold(0.0f64, f64::max);

    if max > 0.0 {
        for (px, &v) in samples.iter().enumerate() {
            let bar = ((v / max) * (plot_h - 1) as f64).round() as u32;
            for dy in 0..bar {
                let x = MARGIN + px as u32;
                let y = height - MARGIN - 1 - dy;
                img.put_pixel(x, y, CURVE);
            }
        }
    }
    // Baseline axis.
    for px in 0..plot_w {
        img.put_pixel(MARGIN + px, height - MARGIN, AXIS);
    }

    encode_png(&img)
}

fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

/// Places the original sketch on the left and the interpreted plot on the
/// right. Mismatched heights are reconciled by scaling the shorter image up,
/// aspect preserved; the composite width is the sum of the (post-scaling)
/// widths.
pub fn compose_comparison(original: &[u8], interpretation: &[u8]) -> Result<Vec<u8>, SketchError> {
    let left = decode(original)?;
    let right = decode(interpretation)?;
    let target_h = left.height().max(right.height());
    let left = scale_to_height(left, target_h);
    let right = scale_to_height(right, target_h);
    let mut canvas = RgbImage::from_pixel(left.width() + right.width(), target_h, BACKGROUND);
    image::imageops::overlay(&mut canvas, &left, 0, 0);
    image::imageops::overlay(&mut canvas, &right, left.width() as i64, 0);
    Ok(encode_png(&canvas))
}

fn decode(bytes: &[u8]) -> Result<RgbImage, SketchError> {
    Ok(image::load_from_memory(bytes)
        .map_err(|e| SketchError::Image(e.to_string()))?
        .to_rgb8())
}

fn scale_to_height(img: RgbImage, target_h: u32) -> RgbImage {
    if img.height() == target_h {
        return img;
    }
    let factor = target_h as f64 / img.height() as f64;
    let new_w = ((img.width() as f64 * factor).round() as u32).max(1);
    image::imageops::resize(&img, new_w, target_h, FilterType::Nearest)
}
