//! Heatmap rendering: signed-max normalization, Gaussian blur, diverging
//! red-blue colormap, binary PPM output.

use crate::error::{Error, Result};
use crate::metrics::PixelAttribution;

/// Divides by the largest absolute value, mapping scores into [-1, 1]. An
/// all-zero map stays zero (rendered mid-gray).
pub fn signed_max_normalize(attr: &PixelAttribution) -> Vec<f32> {
    let max_abs = attr.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return vec![0.0; attr.values().len()];
    }
    attr.values().iter().map(|v| v / max_abs).collect()
}

/// Separable Gaussian blur with standard deviation `sigma` pixels; kernels
/// are renormalized where they overhang the border, so total mass is
/// approximately preserved. `sigma <= 0` is the identity.
pub fn gaussian_blur(map: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return map.to_vec();
    }
    let half = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let horizontal = blur_axis(map, width, height, &kernel, half, true);
    blur_axis(&horizontal, width, height, &kernel, half, false)
}

fn blur_axis(
    map: &[f32],
    width: usize,
    height: usize,
    kernel: &[f64],
    half: isize,
    along_x: bool,
) -> Vec<f32> {
    let mut out = vec![0.0f32; map.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f64;
            let mut weight = 0.0f64;
            for (ki, &kv) in kernel.iter().enumerate() {
                let offset = ki as isize - half;
                let (sx, sy) = if along_x {
                    (x as isize + offset, y as isize)
                } else {
                    (x as isize, y as isize + offset)
                };
                if sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
                    continue;
                }
                acc += kv * map[sy as usize * width + sx as usize] as f64;
                weight += kv;
            }
            out[y * width + x] = (acc / weight) as f32;
        }
    }
    out
}

/// Diverging red-blue colormap over [-1, 1]: -1 is pure blue, 0 mid-gray
/// (128, 128, 128), +1 pure red.
pub fn diverging_rgb(v: f32) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        let r = (128.0 + 127.0 * v).round() as u8;
        let gb = (128.0 * (1.0 - v)).round() as u8;
        [r, gb, gb]
    } else {
        let b = (128.0 - 127.0 * v).round() as u8;
        let rg = (128.0 * (1.0 + v)).round() as u8;
        [rg, rg, b]
    }
}

/// Default blur radius: 10 pixels at a 224-pixel image side, scaled linearly
/// with the larger side.
pub fn default_blur_radius(width: usize, height: usize) -> f64 {
    10.0 * width.max(height) as f64 / 224.0
}

/// Binary PPM (P6) bytes for an RGB buffer.
pub fn to_ppm(rgb: &[u8], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Full pipeline: normalize, blur (radius `None` uses the side-scaled
/// default, `Some(0.0)` disables), colormap, PPM bytes.
pub fn render_heatmap(attr: &PixelAttribution, blur_radius: Option<f64>) -> Result<Vec<u8>> {
    let (w, h) = (attr.width(), attr.height());
    if w == 0 || h == 0 {
        return Err(Error::InvalidInput("empty attribution map".into()));
    }
    let normalized = signed_max_normalize(attr);
    let radius = blur_radius.unwrap_or_else(|| default_blur_radius(w, h));
    let blurred = gaussian_blur(&normalized, w, h, radius);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for &v in &blurred {
        rgb.extend_from_slice(&diverging_rgb(v));
    }
    Ok(to_ppm(&rgb, w, h))
}
