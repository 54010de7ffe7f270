//! Synthetic rectified stereo pairs and their encoding as pairwise
//! energy-minimization problems.
//!
//! The energy model is the usual stand-in: truncated absolute difference
//! for the data term, Potts smoothness on the 4-neighbor grid. Nothing
//! here depends on real imagery; the generator fabricates a smooth random
//! texture and a piecewise-constant disparity field so ground truth is
//! known exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Problem;

use super::pgm::GrayImage;
use super::HarnessError;

#[derive(Clone, Debug)]
pub struct StereoParams {
    /// Number of disparity levels; labels run 0..max_disparity.
    pub max_disparity: usize,
    /// Cap on the absolute-difference data term. Out-of-frame shifts cost
    /// exactly this much.
    pub data_truncation: f64,
    /// Potts penalty for differing disparities between 4-neighbors.
    pub smoothness_weight: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams { max_disparity: 8, data_truncation: 20.0, smoothness_weight: 6.0 }
    }
}

/// Fabricates a stereo pair with known ground truth: a smooth random
/// texture for the right image, a piecewise-constant disparity field, and
/// a left image sampled as `L(x,y) = R(x-d(x,y), y)` (clamped at the left
/// border). Deterministic for a fixed seed.
pub fn stereo_synthetic(
    width: usize,
    height: usize,
    max_disparity: usize,
    seed: u64,
) -> Result<(GrayImage, GrayImage, Vec<usize>), HarnessError> {
    if width < 8 || height < 8 {
        return Err(HarnessError::TooSmall { width, height });
    }
    if max_disparity == 0 {
        return Err(HarnessError::NoDisparities);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut texture: Vec<f64> = (0..width * height).map(|_| rng.gen::<f64>()).collect();
    for _ in 0..2 {
        texture = box_blur(&texture, width, height, 2);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &texture {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    let right_pixels: Vec<u8> = texture
        .iter()
        .map(|&v| (25.0 + (v - lo) / span * 205.0).round() as u8)
        .collect();
    let right = GrayImage::new(width, height, right_pixels)?;

    let mut truth = vec![max_disparity / 2; width * height];
    let patches = 3 + width * height / 200;
    for _ in 0..patches {
        let pw = rng.gen_range(width / 8..=width / 2).max(2);
        let ph = rng.gen_range(height / 8..=height / 2).max(2);
        let x0 = rng.gen_range(0..=width - pw);
        let y0 = rng.gen_range(0..=height - ph);
        let d = rng.gen_range(0..max_disparity);
        for y in y0..y0 + ph {
            for x in x0..x0 + pw {
                truth[y * width + x] = d;
            }
        }
    }

    let mut left = GrayImage::filled(width, height, 0)?;
    for y in 0..height {
        for x in 0..width {
            let d = truth[y * width + x];
            left.set(x, y, right.get(x.saturating_sub(d), y));
        }
    }
    Ok((left, right, truth))
}

fn box_blur(src: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let r = radius as isize;
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            let mut count = 0usize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + dx, y + dy);
                    if sx >= 0 && sx < width as isize && sy >= 0 && sy < height as isize {
                        acc += src[sy as usize * width + sx as usize];
                        count += 1;
                    }
                }
            }
            out[y as usize * width + x as usize] = acc / count as f64;
        }
    }
    out
}

/// Builds the matching problem: one variable per pixel (row-major), labels
/// are disparity levels, unary cost `min(|L(x,y) - R(x-d,y)|, truncation)`
/// with out-of-frame shifts charged the full truncation, and one directed
/// Potts constraint per grid edge, owned by the lower-indexed pixel.
pub fn stereo_problem(
    left: &GrayImage,
    right: &GrayImage,
    params: &StereoParams,
) -> Result<Problem, HarnessError> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(HarnessError::DimensionMismatch {
            left_width: left.width(),
            left_height: left.height(),
            right_width: right.width(),
            right_height: right.height(),
        });
    }
    let m = params.max_disparity;
    if m == 0 {
        return Err(HarnessError::NoDisparities);
    }
    for (what, value) in [
        ("data truncation", params.data_truncation),
        ("smoothness weight", params.smoothness_weight),
    ] {
        if !value.is_finite() || value < 0.0 {
            return Err(HarnessError::BadWeight { what, value });
        }
    }

    let (w, h) = (left.width(), left.height());
    let domains = vec![(0..m as i64).collect::<Vec<_>>(); w * h];
    let mut unary = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let l = f64::from(left.get(x, y));
            let row: Vec<f64> = (0..m)
                .map(|d| {
                    if d <= x {
                        (l - f64::from(right.get(x - d, y))).abs().min(params.data_truncation)
                    } else {
                        params.data_truncation
                    }
                })
                .collect();
            unary.push(row);
        }
    }

    let mut potts = vec![params.smoothness_weight; m * m];
    for d in 0..m {
        potts[d * m + d] = 0.0;
    }
    let mut pairwise = Vec::with_capacity(2 * w * h - w - h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                pairwise.push(((p, p + 1), potts.clone()));
            }
            if y + 1 < h {
                pairwise.push(((p, p + w), potts.clone()));
            }
        }
    }
    Ok(Problem::new(domains, unary, pairwise)?)
}

/// Renders a disparity field as a grayscale image, scaling the label range
/// onto 0..=255.
pub fn disparity_image(
    disparities: &[usize],
    width: usize,
    height: usize,
    max_disparity: usize,
) -> Result<GrayImage, HarnessError> {
    if max_disparity == 0 {
        return Err(HarnessError::NoDisparities);
    }
    if disparities.len() != width * height {
        return Err(HarnessError::FieldShape {
            got: disparities.len(),
            expected: width * height,
        });
    }
    let pixels = disparities
        .iter()
        .map(|&d| if max_disparity > 1 { (d * 255 / (max_disparity - 1)) as u8 } else { 0 })
        .collect();
    Ok(GrayImage::new(width, height, pixels)?)
}
