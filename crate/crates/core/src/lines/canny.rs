//! Canny edge detection with median-derived hysteresis thresholds.

use serde::{Deserialize, Serialize};

use super::LineError;
use crate::raster::{BinMask, GrayImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyConfig {
    /// Threshold tightness around the median, in `(0, 1)`.
    pub lambda: f64,
    /// Sobel aperture, 3 or 5.
    pub aperture: usize,
    /// Optional Gaussian pre-blur; 0 disables it.
    pub blur_sigma: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.33,
            aperture: 3,
            blur_sigma: 0.0,
        }
    }
}

impl CannyConfig {
    pub fn validate(&self) -> Result<(), LineError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(LineError::InvalidConfig("lambda must lie in (0, 1)".into()));
        }
        if self.aperture != 3 && self.aperture != 5 {
            return Err(LineError::InvalidConfig("aperture must be 3 or 5".into()));
        }
        if !(self.blur_sigma >= 0.0) {
            return Err(LineError::InvalidConfig("blur_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Median intensity (mean of the two middle values for even pixel counts).
pub fn median_intensity(image: &GrayImage) -> f64 {
    let mut hist = [0usize; 256];
    for &v in image.data() {
        hist[v as usize] += 1;
    }
    let n = image.data().len();
    let nth = |k: usize| {
        let mut acc = 0;
        for (v, &c) in hist.iter().enumerate() {
            acc += c;
            if acc > k {
                return v as f64;
            }
        }
        255.0
    };
    if n % 2 == 1 {
        nth(n / 2)
    } else {
        0.5 * (nth(n / 2 - 1) + nth(n / 2))
    }
}

/// Hysteresis thresholds `l = max(0, m(1 - lambda))`, `u = min(255, m(1 + lambda))`.
pub fn thresholds_from_median(median: f64, lambda: f64) -> (f64, f64) {
    let l = (median * (1.0 - lambda)).max(0.0);
    let u = (median * (1.0 + lambda)).min(255.0);
    (l, u)
}

pub fn canny_thresholds(image: &GrayImage, lambda: f64) -> (f64, f64) {
    thresholds_from_median(median_intensity(image), lambda)
}

fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    separable(src, w, h, &kernel, &kernel)
}

/// Row pass with `kx`, column pass with `ky`, replicate borders.
fn separable(src: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, c) in kx.iter().enumerate() {
                s += c * src[y * w + clamp(x as isize + k as isize - rx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, c) in ky.iter().enumerate() {
                s += c * tmp[clamp(y as isize + k as isize - ry, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Sobel gradients `(gx, gy)`.
pub fn sobel(image: &GrayImage, aperture: usize) -> (Vec<f64>, Vec<f64>) {
    let src: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    sobel_f64(&src, image.width(), image.height(), aperture)
}

fn sobel_f64(src: &[f64], w: usize, h: usize, aperture: usize) -> (Vec<f64>, Vec<f64>) {
    let (smooth, diff): (&[f64], &[f64]) = if aperture == 5 {
        (&[1.0, 4.0, 6.0, 4.0, 1.0], &[-1.0, -2.0, 0.0, 2.0, 1.0])
    } else {
        (&[1.0, 2.0, 1.0], &[-1.0, 0.0, 1.0])
    };
    let gx = separable(src, w, h, diff, smooth);
    let gy = separable(src, w, h, smooth, diff);
    (gx, gy)
}

pub fn detect_edges(image: &GrayImage, cfg: &CannyConfig) -> Result<BinMask, LineError> {
    cfg.validate()?;
    let (l, u) = canny_thresholds(image, cfg.lambda);
    Ok(detect_edges_with_thresholds(image, cfg, l, u))
}

/// Sobel gradients, 4-direction non-maximum suppression, and hysteresis
/// linking over 8-neighbourhoods. A pixel is strong when its magnitude
/// exceeds `high` and a candidate when it exceeds `low`.
pub fn detect_edges_with_thresholds(
    image: &GrayImage,
    cfg: &CannyConfig,
    low: f64,
    high: f64,
) -> BinMask {
    let (w, h) = image.dims();
    let mut src: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    if cfg.blur_sigma > 0.0 {
        src = gaussian_blur(&src, w, h, cfg.blur_sigma);
    }
    let (gx, gy) = sobel_f64(&src, w, h, cfg.aperture);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();

    // 0: candidate, 1: strong, 2: suppressed
    let mut state = vec![2u8; w * h];
    if w < 3 || h < 3 {
        return BinMask::filled(w, h, false);
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m <= low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let fwd = mag[((y as isize + dy) as usize) * w + (x as isize + dx) as usize];
            let back = mag[((y as isize - dy) as usize) * w + (x as isize - dx) as usize];
            // Ties keep the pixel on the negative side only, so a plateau of
            // two equal maxima yields a single-pixel ridge.
            if m > back && m >= fwd {
                state[i] = if m > high { 1 } else { 0 };
            }
        }
    }

    let mut edges = BinMask::filled(w, h, false);
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| state[i] == 1).collect();
    for &i in &stack {
        edges.set(i % w, i / w, true);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if state[j] == 0 && !edges.get(nx as usize, ny as usize) {
                    edges.set(nx as usize, ny as usize, true);
                    stack.push(j);
                }
            }
        }
    }
    edges
}
