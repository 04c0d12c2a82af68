//! Raster containers, PNG/JPEG I/O and the small amount of planar geometry
//! shared by every stage.
//!
//! Continuous coordinates use the pixel-center convention: pixel `(i, j)`
//! covers `[i, i + 1) x [j, j + 1)` and its center sits at `(i + 0.5, j + 0.5)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("unsupported image format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("cannot write {path}: {reason}")]
    WriteFailure { path: PathBuf, reason: String },
    #[error("invalid raster dimensions {width}x{height} for {len} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 || width.checked_mul(height) != Some(len) {
        return Err(RasterError::InvalidDimensions { width, height, len });
    }
    Ok(())
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Copy of the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, rect: Rect) -> GrayImage {
        GrayImage::from_fn(rect.width, rect.height, |x, y| {
            self.get(rect.x + x, rect.y + y)
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-pixel probability in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct ProbMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl fmt::Debug for ProbMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProbMask({}x{})", self.width, self.height)
    }
}

impl ProbMask {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(RasterError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// True exactly where the probability is strictly greater than `t`.
    pub fn threshold(&self, t: f64) -> BinMask {
        BinMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| p > t).collect(),
        }
    }
}

/// Per-pixel boolean mask.
#[derive(Clone, PartialEq, Eq)]
pub struct BinMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl fmt::Debug for BinMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl BinMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked lookup with signed coordinates; outside reads as false.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn crop(&self, rect: Rect) -> BinMask {
        BinMask::from_fn(rect.width, rect.height, |x, y| {
            self.get(rect.x + x, rect.y + y)
        })
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bounding_rect(&self) -> Option<Rect> {
        let mut min_x = usize::MAX;
        let mut min_y = usize::MAX;
        let mut max_x = 0;
        let mut max_y = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        (min_x != usize::MAX).then(|| Rect {
            x: min_x,
            y: min_y,
            width: max_x - min_x + 1,
            height: max_y - min_y + 1,
        })
    }

    /// Mean position of the set pixel centers.
    pub fn centroid(&self) -> Option<Point2> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| Point2::new(sx / n as f64, sy / n as f64))
    }

    /// Square (Chebyshev) dilation by `r` pixels.
    pub fn dilate(&self, r: usize) -> BinMask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = self.dims();
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                rows[y * w + x] = (lo..=hi).any(|xx| self.data[y * w + xx]);
            }
        }
        BinMask::from_fn(w, h, |x, y| {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            (lo..=hi).any(|yy| rows[yy * w + x])
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrimapLabel {
    Foreground,
    Background,
    Unknown,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Trimap {
    width: usize,
    height: usize,
    data: Vec<TrimapLabel>,
}

impl fmt::Debug for Trimap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Trimap({}x{})", self.width, self.height)
    }
}

impl Trimap {
    pub fn new(width: usize, height: usize, data: Vec<TrimapLabel>) -> Result<Self, RasterError> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[TrimapLabel] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> TrimapLabel {
        self.data[y * self.width + x]
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    /// Debug rendering: background 0, unknown 128, foreground 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|l| match l {
                    TrimapLabel::Background => 0,
                    TrimapLabel::Unknown => 128,
                    TrimapLabel::Foreground => 255,
                })
                .collect(),
        }
    }
}

/// Integer pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    pub fn union(&self, other: &Rect) -> Rect {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        Rect {
            x,
            y,
            width: self.right().max(other.right()) - x,
            height: self.bottom().max(other.bottom()) - y,
        }
    }

    /// Grow by `r` on every side, clamped to `[0, width) x [0, height)`.
    pub fn dilate_clamped(&self, r: usize, width: usize, height: usize) -> Rect {
        let x = self.x.saturating_sub(r);
        let y = self.y.saturating_sub(r);
        let right = (self.right() + r).min(width);
        let bottom = (self.bottom() + r).min(height);
        Rect {
            x,
            y,
            width: right - x,
            height: bottom - y,
        }
    }
}

/// Sub-pixel planar point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of pixel `(x, y)`.
    pub fn pixel_center(x: usize, y: usize) -> Self {
        Self::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn midpoint(self, o: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (usize, usize);

/// A fitted straight segment together with the pixels that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSegment {
    pub a: Point2,
    pub b: Point2,
    pub support: Vec<Pixel>,
}

impl LineSegment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self {
            a,
            b,
            support: Vec::new(),
        }
    }

    pub fn with_support(a: Point2, b: Point2, support: Vec<Pixel>) -> Self {
        Self { a, b, support }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn midpoint(&self) -> Point2 {
        self.a.midpoint(self.b)
    }

    pub fn direction(&self) -> Point2 {
        self.b - self.a
    }

    /// Undirected orientation in degrees, `[0, 180)`.
    pub fn angle_deg(&self) -> f64 {
        let d = self.direction();
        undirected_deg(d.y.atan2(d.x).to_degrees())
    }

    /// Supporting line in homogeneous form `(a, b, c)` with `a x + b y + c = 0`.
    pub fn line(&self) -> [f64; 3] {
        homogeneous_line(self.a, self.b)
    }
}

/// Line through two points, homogeneous coordinates.
pub fn homogeneous_line(p: Point2, q: Point2) -> [f64; 3] {
    [p.y - q.y, q.x - p.x, p.x * q.y - q.x * p.y]
}

/// Fold an angle in degrees into `[0, 180)`.
pub fn undirected_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(180.0);
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// Smallest angle between two undirected directions, `[0, 90]` degrees.
pub fn undirected_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// `floor(num / den + 1/2)` for `den > 0`, exact.
fn round_div(num: i128, den: i128) -> i128 {
    (2 * num + den).div_euclid(2 * den)
}

/// 8-connected digital line between the pixels containing `a` and `b`,
/// clipped to `width x height`.
///
/// One pixel per step of the dominant axis, minor coordinate rounded
/// half-up with exact integer arithmetic, so `a -> b` and `b -> a` cover the
/// same set of pixels.
pub fn rasterize_line(a: Point2, b: Point2, width: usize, height: usize) -> Vec<Pixel> {
    if !a.is_finite() || !b.is_finite() {
        return Vec::new();
    }
    let clamp = |v: f64| v.floor().clamp(-1e15, 1e15) as i128;
    let (x0, y0, x1, y1) = (clamp(a.x), clamp(a.y), clamp(b.x), clamp(b.y));
    let (dx, dy) = (x1 - x0, y1 - y0);
    let n = dx.abs().max(dy.abs());
    let (w, h) = (width as i128, height as i128);
    let inside = |x: i128, y: i128| x >= 0 && y >= 0 && x < w && y < h;
    if n == 0 {
        return if inside(x0, y0) {
            vec![(x0 as usize, y0 as usize)]
        } else {
            Vec::new()
        };
    }
    let x_major = dx.abs() >= dy.abs();
    let (major0, major_step, major_len, minor0, minor_delta) = if x_major {
        (x0, dx.signum(), w, y0, dy)
    } else {
        (y0, dy.signum(), h, x0, dx)
    };
    // Restrict t so the major coordinate stays inside [0, major_len).
    let (mut t_lo, mut t_hi) = (0i128, n);
    if major_step > 0 {
        t_lo = t_lo.max(-major0);
        t_hi = t_hi.min(major_len - 1 - major0);
    } else {
        t_lo = t_lo.max(major0 - (major_len - 1));
        t_hi = t_hi.min(major0);
    }
    let mut out = Vec::new();
    let mut t = t_lo;
    while t <= t_hi {
        let major = major0 + major_step * t;
        let minor = minor0 + round_div(minor_delta * t, n);
        let (x, y) = if x_major { (major, minor) } else { (minor, major) };
        if inside(x, y) {
            out.push((x as usize, y as usize));
        }
        t += 1;
    }
    out
}

pub fn rasterize_segment(s: &LineSegment, width: usize, height: usize) -> Vec<Pixel> {
    rasterize_line(s.a, s.b, width, height)
}

/// BT.601 luma of an 8-bit RGB triple, rounded half-up.
pub fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn luma_bt601_16(r: u16, g: u16, b: u16) -> u8 {
    // (299 r + 587 g + 114 b) / 1000 scaled from 16 to 8 bit, rounded half-up.
    let num = (299 * r as u64 + 587 * g as u64 + 114 * b as u64) * 255;
    let den = 1000 * 65535u64;
    ((2 * num + den) / (2 * den)) as u8
}

fn rescale16(v: u16) -> u8 {
    ((2 * v as u32 * 255 + 65535) / (2 * 65535)) as u8
}

/// Quantize an alpha value to a byte, `floor(255 a + 0.5)`.
pub fn alpha_to_byte(a: f64) -> u8 {
    (a.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn to_gray(img: DynamicImage) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<u8> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| rescale16(p.0[0])).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| rescale16(p.0[0])).collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| luma_bt601_16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| luma_bt601_16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma_bt601(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Load a PNG or JPEG file as 8-bit grayscale.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let path = path.as_ref();
    let unreadable = |reason: String| RasterError::UnreadableFile {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => {
            return Err(RasterError::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("{other:?}"),
            })
        }
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => RasterError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => unreadable(other.to_string()),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(unreadable("empty image".into()));
    }
    Ok(to_gray(img))
}

/// Load a probability mask stored as a grayscale image (`value / 255`).
pub fn load_prob_mask(path: impl AsRef<Path>) -> Result<ProbMask, RasterError> {
    Ok(ProbMask::from_gray(&load_image(path)?))
}

fn write_failure(path: &Path, e: impl fmt::Display) -> RasterError {
    RasterError::WriteFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn save_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| write_failure(path, e))
}

/// Gray + alpha PNG; `alpha` holds one value in `[0, 1]` per pixel.
pub fn save_gray_alpha_png(
    img: &GrayImage,
    alpha: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), RasterError> {
    let path = path.as_ref();
    if alpha.len() != img.data.len() {
        return Err(RasterError::InvalidDimensions {
            width: img.width,
            height: img.height,
            len: alpha.len(),
        });
    }
    let mut buf = Vec::with_capacity(img.data.len() * 2);
    for (&v, &a) in img.data.iter().zip(alpha) {
        buf.push(v);
        buf.push(alpha_to_byte(a));
    }
    image::save_buffer_with_format(
        path,
        &buf,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::La8,
        ImageFormat::Png,
    )
    .map_err(|e| write_failure(path, e))
}

/// RGBA PNG from interleaved bytes.
pub fn save_rgba_png(
    width: usize,
    height: usize,
    rgba: &[u8],
    path: impl AsRef<Path>,
) -> Result<(), RasterError> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        rgba,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgba8,
        ImageFormat::Png,
    )
    .map_err(|e| write_failure(path, e))
}

/// Encode an RGBA buffer as PNG bytes in memory.
pub fn encode_rgba_png(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>, RasterError> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        rgba,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgba8,
        ImageFormat::Png,
    )
    .map_err(|e| write_failure(Path::new("<memory>"), e))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn dilate_square() {
        let mut m = BinMask::filled(7, 7, false);
        m.set(3, 3, true);
        let d = m.dilate(2);
        assert_eq!(d.count(), 25);
        assert!(d.get(1, 5) && !d.get(0, 3));
        assert_eq!(m.dilate(0), m);
    }

    #[test]
    fn white_png_loads_as_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        save_gray_png(&GrayImage::filled(2, 2, 255), &path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[255, 255, 255, 255]);
    }

    #[test]
    fn red_pixel_luma_golden() {
        // 0.299 * 255 = 76.245 -> 76 with round-half-up.
        assert_eq!(luma_bt601(255, 0, 0), 76);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::save_buffer(&path, &[255, 0, 0], 1, 1, image::ExtendedColorType::Rgb8).unwrap();
        assert_eq!(load_image(&path).unwrap().data(), &[76]);
    }

    #[test]
    fn sixteen_bit_is_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        let raw: Vec<u8> = [0u16, 65535, 32896, 257]
            .iter()
            .flat_map(|v| v.to_ne_bytes())
            .collect();
        image::save_buffer(&path, &raw, 2, 2, image::ExtendedColorType::L16).unwrap();
        assert_eq!(load_image(&path).unwrap().data(), &[0, 255, 128, 1]);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, RasterError::UnreadableFile { .. }));
    }

    #[test]
    fn non_image_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.gif");
        std::fs::write(&path, b"GIF89a\x01\x00\x01\x00\x00\x00\x00;").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, RasterError::UnsupportedFormat { .. }), "{err}");
    }

    #[test]
    fn rasterize_examples() {
        let seg = |ax, ay, bx, by| LineSegment::new(Point2::new(ax, ay), Point2::new(bx, by));
        assert_eq!(
            rasterize_segment(&seg(0.0, 0.0, 3.0, 0.0), 10, 10),
            vec![(0, 0), (1, 0), (2, 0), (3, 0)]
        );
        assert_eq!(
            rasterize_segment(&seg(0.0, 0.0, 2.0, 2.0), 10, 10),
            vec![(0, 0), (1, 1), (2, 2)]
        );
        // max(dx, dy) + 1
        assert_eq!(rasterize_segment(&seg(0.0, 0.0, 5.0, 2.0), 10, 10).len(), 6);
        assert!(rasterize_segment(&seg(-50.0, -5.0, -10.0, -3.0), 10, 10).is_empty());
    }

    #[test]
    fn rasterize_clips_to_bounds() {
        let s = LineSegment::new(Point2::new(-1e9, 4.5), Point2::new(1e9, 4.5));
        let px = rasterize_segment(&s, 8, 8);
        assert_eq!(px.len(), 8);
        assert!(px.iter().all(|&(x, y)| x < 8 && y == 4));
    }

    #[test]
    fn gray_png_roundtrip_is_bit_exact() {
        let img = GrayImage::from_fn(13, 7, |x, y| ((x * 37 + y * 91) % 256) as u8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        save_gray_png(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn alpha_byte_rounds_half_up() {
        assert_eq!(alpha_to_byte(0.5), 128);
        assert_eq!(alpha_to_byte(0.0), 0);
        assert_eq!(alpha_to_byte(1.0), 255);
    }

    #[test]
    fn rect_dilate_clamps() {
        let r = Rect::new(375, 275, 50, 50).dilate_clamped(100, 800, 600);
        assert_eq!(r, Rect::new(275, 175, 250, 250));
        let r = Rect::new(5, 5, 10, 10).dilate_clamped(100, 50, 40);
        assert_eq!(r, Rect::new(0, 0, 50, 40));
    }

    #[test]
    fn prob_mask_rejects_out_of_range() {
        assert!(ProbMask::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn rasterize_is_reversal_symmetric(
            ax in -5.0f64..45.0, ay in -5.0f64..45.0,
            bx in -5.0f64..45.0, by in -5.0f64..45.0,
        ) {
            let a = Point2::new(ax, ay);
            let b = Point2::new(bx, by);
            let fwd: BTreeSet<_> = rasterize_line(a, b, 40, 40).into_iter().collect();
            let rev: BTreeSet<_> = rasterize_line(b, a, 40, 40).into_iter().collect();
            prop_assert_eq!(fwd, rev);
        }

        #[test]
        fn rasterize_is_eight_connected(
            ax in 0.0f64..30.0, ay in 0.0f64..30.0,
            bx in 0.0f64..30.0, by in 0.0f64..30.0,
        ) {
            let px = rasterize_line(Point2::new(ax, ay), Point2::new(bx, by), 30, 30);
            let expected = (bx.floor() - ax.floor()).abs().max((by.floor() - ay.floor()).abs()) as usize + 1;
            prop_assert_eq!(px.len(), expected);
            for w in px.windows(2) {
                let dx = w[0].0.abs_diff(w[1].0);
                let dy = w[0].1.abs_diff(w[1].1);
                prop_assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
            }
        }

        #[test]
        fn threshold_matches_strict_inequality(
            vals in proptest::collection::vec(0.0f64..=1.0, 12),
            t in 0.0f64..1.0,
        ) {
            let m = ProbMask::new(4, 3, vals.clone()).unwrap().threshold(t);
            for (i, v) in vals.iter().enumerate() {
                prop_assert_eq!(m.data()[i], *v > t);
            }
        }
    }
}
