//! Straight-segment extraction: Canny edges, contour tracing, local
//! linearity labelling and RANSAC fitting.

mod canny;
mod contour;
mod fit;
mod linearity;

pub use canny::{
    canny_thresholds, detect_edges, detect_edges_with_thresholds, median_intensity, sobel,
    thresholds_from_median, CannyConfig,
};
pub use contour::{trace_contours, Contour};
pub use fit::{fit_line_tls, fit_run, fit_segments, linear_runs, RansacConfig};
pub use linearity::{
    contour_angles, label_linearity, left_second_derivative, on_curve_sweep, point_angle,
    right_second_derivative, second_derivatives, LinearityConfig,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{encode_rgba_png, rasterize_segment, BinMask, GrayImage, LineSegment, RasterError};

#[derive(Debug, Error)]
pub enum LineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("contour of {len} points is shorter than the required {required}")]
    ContourTooShort { len: usize, required: usize },
    #[error("point {index} lacks {window} neighbours on one side (contour length {len})")]
    OutOfWindow {
        index: usize,
        window: usize,
        len: usize,
    },
    #[error("dimension mismatch: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },
}

/// Everything needed to go from an image to fitted segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineDetectConfig {
    pub canny: CannyConfig,
    pub linearity: LinearityConfig,
    pub ransac: RansacConfig,
}

impl LineDetectConfig {
    /// Default Canny and RANSAC settings, `min_points = k_s`.
    pub fn with_linearity(linearity: LinearityConfig) -> Self {
        Self {
            canny: CannyConfig::default(),
            linearity,
            ransac: RansacConfig {
                min_points: linearity.window,
                ..RansacConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), LineError> {
        self.canny.validate()?;
        self.linearity.validate()?;
        self.ransac.validate()
    }
}

impl Default for LineDetectConfig {
    fn default() -> Self {
        Self::with_linearity(LinearityConfig::VOTING)
    }
}

/// Segments from the edge contours of `image`, optionally keeping only edge
/// pixels inside `region`. Contours shorter than `2 k_s` are skipped.
///
/// Contour `i` uses the RANSAC seed derived from `(cfg.ransac.seed, i)`, so
/// the output does not depend on scheduling.
pub fn detect_segments(
    image: &GrayImage,
    region: Option<&BinMask>,
    cfg: &LineDetectConfig,
) -> Result<Vec<LineSegment>, LineError> {
    cfg.validate()?;
    let mut edges = detect_edges(image, &cfg.canny)?;
    if let Some(region) = region {
        if region.dims() != image.dims() {
            return Err(LineError::DimensionMismatch {
                image: image.dims(),
                mask: region.dims(),
            });
        }
        edges = BinMask::from_fn(image.width(), image.height(), |x, y| {
            edges.get(x, y) && region.get(x, y)
        });
    }
    segments_from_edges(&edges, cfg)
}

pub fn segments_from_edges(
    edges: &BinMask,
    cfg: &LineDetectConfig,
) -> Result<Vec<LineSegment>, LineError> {
    cfg.validate()?;
    let contours = trace_contours(edges);
    let per_contour: Vec<Vec<LineSegment>> = contours
        .par_iter()
        .enumerate()
        .map(|(i, c)| match label_linearity(c, &cfg.linearity) {
            Ok(labels) => fit_segments(c, &labels, &cfg.ransac.derive(i as u64)),
            Err(_) => Vec::new(),
        })
        .collect();
    Ok(per_contour.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentRecord {
    a: [f64; 2],
    b: [f64; 2],
    support_count: usize,
}

/// Debug dump: JSON array of `{a, b, support_count}`.
pub fn segments_json(segments: &[LineSegment]) -> String {
    let records: Vec<SegmentRecord> = segments
        .iter()
        .map(|s| SegmentRecord {
            a: [s.a.x, s.a.y],
            b: [s.b.x, s.b.y],
            support_count: s.support.len(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("segments serialize")
}

/// Segments drawn in red over a dimmed copy of `image`, PNG-encoded.
pub fn render_overlay(image: &GrayImage, segments: &[LineSegment]) -> Result<Vec<u8>, RasterError> {
    let (w, h) = image.dims();
    let mut rgba = Vec::with_capacity(w * h * 4);
    for &v in image.data() {
        let d = v / 2;
        rgba.extend_from_slice(&[d, d, d, 255]);
    }
    for s in segments {
        for (x, y) in rasterize_segment(s, w, h) {
            let i = 4 * (y * w + x);
            rgba[i..i + 4].copy_from_slice(&[255, 32, 32, 255]);
        }
    }
    encode_rgba_png(w, h, &rgba)
}
