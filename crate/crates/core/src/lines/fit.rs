//! RANSAC line fitting over locally-linear runs of a contour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Contour, LineError};
use crate::raster::{LineSegment, Pixel, Point2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub seed: u64,
    /// Maximum point-to-line distance of an inlier, pixels.
    pub inlier_distance: f64,
    pub iterations: usize,
    /// Runs with fewer points are dropped.
    pub min_points: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            inlier_distance: 1.5,
            iterations: 64,
            min_points: 8,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), LineError> {
        if self.iterations < 1 {
            return Err(LineError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.inlier_distance > 0.0) {
            return Err(LineError::InvalidConfig(
                "inlier_distance must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Same parameters with the seed mixed with `index`.
    pub fn derive(&self, index: u64) -> RansacConfig {
        RansacConfig {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x9e37_79b9))),
            ..*self
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Total least squares line through `pts`: returns `(centroid, unit direction)`.
pub fn fit_line_tls(pts: &[Point2]) -> Option<(Point2, Point2)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point2::default(), |acc, &p| acc + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy == 0.0 {
        return None;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Point2::new(theta.cos(), theta.sin())))
}

fn line_distance(p: Point2, origin: Point2, dir: Point2) -> f64 {
    (p - origin).cross(dir).abs()
}

/// Fit one segment to a run of pixels. `None` when the run is too short or
/// degenerate.
pub fn fit_run(run: &[Pixel], cfg: &RansacConfig) -> Option<LineSegment> {
    if run.len() < cfg.min_points.max(2) {
        return None;
    }
    let pts: Vec<Point2> = run.iter().map(|&(x, y)| Point2::pixel_center(x, y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = pts.len();

    let mut best: Option<(usize, Point2, Point2)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let d = pts[j] - pts[i];
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        let dir = d * (1.0 / len);
        let count = pts
            .iter()
            .filter(|&&p| line_distance(p, pts[i], dir) <= cfg.inlier_distance)
            .count();
        if best.is_none_or(|(c, _, _)| count > c) {
            best = Some((count, pts[i], dir));
        }
    }
    let (_, origin, dir) = best?;
    let inlier_idx: Vec<usize> = (0..n)
        .filter(|&k| line_distance(pts[k], origin, dir) <= cfg.inlier_distance)
        .collect();
    let inliers: Vec<Point2> = inlier_idx.iter().map(|&k| pts[k]).collect();
    let (c, mut u) = fit_line_tls(&inliers)?;
    // Orient along the run so endpoints follow contour order.
    if (pts[n - 1] - pts[0]).dot(u) < 0.0 {
        u = -u;
    }
    let (lo, hi) = inliers.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        let t = (p - c).dot(u);
        (lo.min(t), hi.max(t))
    });
    if hi - lo <= 0.0 {
        return None;
    }
    let support = inlier_idx.iter().map(|&k| run[k]).collect();
    Some(LineSegment::with_support(c + u * lo, c + u * hi, support))
}

/// Maximal runs of consecutive `true` labels.
pub fn linear_runs(c: &Contour, labels: &[bool]) -> Vec<Vec<Pixel>> {
    let mut runs = Vec::new();
    let mut cur = Vec::new();
    for (&p, &linear) in c.points.iter().zip(labels) {
        if linear {
            cur.push(p);
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Split `c` at non-linear points and fit one segment per long-enough run.
/// Run `r` uses the seed derived from `(cfg.seed, r)`.
pub fn fit_segments(c: &Contour, labels: &[bool], cfg: &RansacConfig) -> Vec<LineSegment> {
    assert_eq!(labels.len(), c.len(), "one label per contour point");
    linear_runs(c, labels)
        .iter()
        .enumerate()
        .filter_map(|(r, run)| fit_run(run, &cfg.derive(r as u64)))
        .collect()
}
