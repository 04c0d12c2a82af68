//! Per-point tangent angles, one-sided second derivatives and the local
//! linearity labelling of contour points.

use serde::{Deserialize, Serialize};

use super::{Contour, LineError};
use crate::raster::{undirected_deg, undirected_diff_deg};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityConfig {
    /// Window size `k_s` of the discrete derivatives, in points.
    pub window: usize,
    /// Linearity threshold `t_alpha`, degrees.
    pub threshold_deg: f64,
    /// Span of the tangent finite difference; `None` uses `window`.
    #[serde(default)]
    pub tangent_window: Option<usize>,
}

impl LinearityConfig {
    /// Strict setting used to form vanishing-point candidates.
    pub const ACCUMULATION: LinearityConfig = LinearityConfig {
        window: 16,
        threshold_deg: 4.0,
        tangent_window: None,
    };

    /// Relaxed setting used for voting.
    pub const VOTING: LinearityConfig = LinearityConfig {
        window: 8,
        threshold_deg: 9.0,
        tangent_window: None,
    };

    pub fn tangent(&self) -> usize {
        self.tangent_window.unwrap_or(self.window)
    }

    pub fn validate(&self) -> Result<(), LineError> {
        if self.window < 1 || self.tangent_window == Some(0) {
            return Err(LineError::InvalidConfig("windows must be >= 1".into()));
        }
        if !(self.threshold_deg > 0.0 && self.threshold_deg < 90.0) {
            return Err(LineError::InvalidConfig(
                "threshold_deg must lie in (0, 90)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LinearityConfig {
    fn default() -> Self {
        Self::VOTING
    }
}

/// Undirected tangent angle at point `p`, degrees in `[0, 180)`.
///
/// The tangent is the finite difference across `window` steps around `p`,
/// from `p - ceil(window / 2)` to `p + floor(window / 2)`, truncated at the
/// contour ends.
pub fn point_angle(c: &Contour, p: usize, window: usize) -> f64 {
    let n = c.points.len();
    assert!(p < n, "point index out of range");
    let back = window.div_ceil(2);
    let fwd = window / 2;
    let i0 = p.saturating_sub(back);
    let i1 = (p + fwd).min(n - 1);
    let (a, b) = (c.points[i0], c.points[i1]);
    let dx = b.0 as f64 - a.0 as f64;
    let dy = b.1 as f64 - a.1 as f64;
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    undirected_deg(dy.atan2(dx).to_degrees())
}

pub fn contour_angles(c: &Contour, window: usize) -> Vec<f64> {
    (0..c.points.len())
        .map(|p| point_angle(c, p, window))
        .collect()
}

fn left_from(angles: &[f64], p: usize, k: usize) -> Result<f64, LineError> {
    if p < k {
        return Err(LineError::OutOfWindow {
            index: p,
            window: k,
            len: angles.len(),
        });
    }
    let s: f64 = (1..=k)
        .map(|d| undirected_diff_deg(angles[p], angles[p - d]))
        .sum();
    Ok(s / k as f64)
}

fn right_from(angles: &[f64], p: usize, k: usize) -> Result<f64, LineError> {
    if p + k >= angles.len() {
        return Err(LineError::OutOfWindow {
            index: p,
            window: k,
            len: angles.len(),
        });
    }
    let s: f64 = (1..=k)
        .map(|d| undirected_diff_deg(angles[p], angles[p + d]))
        .sum();
    Ok(s / k as f64)
}

/// Left-hand second derivative `L_alpha(C, p)`.
pub fn left_second_derivative(
    c: &Contour,
    p: usize,
    cfg: &LinearityConfig,
) -> Result<f64, LineError> {
    left_from(&contour_angles(c, cfg.tangent()), p, cfg.window)
}

/// Right-hand second derivative `R_alpha(C, p)`.
pub fn right_second_derivative(
    c: &Contour,
    p: usize,
    cfg: &LinearityConfig,
) -> Result<f64, LineError> {
    right_from(&contour_angles(c, cfg.tangent()), p, cfg.window)
}

/// `(L_alpha, R_alpha)` at `p`; fails unless both sides hold `k_s` points.
pub fn second_derivatives(
    c: &Contour,
    p: usize,
    cfg: &LinearityConfig,
) -> Result<(f64, f64), LineError> {
    let angles = contour_angles(c, cfg.tangent());
    Ok((
        left_from(&angles, p, cfg.window)?,
        right_from(&angles, p, cfg.window)?,
    ))
}

/// One directional sweep of the local-linearity procedure. Returns the
/// per-point on-curve flags.
///
/// * prefix `[0, k)`, walking toward the start: on-curve becomes sticky once
///   `R_alpha >= t`;
/// * interior `[k, n - k)`: start on-curve, leave when `R_alpha < t`, re-enter
///   when `L_alpha >= t`;
/// * suffix `[n - k, n)`, walking toward the end: sticky once `L_alpha >= t`.
pub fn on_curve_sweep(c: &Contour, cfg: &LinearityConfig) -> Result<Vec<bool>, LineError> {
    cfg.validate()?;
    let n = c.points.len();
    let k = cfg.window;
    if n < 2 * k || n < 2 {
        return Err(LineError::ContourTooShort {
            len: n,
            required: (2 * k).max(2),
        });
    }
    let t = cfg.threshold_deg;
    let angles = contour_angles(c, cfg.tangent());
    let mut on_curve = vec![false; n];

    let mut flag = false;
    for i in (0..k).rev() {
        flag = flag || right_from(&angles, i, k)? >= t;
        on_curve[i] = flag;
    }

    let mut flag = true;
    for (i, slot) in on_curve.iter_mut().enumerate().take(n - k).skip(k) {
        if flag && right_from(&angles, i, k)? < t {
            flag = false;
        }
        if !flag && left_from(&angles, i, k)? >= t {
            flag = true;
        }
        *slot = flag;
    }

    let mut flag = false;
    for (i, slot) in on_curve.iter_mut().enumerate().skip(n - k) {
        flag = flag || left_from(&angles, i, k)? >= t;
        *slot = flag;
    }
    Ok(on_curve)
}

/// Per-point "linear" labels.
///
/// The interior hysteresis of a single sweep only looks ahead when leaving a
/// curve and only looks back when entering one, so it marks one side of a
/// corner. Running the sweep in both directions and taking the union marks
/// both sides and makes the result independent of contour orientation.
pub fn label_linearity(c: &Contour, cfg: &LinearityConfig) -> Result<Vec<bool>, LineError> {
    let forward = on_curve_sweep(c, cfg)?;
    let mut backward = on_curve_sweep(&c.reversed(), cfg)?;
    backward.reverse();
    Ok(forward
        .iter()
        .zip(&backward)
        .map(|(f, b)| !(f | b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Pixel;

    fn polyline(vertices: &[(i64, i64)]) -> Contour {
        let mut pts: Vec<Pixel> = Vec::new();
        for w in vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = (b.0 - a.0).abs().max((b.1 - a.1).abs());
            for t in 0..n {
                let x = a.0 + (b.0 - a.0) * t / n;
                let y = a.1 + (b.1 - a.1) * t / n;
                pts.push((x as usize, y as usize));
            }
        }
        let last = vertices.last().unwrap();
        pts.push((last.0 as usize, last.1 as usize));
        Contour::new(pts, false)
    }

    fn circle(cx: f64, cy: f64, r: f64) -> Contour {
        // Ordered 8-connected circle by walking angle finely and deduplicating.
        let mut pts: Vec<Pixel> = Vec::new();
        let steps = (r * 64.0) as usize;
        for s in 0..steps {
            let th = std::f64::consts::TAU * s as f64 / steps as f64;
            let p = (
                (cx + r * th.cos()).round() as usize,
                (cy + r * th.sin()).round() as usize,
            );
            if pts.last() != Some(&p) && pts.first() != Some(&p) {
                pts.push(p);
            }
        }
        Contour::new(pts, true)
    }

    #[test]
    fn straight_angles() {
        let h = polyline(&[(0, 5), (30, 5)]);
        for p in 0..h.len() {
            assert_eq!(point_angle(&h, p, 8), 0.0);
        }
        let d = polyline(&[(0, 0), (20, 20)]);
        for p in 0..d.len() {
            assert!((point_angle(&d, p, 8) - 45.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quarter_circle_tangent() {
        // The arc point at 45 degrees has an analytic tangent of 135 degrees.
        let (cx, cy, r) = (100.0, 100.0, 60.0);
        let c = circle(cx, cy, r);
        let target = (cx + r * 0.5f64.sqrt(), cy + r * 0.5f64.sqrt());
        let d2 = |p: &Pixel| (p.0 as f64 - target.0).powi(2) + (p.1 as f64 - target.1).powi(2);
        let mid = (0..c.len())
            .min_by(|&a, &b| d2(&c.points[a]).total_cmp(&d2(&c.points[b])))
            .unwrap();
        let est = point_angle(&c, mid, 8);
        assert!(undirected_diff_deg(est, 135.0) < 3.0, "est {est}");
    }

    #[test]
    fn straight_contour_has_zero_derivatives() {
        let c = polyline(&[(0, 3), (40, 3)]);
        let cfg = LinearityConfig::VOTING;
        for p in 8..c.len() - 8 {
            assert_eq!(second_derivatives(&c, p, &cfg).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn right_angle_corner_k1() {
        // down the column then along the row; corner at index 10
        let c = polyline(&[(0, 0), (0, 10), (10, 10)]);
        let cfg = LinearityConfig {
            window: 1,
            threshold_deg: 4.0,
            tangent_window: None,
        };
        let r = right_second_derivative(&c, 10, &cfg).unwrap();
        assert!((r - 90.0).abs() < 1e-9);
    }

    #[test]
    fn digitized_bend_left_derivative() {
        // 60-point run along x then a 30 degree bend.
        let run = 60i64;
        let bend_len = 80.0;
        let th = 30f64.to_radians();
        let end = (
            run + (bend_len * th.cos()).round() as i64,
            10 + (bend_len * th.sin()).round() as i64,
        );
        let c = polyline(&[(0, 10), (run, 10), end]);
        let k = 24;
        let peak = |tangent_window| {
            let cfg = LinearityConfig {
                window: k,
                threshold_deg: 4.0,
                tangent_window,
            };
            (k..c.len())
                .map(|p| left_second_derivative(&c, p, &cfg).unwrap())
                .fold(0.0, f64::max)
        };
        // A tangent short relative to k_s resolves the full bend.
        let sharp = peak(Some(6));
        assert!((sharp - 30.0).abs() < 5.0, "L = {sharp}");
        // With the tangent spanning k_s, the chord smears the bend over
        // k_s points and the left window straddles the ramp.
        let smooth = peak(None);
        assert!(smooth > 10.0 && smooth < 25.0, "L = {smooth}");
    }

    #[test]
    fn out_of_window() {
        let c = polyline(&[(0, 0), (10, 0)]);
        let cfg = LinearityConfig::VOTING;
        assert!(matches!(
            left_second_derivative(&c, 3, &cfg),
            Err(LineError::OutOfWindow { .. })
        ));
        assert!(matches!(
            right_second_derivative(&c, 5, &cfg),
            Err(LineError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn straight_contour_all_linear() {
        let c = polyline(&[(0, 7), (99, 7)]);
        assert_eq!(c.len(), 100);
        let labels = label_linearity(&c, &LinearityConfig::ACCUMULATION).unwrap();
        assert!(labels.iter().all(|&l| l));
    }

    #[test]
    fn too_short_contour() {
        let c = polyline(&[(0, 0), (10, 0)]);
        assert!(matches!(
            label_linearity(&c, &LinearityConfig::ACCUMULATION),
            Err(LineError::ContourTooShort { .. })
        ));
    }

    #[test]
    fn l_shape_marks_only_the_corner() {
        // 20 points down, 20 points across: corner at index 20.
        let c = polyline(&[(0, 0), (0, 20), (19, 20)]);
        assert_eq!(c.len(), 40);
        let cfg = LinearityConfig {
            window: 4,
            threshold_deg: 9.0,
            tangent_window: None,
        };
        let labels = label_linearity(&c, &cfg).unwrap();
        let corner = 20usize;
        let mut non_linear = 0;
        for (i, &l) in labels.iter().enumerate() {
            if !l {
                non_linear += 1;
                assert!(i.abs_diff(corner) <= cfg.window, "index {i} flagged");
            }
        }
        assert!(non_linear > 0);
        assert!(!labels[corner]);
        // Hand trace of a single forward sweep: R looks ahead, L looks back.
        let fwd = on_curve_sweep(&c, &cfg).unwrap();
        let flagged: Vec<usize> = (0..40).filter(|&i| fwd[i]).collect();
        assert_eq!(flagged, (19..=24).collect::<Vec<_>>());
    }

    #[test]
    fn circle_is_non_linear() {
        let c = circle(120.0, 120.0, 40.0);
        let cfg = LinearityConfig {
            window: 16,
            threshold_deg: 4.0,
            tangent_window: None,
        };
        // Turn per step ~ 360 / len degrees; t_alpha sits below turn * k / 2.
        let turn = 360.0 / c.len() as f64;
        assert!(cfg.threshold_deg < turn * cfg.window as f64 / 2.0);
        let labels = label_linearity(&c, &cfg).unwrap();
        assert!(labels.iter().all(|&l| !l));
    }

    #[test]
    fn labels_are_reversal_invariant() {
        let c = polyline(&[(0, 0), (0, 30), (25, 42), (60, 42), (60, 10)]);
        let cfg = LinearityConfig::VOTING;
        let fwd = label_linearity(&c, &cfg).unwrap();
        let mut rev = label_linearity(&c.reversed(), &cfg).unwrap();
        rev.reverse();
        assert_eq!(fwd, rev);
    }

    proptest::proptest! {
        #[test]
        fn reversal_invariance_random_polylines(
            steps in proptest::collection::vec((-25i64..25, -25i64..25), 2..6),
            k in 1usize..12,
            t in 1.0f64..30.0,
        ) {
            let mut v = vec![(200i64, 200i64)];
            for (dx, dy) in steps {
                let last = *v.last().unwrap();
                if dx != 0 || dy != 0 {
                    v.push((last.0 + dx, last.1 + dy));
                }
            }
            proptest::prop_assume!(v.len() >= 2);
            let c = polyline(&v);
            let cfg = LinearityConfig { window: k, threshold_deg: t, tangent_window: None };
            proptest::prop_assume!(c.len() >= 2 * k && c.is_connected());
            let fwd = label_linearity(&c, &cfg).unwrap();
            let mut rev = label_linearity(&c.reversed(), &cfg).unwrap();
            rev.reverse();
            proptest::prop_assert_eq!(fwd, rev);
        }
    }
}
