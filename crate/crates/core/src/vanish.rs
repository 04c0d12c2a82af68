//! Vanishing-point candidates, segment voting and selection of the two
//! facade directions.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lines::{detect_segments, LineDetectConfig, LineError, LinearityConfig};
use crate::raster::{
    rasterize_segment, undirected_deg, undirected_diff_deg, BinMask, GrayImage, LineSegment,
    Point2,
};

#[derive(Debug, Error)]
pub enum VanishError {
    #[error("need at least 2 segments, got {count}")]
    InsufficientSegments { count: usize },
    #[error("segment has zero length")]
    DegenerateSegment,
    #[error("vanishing point coincides with the segment midpoint")]
    MidpointAtVP,
    #[error("no segment has support inside the mask")]
    NoEvidence,
    #[error("no candidate is offset at least {t_o} degrees from the best one")]
    NoOrthogonalPair { t_o: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error(transparent)]
    Lines(#[from] LineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VanishingPoint {
    Finite { x: f64, y: f64 },
    Infinite { direction_deg: f64 },
}

impl VanishingPoint {
    pub fn finite(p: Point2) -> Self {
        VanishingPoint::Finite { x: p.x, y: p.y }
    }

    pub fn infinite(direction_deg: f64) -> Self {
        VanishingPoint::Infinite {
            direction_deg: undirected_deg(direction_deg),
        }
    }

    pub fn position(&self) -> Option<Point2> {
        match *self {
            VanishingPoint::Finite { x, y } => Some(Point2::new(x, y)),
            VanishingPoint::Infinite { .. } => None,
        }
    }

    /// Undirected direction, degrees in `[0, 180)`, of the pencil line
    /// through `p`.
    pub fn direction_from(&self, p: Point2) -> f64 {
        match *self {
            VanishingPoint::Finite { x, y } => undirected_deg((y - p.y).atan2(x - p.x).to_degrees()),
            VanishingPoint::Infinite { direction_deg } => direction_deg,
        }
    }

    /// Homogeneous coordinates; infinite points have `w = 0`.
    pub fn homogeneous(&self) -> [f64; 3] {
        match *self {
            VanishingPoint::Finite { x, y } => [x, y, 1.0],
            VanishingPoint::Infinite { direction_deg } => {
                let t = direction_deg.to_radians();
                [t.cos(), t.sin(), 0.0]
            }
        }
    }

    /// Deterministic tie-break order: finite points by position, then
    /// infinite points by direction.
    fn order_key(&self) -> (u8, f64, f64) {
        match *self {
            VanishingPoint::Finite { x, y } => (0, x, y),
            VanishingPoint::Infinite { direction_deg } => (1, direction_deg, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredVP {
    pub vp: VanishingPoint,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    /// Alignment threshold `t_a`, degrees.
    pub t_a: f64,
    /// Minimum offset between the chosen pair, degrees.
    pub t_o: f64,
    /// Angular bin for candidate and segment deduplication, degrees.
    pub quant_angle: f64,
    /// Inverse-distance bin for finite candidates, 1/pixels. `None` derives
    /// it from `quant_angle` and the extent of the segments.
    pub quant_pos: Option<f64>,
    /// Largest perpendicular offset between segments merged as collinear.
    pub collinear_offset_px: f64,
    /// Collapse candidates that fall in the same quantization bin.
    pub dedup_candidates: bool,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            t_a: 2.0,
            t_o: 45.0,
            quant_angle: 2.0,
            quant_pos: None,
            collinear_offset_px: 2.0,
            dedup_candidates: true,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<(), VanishError> {
        let open = |v: f64| v > 0.0 && v < 90.0;
        if !open(self.t_a) || !open(self.t_o) {
            return Err(VanishError::InvalidConfig("t_a and t_o must lie in (0, 90)".into()));
        }
        if !(self.quant_angle > 0.0) || self.quant_pos.is_some_and(|q| !(q > 0.0)) {
            return Err(VanishError::InvalidConfig("quantization bins must be > 0".into()));
        }
        if !(self.collinear_offset_px >= 0.0) {
            return Err(VanishError::InvalidConfig("collinear_offset_px must be >= 0".into()));
        }
        Ok(())
    }
}

/// Center and diagonal of the bounding box of all segment endpoints.
fn segment_frame(segments: &[LineSegment]) -> (Point2, f64) {
    let (mut lo, mut hi) = (
        Point2::new(f64::INFINITY, f64::INFINITY),
        Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for s in segments {
        for p in [s.a, s.b] {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    (lo.midpoint(hi), (hi - lo).norm().max(1.0))
}

fn circular_mean_deg(a: f64, b: f64) -> f64 {
    let (a2, b2) = ((2.0 * a).to_radians(), (2.0 * b).to_radians());
    let (s, c) = (a2.sin() + b2.sin(), a2.cos() + b2.cos());
    undirected_deg(0.5 * s.atan2(c).to_degrees())
}

fn pair_candidate(s: &LineSegment, t: &LineSegment, t_a: f64) -> VanishingPoint {
    let (da, db) = (s.angle_deg(), t.angle_deg());
    if undirected_diff_deg(da, db) < t_a {
        return VanishingPoint::infinite(circular_mean_deg(da, db));
    }
    let (l, m) = (s.line(), t.line());
    let w = l[0] * m[1] - l[1] * m[0];
    let x = l[1] * m[2] - l[2] * m[1];
    let y = l[2] * m[0] - l[0] * m[2];
    let p = Point2::new(x / w, y / w);
    if w == 0.0 || !p.is_finite() {
        VanishingPoint::infinite(circular_mean_deg(da, db))
    } else {
        VanishingPoint::finite(p)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Bin {
    Infinite(i64),
    Finite(i64, i64),
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Candidates from every unordered pair of segments.
///
/// Pairs closer than `t_a` in direction vote for a point at infinity along
/// their mean direction; other pairs meet at a finite point. With
/// `dedup_candidates`, finite points are binned by direction from the center
/// of the segments (`quant_angle`) and inverse distance (`quant_pos`);
/// points in the nearest inverse-distance bin join the infinite bin of their
/// direction. Each bin is represented by the coordinate-wise median of its
/// members; bins come out in order of first occupancy.
pub fn accumulate_candidates(
    segments: &[LineSegment],
    cfg: &VoteConfig,
) -> Result<Vec<VanishingPoint>, VanishError> {
    cfg.validate()?;
    if segments.len() < 2 {
        return Err(VanishError::InsufficientSegments {
            count: segments.len(),
        });
    }
    let raw: Vec<VanishingPoint> = (0..segments.len())
        .flat_map(|i| (i + 1..segments.len()).map(move |j| (i, j)))
        .map(|(i, j)| pair_candidate(&segments[i], &segments[j], cfg.t_a))
        .collect();
    if !cfg.dedup_candidates {
        return Ok(raw);
    }

    let (center, diag) = segment_frame(segments);
    let qa = cfg.quant_angle;
    let qp = cfg.quant_pos.unwrap_or(qa.to_radians() / diag);
    let infinite_bin = |dir: f64| Bin::Infinite((undirected_deg(dir) / qa).floor() as i64);
    let mut order: Vec<Bin> = Vec::new();
    let mut members: HashMap<Bin, Vec<VanishingPoint>> = HashMap::new();
    for vp in raw {
        let (bin, vp) = match vp {
            VanishingPoint::Infinite { direction_deg } => (infinite_bin(direction_deg), vp),
            VanishingPoint::Finite { x, y } => {
                let v = Point2::new(x, y) - center;
                let r = v.norm();
                let inv_bin = if r > 0.0 { (1.0 / (r * qp)).floor() } else { f64::MAX };
                let dir = v.y.atan2(v.x).to_degrees();
                if inv_bin < 1.0 {
                    let d = undirected_deg(dir);
                    (infinite_bin(d), VanishingPoint::infinite(d))
                } else {
                    let a = (dir.rem_euclid(360.0) / qa).floor() as i64;
                    (Bin::Finite(a, inv_bin.min(i64::MAX as f64) as i64), vp)
                }
            }
        };
        members
            .entry(bin)
            .or_insert_with(|| {
                order.push(bin);
                Vec::new()
            })
            .push(vp);
    }
    Ok(order
        .into_iter()
        .map(|bin| {
            let m = &members[&bin];
            match bin {
                Bin::Infinite(k) => {
                    // Directions inside one bin share the same floor, no wrap.
                    let mut d: Vec<f64> = m
                        .iter()
                        .map(|vp| match *vp {
                            VanishingPoint::Infinite { direction_deg } => direction_deg,
                            VanishingPoint::Finite { .. } => unreachable!(),
                        })
                        .collect();
                    let med = median(&mut d);
                    debug_assert!((med / qa).floor() as i64 == k);
                    VanishingPoint::infinite(med)
                }
                Bin::Finite(..) => {
                    let mut xs: Vec<f64> = m.iter().filter_map(|v| v.position()).map(|p| p.x).collect();
                    let mut ys: Vec<f64> = m.iter().filter_map(|v| v.position()).map(|p| p.y).collect();
                    VanishingPoint::finite(Point2::new(median(&mut xs), median(&mut ys)))
                }
            }
        })
        .collect())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn point_line_distance(p: Point2, s: &LineSegment) -> f64 {
    let d = s.direction();
    let len = d.norm();
    if len == 0.0 {
        return p.distance(s.a);
    }
    (p - s.a).cross(d).abs() / len
}

/// Merge segments whose supporting lines agree within `quant_angle` degrees
/// and `collinear_offset_px` pixels (each midpoint to the other's line).
///
/// A merged segment lies on the line of its longest member, spans the
/// projections of all member endpoints, and carries the union of member
/// support. Groups keep the order of their first member.
pub fn dedup_collinear(segments: &[LineSegment], cfg: &VoteConfig) -> Vec<LineSegment> {
    let n = segments.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (s, t) = (&segments[i], &segments[j]);
            if undirected_diff_deg(s.angle_deg(), t.angle_deg()) >= cfg.quant_angle {
                continue;
            }
            let off = point_line_distance(s.midpoint(), t).max(point_line_distance(t.midpoint(), s));
            if off <= cfg.collinear_offset_px {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let k = *slot.entry(r).or_insert_with(|| {
            groups.push((r, Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(i);
    }
    groups
        .into_iter()
        .map(|(_, idx)| {
            if idx.len() == 1 {
                return segments[idx[0]].clone();
            }
            let longest = *idx
                .iter()
                .max_by(|&&a, &&b| segments[a].length().total_cmp(&segments[b].length()))
                .unwrap();
            let base = &segments[longest];
            let u = base.direction() * (1.0 / base.length());
            let origin = base.midpoint();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut support = Vec::new();
            for &k in &idx {
                let s = &segments[k];
                for p in [s.a, s.b] {
                    let t = (p - origin).dot(u);
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
                support.extend_from_slice(&s.support);
            }
            support.sort_unstable();
            support.dedup();
            LineSegment::with_support(origin + u * lo, origin + u * hi, support)
        })
        .collect()
}

/// Angular misfit between a segment and a candidate, degrees in `[0, 90]`.
///
/// Finite points: angle between the segment and the line from the point to
/// the segment midpoint. Points at infinity: angle between the two
/// directions.
pub fn distance(vp: &VanishingPoint, s: &LineSegment) -> Result<f64, VanishError> {
    if s.length() == 0.0 {
        return Err(VanishError::DegenerateSegment);
    }
    match *vp {
        VanishingPoint::Finite { x, y } => {
            let v = s.midpoint() - Point2::new(x, y);
            if v.norm() <= 1e-12 * (1.0 + s.length()) {
                return Err(VanishError::MidpointAtVP);
            }
            Ok(undirected_diff_deg(
                s.angle_deg(),
                v.y.atan2(v.x).to_degrees(),
            ))
        }
        VanishingPoint::Infinite { direction_deg } => {
            Ok(undirected_diff_deg(s.angle_deg(), direction_deg))
        }
    }
}

/// Share of a segment's pixels that fall inside the mask. Uses the support
/// pixels when present, otherwise the rasterized segment.
pub fn mask_weight(s: &LineSegment, mask: &BinMask) -> f64 {
    let (inside, total) = if s.support.is_empty() {
        let px = rasterize_segment(s, mask.width(), mask.height());
        // Pixels clipped off the image still count, as outside the mask.
        let steps = (s.b.x.floor() - s.a.x.floor())
            .abs()
            .max((s.b.y.floor() - s.a.y.floor()).abs());
        let total = steps as usize + 1;
        (px.iter().filter(|&&(x, y)| mask.get(x, y)).count(), total)
    } else {
        let inside = s
            .support
            .iter()
            .filter(|&&(x, y)| mask.get_signed(x as i64, y as i64))
            .count();
        (inside, s.support.len())
    };
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Per-segment evidence `‖s‖ ω(s, m)`, reusable across candidates.
#[derive(Clone, Debug)]
pub struct Evidence<'a> {
    segments: &'a [LineSegment],
    weights: Vec<f64>,
    total: f64,
}

impl<'a> Evidence<'a> {
    pub fn new(segments: &'a [LineSegment], mask: &BinMask) -> Result<Self, VanishError> {
        let weights: Vec<f64> = segments
            .iter()
            .map(|s| s.length() * mask_weight(s, mask))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(VanishError::NoEvidence);
        }
        Ok(Self {
            segments,
            weights,
            total,
        })
    }

    pub fn vote(&self, vp: &VanishingPoint, t_a: f64) -> f64 {
        let num: f64 = self
            .segments
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, &w)| {
                let d = match distance(vp, s) {
                    Ok(d) => d,
                    Err(VanishError::MidpointAtVP) => 0.0,
                    Err(_) => return 0.0,
                };
                w * (1.0 - d / t_a).max(0.0)
            })
            .sum();
        (num / self.total).clamp(0.0, 1.0)
    }
}

/// Length- and mask-weighted agreement of the segments with `vp`, in `[0, 1]`.
pub fn vote(
    vp: &VanishingPoint,
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
) -> Result<f64, VanishError> {
    cfg.validate()?;
    Ok(Evidence::new(segments, mask)?.vote(vp, cfg.t_a))
}

/// Votes for every candidate, in candidate order.
pub fn vote_all(
    candidates: &[VanishingPoint],
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
) -> Result<Vec<f64>, VanishError> {
    cfg.validate()?;
    let ev = Evidence::new(segments, mask)?;
    Ok(candidates.par_iter().map(|c| ev.vote(c, cfg.t_a)).collect())
}

/// Best-voted candidate and the best one at least `t_o` degrees away from
/// it, both directions taken at the mask centroid.
pub fn select_vp_pair(
    candidates: &[VanishingPoint],
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
) -> Result<(ScoredVP, ScoredVP), VanishError> {
    let scores = vote_all(candidates, segments, mask, cfg)?;
    let centroid = mask.centroid().ok_or(VanishError::NoEvidence)?;
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&i, &j| {
        scores[j].total_cmp(&scores[i]).then_with(|| {
            let (a, b) = (candidates[i].order_key(), candidates[j].order_key());
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        })
    });
    let no_pair = VanishError::NoOrthogonalPair { t_o: cfg.t_o };
    let &first = order.first().ok_or(VanishError::NoOrthogonalPair { t_o: cfg.t_o })?;
    let d1 = candidates[first].direction_from(centroid);
    let second = order
        .iter()
        .skip(1)
        .copied()
        .find(|&i| undirected_diff_deg(candidates[i].direction_from(centroid), d1) >= cfg.t_o)
        .ok_or(no_pair)?;
    Ok((
        ScoredVP {
            vp: candidates[first],
            score: scores[first],
        },
        ScoredVP {
            vp: candidates[second],
            score: scores[second],
        },
    ))
}

/// Relative reduction `100 (before - after) / before`; 0 when `before` is 0.
pub fn reduction_pct(before: f64, after: f64) -> f64 {
    if before <= 0.0 {
        0.0
    } else {
        100.0 * (before - after) / before
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub space_pct: f64,
    pub time_pct: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub collinear: ReductionRow,
    pub infinite: ReductionRow,
    pub combined: ReductionRow,
}

/// Candidate count and wall time of one accumulate-and-vote run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub candidates: usize,
    pub seconds: f64,
}

impl StageCount {
    pub fn new(candidates: usize, elapsed: Duration) -> Self {
        Self {
            candidates,
            seconds: elapsed.as_secs_f64(),
        }
    }
}

fn row(before: StageCount, after: StageCount) -> ReductionRow {
    ReductionRow {
        space_pct: reduction_pct(before.candidates as f64, after.candidates as f64),
        time_pct: reduction_pct(before.seconds, after.seconds),
    }
}

/// Reductions of each deduplication mode against the run without any.
pub fn reduction_metrics(
    baseline: StageCount,
    collinear: StageCount,
    infinite: StageCount,
    combined: StageCount,
) -> ReductionReport {
    ReductionReport {
        collinear: row(baseline, collinear),
        infinite: row(baseline, infinite),
        combined: row(baseline, combined),
    }
}

/// One timed pass: optional collinear merge, accumulation, voting.
pub fn timed_candidate_pass(
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
    collinear: bool,
) -> Result<(StageCount, Vec<VanishingPoint>, Vec<f64>), VanishError> {
    let start = Instant::now();
    let merged;
    let segs = if collinear {
        merged = dedup_collinear(segments, cfg);
        &merged[..]
    } else {
        segments
    };
    let cands = accumulate_candidates(segs, cfg)?;
    let scores = vote_all(&cands, segs, mask, cfg)?;
    Ok((StageCount::new(cands.len(), start.elapsed()), cands, scores))
}

/// Runs all four deduplication modes and reports their reductions.
pub fn measure_reduction(
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
) -> Result<(ReductionReport, [StageCount; 4]), VanishError> {
    let plain = VoteConfig {
        dedup_candidates: false,
        ..*cfg
    };
    let quant = VoteConfig {
        dedup_candidates: true,
        ..*cfg
    };
    let base = timed_candidate_pass(segments, mask, &plain, false)?.0;
    let col = timed_candidate_pass(segments, mask, &plain, true)?.0;
    let inf = timed_candidate_pass(segments, mask, &quant, false)?.0;
    let both = timed_candidate_pass(segments, mask, &quant, true)?.0;
    Ok((reduction_metrics(base, col, inf, both), [base, col, inf, both]))
}

/// Least-squares vanishing point of the segments that support `vp`.
///
/// Two closed-form passes: segments within `2 t_a` of `vp`, then within `t_a`
/// of the first estimate. Each supporting segment is weighted by
/// `‖s‖³ ω (1 - d / gate)`, since the angular variance of a fitted segment
/// falls with the cube of its length. Candidate selection is not revisited.
pub fn refine_vp(
    vp: &VanishingPoint,
    segments: &[LineSegment],
    mask: &BinMask,
    cfg: &VoteConfig,
) -> VanishingPoint {
    let first = refine_pass(vp, segments, mask, 2.0 * cfg.t_a);
    refine_pass(&first, segments, mask, cfg.t_a)
}

/// Weighted least-squares point of the lines within `gate` of `vp`, in
/// coordinates centered on the mask centroid. Returns `vp` unchanged when
/// fewer than two distinct lines support it.
fn refine_pass(
    vp: &VanishingPoint,
    segments: &[LineSegment],
    mask: &BinMask,
    gate: f64,
) -> VanishingPoint {
    let Some(center) = mask.centroid() else {
        return *vp;
    };
    let scale = {
        let (w, h) = mask.dims();
        (w as f64).hypot(h as f64) / 2.0
    };
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut used = 0usize;
    let mut first_dir: Option<f64> = None;
    let mut distinct = false;
    for s in segments {
        let w = s.length().powi(3) * mask_weight(s, mask);
        if w <= 0.0 {
            continue;
        }
        let d = match distance(vp, s) {
            Ok(d) => d,
            Err(VanishError::MidpointAtVP) => 0.0,
            Err(_) => continue,
        };
        if d >= gate {
            continue;
        }
        let a = (s.a - center) * (1.0 / scale);
        let b = (s.b - center) * (1.0 / scale);
        let l = nalgebra::Vector3::new(a.y - b.y, b.x - a.x, a.x * b.y - b.x * a.y);
        let n = l.x.hypot(l.y);
        if n == 0.0 {
            continue;
        }
        let l = l / n;
        m += l * l.transpose() * (w * (1.0 - d / gate));
        used += 1;
        let dir = s.angle_deg();
        match first_dir {
            None => first_dir = Some(dir),
            Some(f) if undirected_diff_deg(f, dir) > 1e-6 || l.z.abs() > 0.0 => distinct = true,
            _ => {}
        }
    }
    if used < 2 || !distinct {
        return *vp;
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenvalues");
    let v = eig.eigenvectors.column(k);
    let planar = v.x.hypot(v.y);
    if v.z.abs() <= 1e-12 * planar {
        return VanishingPoint::infinite(v.y.atan2(v.x).to_degrees());
    }
    let p = Point2::new(v.x / v.z, v.y / v.z) * scale + center;
    if p.is_finite() {
        VanishingPoint::finite(p)
    } else {
        VanishingPoint::infinite(v.y.atan2(v.x).to_degrees())
    }
}

/// Line detection, candidate accumulation and voting for one facade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpConfig {
    /// Strict settings for the segments that form candidates.
    pub accumulation: LineDetectConfig,
    /// Relaxed settings for the segments that vote.
    pub voting: LineDetectConfig,
    pub vote: VoteConfig,
    /// Merge collinear segments before accumulation and voting.
    pub dedup_collinear: bool,
    /// Edge pixels up to this many pixels outside the mask are kept, so the
    /// facade outline itself contributes segments.
    pub region_margin: usize,
    /// Re-estimate each selected point from its supporting segments.
    pub refine: bool,
}

impl Default for VpConfig {
    fn default() -> Self {
        Self {
            accumulation: LineDetectConfig::with_linearity(LinearityConfig::ACCUMULATION),
            voting: LineDetectConfig::with_linearity(LinearityConfig::VOTING),
            vote: VoteConfig::default(),
            dedup_collinear: true,
            region_margin: 2,
            refine: true,
        }
    }
}

impl VpConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.accumulation.ransac.seed = seed;
        self.voting.ransac.seed = seed;
        self
    }
}

#[derive(Clone, Debug)]
pub struct VpEstimate {
    /// Selected pair; positions refined when enabled, scores as voted.
    pub pair: (ScoredVP, ScoredVP),
    /// The selected candidates before refinement.
    pub candidate_pair: (ScoredVP, ScoredVP),
    pub accumulation_segments: Vec<LineSegment>,
    pub voting_segments: Vec<LineSegment>,
    /// Candidate count before and after deduplication.
    pub candidates_raw: usize,
    pub candidates: usize,
    /// Accumulation fell back to the voting settings.
    pub relaxed: bool,
}

/// Two vanishing points for the facade under `mask`.
///
/// Candidates inside the bounding box of the detection region (`mask`
/// dilated by `region_margin`) are discarded. When the
/// strict settings leave fewer than two candidates, or no sufficiently
/// offset pair, accumulation is retried with the relaxed settings.
pub fn estimate_vanishing_points(
    image: &GrayImage,
    mask: &BinMask,
    cfg: &VpConfig,
) -> Result<VpEstimate, VanishError> {
    if image.dims() != mask.dims() {
        return Err(VanishError::DimensionMismatch {
            image: image.dims(),
            mask: mask.dims(),
        });
    }
    let region = mask.dilate(cfg.region_margin);
    let prep = |segs: Vec<LineSegment>| {
        if cfg.dedup_collinear {
            dedup_collinear(&segs, &cfg.vote)
        } else {
            segs
        }
    };
    let voting = prep(detect_segments(image, Some(&region), &cfg.voting)?);
    let strict = prep(detect_segments(image, Some(&region), &cfg.accumulation)?);

    let attempt = |acc: &[LineSegment]| -> Result<(ScoredVP, ScoredVP, usize, usize), VanishError> {
        let raw = acc.len() * acc.len().saturating_sub(1) / 2;
        let mut cands = accumulate_candidates(acc, &cfg.vote)?;
        // A point inside the facade's bounding box cannot be a vanishing
        // point of the facade plane, and admits no bounding quadrangle.
        if let Some(r) = region.bounding_rect() {
            let (x0, y0) = (r.x as f64, r.y as f64);
            let (x1, y1) = (x0 + r.width as f64, y0 + r.height as f64);
            cands.retain(|c| {
                c.position()
                    .is_none_or(|p| p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1)
            });
        }
        if cands.len() < 2 {
            return Err(VanishError::InsufficientSegments { count: acc.len() });
        }
        let (a, b) = select_vp_pair(&cands, &voting, mask, &cfg.vote)?;
        Ok((a, b, raw, cands.len()))
    };
    let (result, relaxed, acc) = match attempt(&strict) {
        Ok(r) => (r, false, strict),
        Err(VanishError::NoEvidence) => return Err(VanishError::NoEvidence),
        Err(_) => (attempt(&voting)?, true, voting.clone()),
    };
    let (a, b, raw, n) = result;
    let refined = |c: ScoredVP| {
        if cfg.refine {
            ScoredVP {
                vp: refine_vp(&c.vp, &acc, mask, &cfg.vote),
                score: c.score,
            }
        } else {
            c
        }
    };
    Ok(VpEstimate {
        pair: (refined(a), refined(b)),
        candidate_pair: (a, b),
        accumulation_segments: acc,
        voting_segments: voting,
        candidates_raw: raw,
        candidates: n,
        relaxed,
    })
}
