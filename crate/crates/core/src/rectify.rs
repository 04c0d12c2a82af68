//! Vanishing-point aware bounding quadrangle, camera and aspect recovery,
//! homography estimation and fronto-parallel warping.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matting::AlphaMatte;
use crate::raster::{BinMask, GrayImage, Point2};
use crate::vanish::VanishingPoint;

#[derive(Debug, Error, PartialEq)]
pub enum RectifyError {
    #[error("degenerate quadrangle: {0}")]
    DegenerateQuad(String),
    #[error("aspect ratio is numerically unstable for this quadrangle")]
    NumericallyUnstable,
    #[error("corner correspondences are singular")]
    SingularSystem,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Line `a x + b y + c = 0`.
type Line = [f64; 3];

fn meet(l: Line, m: Line) -> Option<Point2> {
    let v = Vector3::from(l).cross(&Vector3::from(m));
    let p = Point2::new(v.x / v.z, v.y / v.z);
    (v.z != 0.0 && p.is_finite()).then_some(p)
}

/// Sine of the angle between two lines.
fn line_sine(l: Line, m: Line) -> f64 {
    let (nl, nm) = (l[0].hypot(l[1]), m[0].hypot(m[1]));
    (l[0] * m[1] - l[1] * m[0]).abs() / (nl * nm)
}

fn line_through(p: Point2, dir_rad: f64) -> Line {
    let q = p + Point2::new(dir_rad.cos(), dir_rad.sin());
    crate::raster::homogeneous_line(p, q)
}

/// Convex hull (counter-clockwise in image coordinates) of the centers of
/// the set pixels; only row extremes can be hull vertices.
pub fn mask_hull(mask: &BinMask) -> Vec<Point2> {
    let (w, h) = mask.dims();
    let mut pts = Vec::new();
    for y in 0..h {
        let row = (0..w).filter(|&x| mask.get(x, y));
        let mut it = row;
        if let Some(first) = it.next() {
            let last = it.last().unwrap_or(first);
            pts.push(Point2::pixel_center(first, y));
            if last != first {
                pts.push(Point2::pixel_center(last, y));
            }
        }
    }
    convex_hull(pts)
}

/// Andrew's monotone chain.
pub fn convex_hull(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| (a - o).cross(b - o);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeQuad {
    /// Top-left, top-right, bottom-right, bottom-left.
    pub corners: [Point2; 4],
    pub vps: [VanishingPoint; 2],
}

impl FacadeQuad {
    pub fn is_convex(&self) -> bool {
        let c = &self.corners;
        let turns: Vec<f64> = (0..4)
            .map(|i| (c[(i + 1) % 4] - c[i]).cross(c[(i + 2) % 4] - c[(i + 1) % 4]))
            .collect();
        turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
    }

    /// Longest side, pixels.
    pub fn max_side(&self) -> f64 {
        (0..4)
            .map(|i| self.corners[i].distance(self.corners[(i + 1) % 4]))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: Point2, tolerance: f64) -> bool {
        let c = &self.corners;
        let orient = (c[1] - c[0]).cross(c[2] - c[1]).signum();
        (0..4).all(|i| {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            orient * (b - a).cross(p - a) / (b - a).norm() >= -tolerance
        })
    }
}

/// The two lines of the pencil through `vp` that touch the hull, pushed
/// half a pixel outward so they enclose whole pixels.
fn tangent_pair(vp: &VanishingPoint, hull: &[Point2], centroid: Point2) -> Result<(Line, Line), RectifyError> {
    match *vp {
        VanishingPoint::Infinite { direction_deg } => {
            let t = direction_deg.to_radians();
            let n = Point2::new(-t.sin(), t.cos());
            let (lo, hi) = hull.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let s = n.dot(*p);
                (lo.min(s), hi.max(s))
            });
            Ok((
                [n.x, n.y, -(lo - 0.5)],
                [n.x, n.y, -(hi + 0.5)],
            ))
        }
        VanishingPoint::Finite { x, y } => {
            let v = Point2::new(x, y);
            let reference = centroid - v;
            if reference.norm() == 0.0 {
                return Err(RectifyError::DegenerateQuad("vanishing point at the mask centroid".into()));
            }
            let base = reference.y.atan2(reference.x);
            let (mut lo, mut hi) = ((f64::INFINITY, 0.0), (f64::NEG_INFINITY, 0.0));
            for p in hull {
                let d = *p - v;
                let r = d.norm();
                if r <= 0.5 {
                    return Err(RectifyError::DegenerateQuad("vanishing point inside the mask".into()));
                }
                let a = (d.y.atan2(d.x) - base + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                    - std::f64::consts::PI;
                if a < lo.0 {
                    lo = (a, r);
                }
                if a > hi.0 {
                    hi = (a, r);
                }
            }
            let lo_a = lo.0 - (0.5 / lo.1).asin();
            let hi_a = hi.0 + (0.5 / hi.1).asin();
            if hi_a - lo_a >= std::f64::consts::PI * 0.999 {
                return Err(RectifyError::DegenerateQuad("vanishing point inside the mask hull".into()));
            }
            Ok((line_through(v, base + lo_a), line_through(v, base + hi_a)))
        }
    }
}

/// Smallest quadrangle bounded by two lines of each vanishing-point pencil
/// that encloses every mask pixel. `vp1` gives the top and bottom sides.
pub fn bounding_quadrangle(
    mask: &BinMask,
    vp1: VanishingPoint,
    vp2: VanishingPoint,
) -> Result<FacadeQuad, RectifyError> {
    let bbox = mask
        .bounding_rect()
        .ok_or_else(|| RectifyError::DegenerateQuad("empty mask".into()))?;
    if bbox.width < 2 || bbox.height < 2 {
        return Err(RectifyError::DegenerateQuad(format!(
            "mask extent {}x{} is too small",
            bbox.width, bbox.height
        )));
    }
    let hull = mask_hull(mask);
    let centroid = mask.centroid().expect("mask is non-empty");

    let d1 = vp1.direction_from(centroid);
    let d2 = vp2.direction_from(centroid);
    let min_sine = 1f64.to_radians().sin();
    if (d1 - d2).to_radians().sin().abs() < min_sine {
        return Err(RectifyError::DegenerateQuad("pencils are nearly parallel".into()));
    }
    let (a1, b1) = tangent_pair(&vp1, &hull, centroid)?;
    let (a2, b2) = tangent_pair(&vp2, &hull, centroid)?;

    // Order each pair along the normal of the other pencil's direction:
    // the vp1 pair by +y ("top" first), the vp2 pair by +x ("left" first).
    let mut n1 = Point2::new(-d1.to_radians().sin(), d1.to_radians().cos());
    if n1.y < 0.0 || (n1.y == 0.0 && n1.x < 0.0) {
        n1 = -n1;
    }
    let mut n2 = Point2::new(-d2.to_radians().sin(), d2.to_radians().cos());
    if n2.x < 0.0 || (n2.x == 0.0 && n2.y < 0.0) {
        n2 = -n2;
    }
    let mid2 = line_through(centroid, d2.to_radians());
    let mid1 = line_through(centroid, d1.to_radians());
    let key = |l: Line, across: Line, n: Point2| meet(l, across).map(|p| n.dot(p));
    let (top, bottom) = match (key(a1, mid2, n1), key(b1, mid2, n1)) {
        (Some(ka), Some(kb)) if ka <= kb => (a1, b1),
        (Some(_), Some(_)) => (b1, a1),
        _ => return Err(RectifyError::DegenerateQuad("pencils do not cross".into())),
    };
    let (left, right) = match (key(a2, mid1, n2), key(b2, mid1, n2)) {
        (Some(ka), Some(kb)) if ka <= kb => (a2, b2),
        (Some(_), Some(_)) => (b2, a2),
        _ => return Err(RectifyError::DegenerateQuad("pencils do not cross".into())),
    };
    let corner = |l: Line, m: Line| {
        if line_sine(l, m) < min_sine {
            return Err(RectifyError::DegenerateQuad("ill-conditioned corner".into()));
        }
        meet(l, m).ok_or_else(|| RectifyError::DegenerateQuad("corner at infinity".into()))
    };
    let quad = FacadeQuad {
        corners: [
            corner(top, left)?,
            corner(top, right)?,
            corner(bottom, right)?,
            corner(bottom, left)?,
        ],
        vps: [vp1, vp2],
    };
    if !quad.is_convex() {
        return Err(RectifyError::DegenerateQuad("quadrangle is not convex".into()));
    }
    Ok(quad)
}

/// The vanishing point whose pencil is closer to horizontal at `at` first.
pub fn orient_pair(a: VanishingPoint, b: VanishingPoint, at: Point2) -> (VanishingPoint, VanishingPoint) {
    let tilt = |v: &VanishingPoint| {
        let d = v.direction_from(at);
        d.min(180.0 - d)
    };
    if tilt(&a) <= tilt(&b) {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraGuess {
    pub principal_point: Point2,
    pub focal: f64,
    /// The focal length is the fallback, not a vanishing-point estimate.
    pub approximate: bool,
}

/// Focal length from two orthogonal vanishing directions,
/// `f = sqrt(-(v1 - p) . (v2 - p))`. Falls back to `fallback` (the image
/// diagonal) when either point is at infinity or the constraint has no real
/// solution.
pub fn estimate_focal(vp1: &VanishingPoint, vp2: &VanishingPoint, principal: Point2, fallback: f64) -> CameraGuess {
    let approx = CameraGuess {
        principal_point: principal,
        focal: fallback,
        approximate: true,
    };
    match (vp1.position(), vp2.position()) {
        (Some(v1), Some(v2)) => {
            let d = (v1 - principal).dot(v2 - principal);
            if d < 0.0 && d.is_finite() {
                CameraGuess {
                    principal_point: principal,
                    focal: (-d).sqrt(),
                    approximate: false,
                }
            } else {
                approx
            }
        }
        _ => approx,
    }
}

/// Principal point at the image center, focal from the vanishing points.
pub fn camera_for_image(width: usize, height: usize, vp1: &VanishingPoint, vp2: &VanishingPoint) -> CameraGuess {
    let principal = Point2::new(width as f64 / 2.0, height as f64 / 2.0);
    estimate_focal(vp1, vp2, principal, (width as f64).hypot(height as f64))
}

/// Width/height ratio of the rectangle imaged as `quad`, following the
/// whiteboard-scanning construction: the corners satisfy
/// `k_i m_i = A R M_i` for a rectangle with corners `M_1..M_4`.
pub fn aspect_ratio(quad: &FacadeQuad, cam: &CameraGuess) -> Result<f64, RectifyError> {
    if !(cam.focal > 0.0) {
        return Err(RectifyError::InvalidArgument("focal must be > 0".into()));
    }
    let [tl, tr, br, bl] = quad.corners;
    let h = |p: Point2| Vector3::new(p.x, p.y, 1.0);
    let (m1, m2, m3, m4) = (h(tl), h(tr), h(bl), h(br));
    let den2 = m2.cross(&m4).dot(&m3);
    let den3 = m3.cross(&m4).dot(&m2);
    let scale = tl.distance(br).max(1.0).powi(2);
    if den2.abs() < 1e-12 * scale || den3.abs() < 1e-12 * scale {
        return Err(RectifyError::NumericallyUnstable);
    }
    let k2 = m1.cross(&m4).dot(&m3) / den2;
    let k3 = m1.cross(&m4).dot(&m2) / den3;
    let n2 = m2 * k2 - m1;
    let n3 = m3 * k3 - m1;
    let a_inv = Matrix3::new(
        1.0 / cam.focal,
        0.0,
        -cam.principal_point.x / cam.focal,
        0.0,
        1.0 / cam.focal,
        -cam.principal_point.y / cam.focal,
        0.0,
        0.0,
        1.0,
    );
    let (u2, u3) = (a_inv * n2, a_inv * n3);
    let ratio = (u2.norm_squared() / u3.norm_squared()).sqrt();
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(RectifyError::NumericallyUnstable);
    }
    Ok(ratio)
}

/// Projective map, stored with `h33 = 1` when that entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, RectifyError> {
        let scale = m.abs().max();
        if !(scale > 0.0) || m.determinant().abs() <= 1e-14 * scale.powi(3) {
            return Err(RectifyError::SingularSystem);
        }
        let m = if m[(2, 2)].abs() > 1e-12 * scale {
            m / m[(2, 2)]
        } else {
            m / scale
        };
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: Point2) -> Option<Point2> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        let q = Point2::new(v.x / v.z, v.y / v.z);
        (v.z != 0.0 && q.is_finite()).then_some(q)
    }

    pub fn inverse(&self) -> Homography {
        Self::from_matrix(self.m.try_inverse().expect("homography is invertible"))
            .expect("inverse of an invertible map")
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Homography) -> Result<Homography, RectifyError> {
        Self::from_matrix(self.m * other.m)
    }
}

fn normalizing_transform(pts: &[Point2; 4]) -> Matrix3<f64> {
    let c = pts.iter().fold(Point2::default(), |a, &p| a + p) * 0.25;
    let mean_dist = pts.iter().map(|p| p.distance(c)).sum::<f64>() / 4.0;
    let s = if mean_dist > 0.0 { 2f64.sqrt() / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Homography taking `src[i]` to `dst[i]`, from the normalized direct
/// linear transform.
pub fn homography_from_points(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography, RectifyError> {
    for pts in [src, dst] {
        let scale = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| a.distance(*b)))
            .fold(0.0, f64::max);
        for i in 0..4 {
            let (a, b, c) = (pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]);
            if (b - a).cross(c - a).abs() <= 1e-9 * scale * scale {
                return Err(RectifyError::SingularSystem);
            }
        }
    }
    let (ts, td) = (normalizing_transform(src), normalizing_transform(dst));
    let norm = |t: &Matrix3<f64>, p: Point2| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x, v.y)
    };
    let mut a = SMatrix::<f64, 8, 9>::zeros();
    for i in 0..4 {
        let (p, q) = (norm(&ts, src[i]), norm(&td, dst[i]));
        a.set_row(
            2 * i,
            &nalgebra::RowSVector::<f64, 9>::from_row_slice(&[
                -p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x,
            ]),
        );
        a.set_row(
            2 * i + 1,
            &nalgebra::RowSVector::<f64, 9>::from_row_slice(&[
                0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y,
            ]),
        );
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine eigenvalues");
    let h = eig.eigenvectors.column(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(RectifyError::SingularSystem)?;
    Homography::from_matrix(td_inv * hn * ts)
}

/// Output rectangle size for a quad: height `out_height`, width
/// `aspect * out_height`, both rounded to whole pixels.
pub fn output_dims(aspect: f64, out_height: f64) -> (usize, usize) {
    let h = out_height.round().max(1.0);
    let w = (aspect * out_height).round().max(1.0);
    (w as usize, h as usize)
}

/// Maps the quad corners to `(0,0)`, `(W,0)`, `(W,H)`, `(0,H)` with
/// `H = out_height`, `W = aspect * out_height`.
pub fn homography_from_quad(quad: &FacadeQuad, aspect: f64, out_height: f64) -> Result<Homography, RectifyError> {
    if !(aspect > 0.0 && out_height > 0.0) {
        return Err(RectifyError::InvalidArgument("aspect and out_height must be > 0".into()));
    }
    let w = aspect * out_height;
    let dst = [
        Point2::new(0.0, 0.0),
        Point2::new(w, 0.0),
        Point2::new(w, out_height),
        Point2::new(0.0, out_height),
    ];
    homography_from_points(&quad.corners, &dst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RectifiedFacade {
    pub texture: GrayImage,
    pub matte: AlphaMatte,
    /// Width over height.
    pub aspect: f64,
    /// Meters; in pixels until `scale_to_world` is applied.
    pub world_width: f64,
    pub world_height: f64,
}

/// Bilinear lookup at continuous position `p` (pixel-center convention).
/// `None` outside `[0, w] x [0, h]`.
fn bilinear(values: impl Fn(usize, usize) -> f64, w: usize, h: usize, p: Point2) -> Option<f64> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64) {
        return None;
    }
    let (sx, sy) = (p.x - 0.5, p.y - 0.5);
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
    let (xa, xb) = (clamp(x0, w), clamp(x0 + 1.0, w));
    let (ya, yb) = (clamp(y0, h), clamp(y0 + 1.0, h));
    let top = values(xa, ya) * (1.0 - fx) + values(xb, ya) * fx;
    let bottom = values(xa, yb) * (1.0 - fx) + values(xb, yb) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Inverse-map warp of a matte; outside the source reads as 0.
pub fn warp_matte(matte: &AlphaMatte, h: &Homography, out_w: usize, out_h: usize) -> AlphaMatte {
    let inv = h.inverse();
    let (w, hh) = matte.dims();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let v = inv
                .apply(Point2::pixel_center(x, y))
                .and_then(|p| bilinear(|i, j| matte.get(i, j), w, hh, p))
                .unwrap_or(0.0);
            out.push(v);
        }
    }
    AlphaMatte::new(out_w, out_h, out)
}

/// Inverse-map bilinear warp of a texture and its matte. Output pixels whose
/// preimage lies outside the source get value 0 and alpha 0.
pub fn warp(image: &GrayImage, matte: &AlphaMatte, h: &Homography, out_w: usize, out_h: usize) -> RectifiedFacade {
    assert_eq!(image.dims(), matte.dims(), "image and matte sizes differ");
    assert!(out_w > 0 && out_h > 0, "output must be non-empty");
    let inv = h.inverse();
    let (w, hh) = image.dims();
    let mut tex = Vec::with_capacity(out_w * out_h);
    let mut alpha = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let src = inv.apply(Point2::pixel_center(x, y));
            let v = src.and_then(|p| bilinear(|i, j| image.get(i, j) as f64, w, hh, p));
            match v {
                Some(v) => {
                    tex.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
                    let a = src
                        .and_then(|p| bilinear(|i, j| matte.get(i, j), w, hh, p))
                        .unwrap_or(0.0);
                    alpha.push(a);
                }
                None => {
                    tex.push(0);
                    alpha.push(0.0);
                }
            }
        }
    }
    RectifiedFacade {
        texture: GrayImage::new(out_w, out_h, tex).expect("output dims are valid"),
        matte: AlphaMatte::new(out_w, out_h, alpha),
        aspect: out_w as f64 / out_h as f64,
        world_width: out_w as f64,
        world_height: out_h as f64,
    }
}

pub fn scale_to_world(mut rf: RectifiedFacade, given_width: f64) -> Result<RectifiedFacade, RectifyError> {
    if !(given_width > 0.0) {
        return Err(RectifyError::InvalidArgument("width must be > 0".into()));
    }
    rf.world_width = given_width;
    rf.world_height = given_width / rf.aspect;
    Ok(rf)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RectifyConfig {
    /// Output height in pixels; `None` makes the longer output side equal
    /// to the longest quad side.
    pub out_height: Option<f64>,
    /// Upper bound on the output height, pixels.
    pub max_out_height: f64,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            out_height: None,
            max_out_height: 4096.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rectification {
    pub quad: FacadeQuad,
    pub camera: CameraGuess,
    pub homography: Homography,
    pub facade: RectifiedFacade,
}

/// Quadrangle, camera, aspect, homography and warp for one facade. The vps
/// are reordered so the first pencil is the more horizontal one.
pub fn rectify(
    image: &GrayImage,
    matte: &AlphaMatte,
    mask: &BinMask,
    vps: (VanishingPoint, VanishingPoint),
    cfg: &RectifyConfig,
) -> Result<Rectification, RectifyError> {
    let centroid = mask
        .centroid()
        .ok_or_else(|| RectifyError::DegenerateQuad("empty mask".into()))?;
    let (vp1, vp2) = orient_pair(vps.0, vps.1, centroid);
    let quad = bounding_quadrangle(mask, vp1, vp2)?;
    let camera = camera_for_image(image.width(), image.height(), &vp1, &vp2);
    let aspect = aspect_ratio(&quad, &camera)?;
    // The longer output side matches the longest quad side.
    let out_height = cfg
        .out_height
        .unwrap_or_else(|| quad.max_side() / aspect.max(1.0))
        .min(cfg.max_out_height)
        .max(1.0);
    let (out_w, out_h) = output_dims(aspect, out_height);
    let homography = homography_from_quad(&quad, aspect, out_h as f64)?;
    let mut facade = warp(image, matte, &homography, out_w, out_h);
    facade.aspect = aspect;
    Ok(Rectification {
        quad,
        camera,
        homography,
        facade,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Homography of a pinhole camera looking at the plane z = 0 through
    /// a yaw/pitch rotation, rectangle coordinates in plane units.
    fn camera_homography(f: f64, p: Point2, yaw_deg: f64, pitch_deg: f64, dist: f64) -> Matrix3<f64> {
        let (y, x) = (yaw_deg.to_radians(), pitch_deg.to_radians());
        let ry = Matrix3::new(y.cos(), 0.0, y.sin(), 0.0, 1.0, 0.0, -y.sin(), 0.0, y.cos());
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, x.cos(), -x.sin(), 0.0, x.sin(), x.cos());
        let r = rx * ry;
        let k = Matrix3::new(f, 0.0, p.x, 0.0, f, p.y, 0.0, 0.0, 1.0);
        let t = Vector3::new(0.0, 0.0, dist);
        let mut m = Matrix3::zeros();
        m.set_column(0, &r.column(0));
        m.set_column(1, &r.column(1));
        m.set_column(2, &t);
        k * m
    }

    fn project(h: &Matrix3<f64>, x: f64, y: f64) -> Point2 {
        let v = h * Vector3::new(x, y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }

    fn polygon_mask(w: usize, h: usize, c: &[Point2; 4]) -> BinMask {
        let quad = FacadeQuad {
            corners: *c,
            vps: [VanishingPoint::infinite(0.0), VanishingPoint::infinite(90.0)],
        };
        BinMask::from_fn(w, h, |x, y| quad.contains(Point2::pixel_center(x, y), 0.0))
    }

    fn vp_of(a: Point2, b: Point2, c: Point2, d: Point2) -> VanishingPoint {
        let l = crate::raster::homogeneous_line(a, b);
        let m = crate::raster::homogeneous_line(c, d);
        match meet(l, m) {
            Some(p) => VanishingPoint::finite(p),
            None => VanishingPoint::infinite((b - a).y.atan2((b - a).x).to_degrees()),
        }
    }

    #[test]
    fn axis_aligned_bbox() {
        let mask = BinMask::from_fn(130, 230, |x, y| (10..110).contains(&x) && (10..210).contains(&y));
        let q = bounding_quadrangle(&mask, VanishingPoint::infinite(0.0), VanishingPoint::infinite(90.0)).unwrap();
        let expect = [
            Point2::new(10.0, 10.0),
            Point2::new(110.0, 10.0),
            Point2::new(110.0, 210.0),
            Point2::new(10.0, 210.0),
        ];
        for (c, e) in q.corners.iter().zip(&expect) {
            assert!(c.distance(*e) < 1e-9, "{c:?} vs {e:?}");
        }
    }

    #[test]
    fn warped_rectangle_corners() {
        let (w, h) = (640usize, 480usize);
        let pp = Point2::new(320.0, 240.0);
        let hm = camera_homography(700.0, pp, 28.0, -15.0, 900.0);
        let (rw, rh) = (300.0, 200.0);
        let corners = [
            project(&hm, -rw / 2.0, -rh / 2.0),
            project(&hm, rw / 2.0, -rh / 2.0),
            project(&hm, rw / 2.0, rh / 2.0),
            project(&hm, -rw / 2.0, rh / 2.0),
        ];
        let mask = polygon_mask(w, h, &corners);
        let vp1 = vp_of(corners[0], corners[1], corners[3], corners[2]);
        let vp2 = vp_of(corners[0], corners[3], corners[1], corners[2]);
        let q = bounding_quadrangle(&mask, vp1, vp2).unwrap();
        for (c, e) in q.corners.iter().zip(&corners) {
            assert!(c.distance(*e) < 1.0, "{c:?} vs {e:?}");
        }
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    assert!(q.contains(Point2::pixel_center(x, y), 0.5));
                }
            }
        }
    }

    #[test]
    fn single_pixel_is_degenerate() {
        let mut mask = BinMask::filled(10, 10, false);
        mask.set(4, 4, true);
        assert!(matches!(
            bounding_quadrangle(&mask, VanishingPoint::infinite(0.0), VanishingPoint::infinite(90.0)),
            Err(RectifyError::DegenerateQuad(_))
        ));
    }

    #[test]
    fn parallel_pencils_are_degenerate() {
        let mask = BinMask::from_fn(50, 50, |x, y| (10..40).contains(&x) && (10..40).contains(&y));
        assert!(matches!(
            bounding_quadrangle(&mask, VanishingPoint::infinite(0.0), VanishingPoint::infinite(0.5)),
            Err(RectifyError::DegenerateQuad(_))
        ));
    }

    #[test]
    fn focal_examples() {
        let p = Point2::new(0.0, 0.0);
        let v1 = VanishingPoint::finite(Point2::new(1000.0, 0.0));
        let v2 = VanishingPoint::finite(Point2::new(-400.0, 0.0));
        let cam = estimate_focal(&v1, &v2, p, 999.0);
        assert!((cam.focal - 400000f64.sqrt()).abs() < 1e-9 && !cam.approximate);
        // Oracle: directions (1000, 0, f) and (-400, 0, f) are orthogonal and
        // project to v1, v2 under a camera with that focal length.
        let f = cam.focal;
        assert!((1000.0 * -400.0 + f * f).abs() < 1e-6);
        assert!((f * 1000.0 / f - 1000.0).abs() < 1e-12);

        let inf = VanishingPoint::infinite(0.0);
        let fb = estimate_focal(&inf, &v2, p, 800.0);
        assert_eq!((fb.focal, fb.approximate), (800.0, true));
        let a = VanishingPoint::finite(Point2::new(5.0, 5.0));
        let b = VanishingPoint::finite(Point2::new(5.0, 5.0));
        let fb = estimate_focal(&a, &b, p, 800.0);
        assert!(fb.approximate);
        // (v1 - p).(v2 - p) = 50
        let fb = estimate_focal(
            &VanishingPoint::finite(Point2::new(10.0, 0.0)),
            &VanishingPoint::finite(Point2::new(5.0, 3.0)),
            p,
            800.0,
        );
        assert!(fb.approximate && fb.focal == 800.0);
    }

    fn quad_from(c: [Point2; 4]) -> FacadeQuad {
        FacadeQuad {
            corners: c,
            vps: [VanishingPoint::infinite(0.0), VanishingPoint::infinite(90.0)],
        }
    }

    #[test]
    fn fronto_parallel_aspects() {
        let cam = CameraGuess {
            principal_point: Point2::new(320.0, 240.0),
            focal: 500.0,
            approximate: false,
        };
        let r = quad_from([
            Point2::new(10.0, 20.0),
            Point2::new(210.0, 20.0),
            Point2::new(210.0, 120.0),
            Point2::new(10.0, 120.0),
        ]);
        assert!((aspect_ratio(&r, &cam).unwrap() - 2.0).abs() < 1e-12);
        let cam2 = CameraGuess { focal: 3000.0, ..cam };
        assert!((aspect_ratio(&r, &cam2).unwrap() - 2.0).abs() < 1e-12);
        let sq = quad_from([
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]);
        assert!((aspect_ratio(&sq, &cam).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projected_aspect_recovered() {
        let pp = Point2::new(400.0, 300.0);
        let f = 900.0;
        for (yaw, pitch) in [(30.0, 0.0), (30.0, 12.0), (-35.0, -20.0)] {
            let hm = camera_homography(f, pp, yaw, pitch, 1000.0);
            let (rw, rh) = (300.0, 200.0);
            let c = [
                project(&hm, -rw / 2.0, -rh / 2.0),
                project(&hm, rw / 2.0, -rh / 2.0),
                project(&hm, rw / 2.0, rh / 2.0),
                project(&hm, -rw / 2.0, rh / 2.0),
            ];
            let cam = CameraGuess {
                principal_point: pp,
                focal: f,
                approximate: false,
            };
            let a = aspect_ratio(&quad_from(c), &cam).unwrap();
            assert!((a / 1.5 - 1.0).abs() < 0.02, "yaw {yaw}: {a}");
            // Scaled to a 15 m width the height is within 2% of 10 m.
            let rf = RectifiedFacade {
                texture: GrayImage::filled(1, 1, 0),
                matte: AlphaMatte::filled(1, 1, 1.0),
                aspect: a,
                world_width: 0.0,
                world_height: 0.0,
            };
            let rf = scale_to_world(rf, 15.0).unwrap();
            assert!((rf.world_height / 10.0 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn focal_from_projected_vps() {
        let pp = Point2::new(400.0, 300.0);
        let hm = camera_homography(850.0, pp, 25.0, 15.0, 1000.0);
        let c = [
            project(&hm, -1.0, -1.0),
            project(&hm, 1.0, -1.0),
            project(&hm, 1.0, 1.0),
            project(&hm, -1.0, 1.0),
        ];
        let v1 = vp_of(c[0], c[1], c[3], c[2]);
        let v2 = vp_of(c[0], c[3], c[1], c[2]);
        let cam = estimate_focal(&v1, &v2, pp, 1.0);
        assert!((cam.focal - 850.0).abs() < 1e-6, "{}", cam.focal);
    }

    #[test]
    fn identity_quad_gives_identity() {
        let q = quad_from([
            Point2::new(0.0, 0.0),
            Point2::new(200.0, 0.0),
            Point2::new(200.0, 100.0),
            Point2::new(0.0, 100.0),
        ]);
        let h = homography_from_quad(&q, 2.0, 100.0).unwrap();
        assert!((h.matrix() - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn round_trip_homography() {
        let truth = Matrix3::new(0.9, 0.12, 30.0, -0.05, 1.1, 12.0, 0.0004, -0.0002, 1.0);
        let rect = [
            Point2::new(0.0, 0.0),
            Point2::new(300.0, 0.0),
            Point2::new(300.0, 200.0),
            Point2::new(0.0, 200.0),
        ];
        let quad = rect.map(|p| project(&truth, p.x, p.y));
        let h_rec = homography_from_quad(&quad_from(quad), 1.5, 200.0).unwrap();
        let prod = Homography::from_matrix(h_rec.matrix() * truth).unwrap();
        assert!((prod.matrix() - Matrix3::identity()).abs().max() < 1e-6);
        for (q, r) in quad.iter().zip(&rect) {
            assert!(h_rec.apply(*q).unwrap().distance(*r) < 1e-9);
        }
    }

    #[test]
    fn collinear_corners_are_singular() {
        let q = quad_from([
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(20.0, 0.0),
            Point2::new(0.0, 10.0),
        ]);
        assert_eq!(homography_from_quad(&q, 1.0, 10.0), Err(RectifyError::SingularSystem));
    }

    #[test]
    fn identity_warp() {
        let img = GrayImage::from_fn(13, 9, |x, y| (x * 17 + y * 5) as u8);
        let matte = AlphaMatte::new(13, 9, (0..117).map(|i| i as f64 / 117.0).collect());
        let rf = warp(&img, &matte, &Homography::identity(), 13, 9);
        assert_eq!(rf.texture, img);
        for (a, b) in rf.matte.alpha().iter().zip(matte.alpha()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_warp_matches_bilinear() {
        let img = GrayImage::from_fn(8, 6, |x, y| ((x * 31 + y * 47) % 256) as u8);
        let matte = AlphaMatte::filled(8, 6, 1.0);
        let h = Homography::from_matrix(Matrix3::new(2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let rf = warp(&img, &matte, &h, 16, 12);
        assert_eq!(rf.texture.dims(), (16, 12));
        // Closed form: output (i, j) samples source ((i + .5) / 2, (j + .5) / 2).
        let probes = [(0, 0), (1, 1), (2, 3), (3, 2), (5, 7), (7, 5), (8, 8), (9, 4), (10, 1), (11, 11), (12, 6), (13, 9), (14, 2), (15, 11), (4, 10), (6, 0)];
        for (i, j) in probes {
            let sx = (i as f64 + 0.5) / 2.0 - 0.5;
            let sy = (j as f64 + 0.5) / 2.0 - 0.5;
            let x0 = sx.floor().max(0.0) as usize;
            let y0 = sy.floor().max(0.0) as usize;
            let x1 = (x0 + 1).min(7);
            let y1 = (y0 + 1).min(5);
            let fx = if sx < 0.0 { 0.0 } else { sx - sx.floor() };
            let fy = if sy < 0.0 { 0.0 } else { sy - sy.floor() };
            let v = |x: usize, y: usize| img.get(x, y) as f64;
            let expect = (v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx) * (1.0 - fy)
                + (v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx) * fy;
            assert_eq!(rf.texture.get(i, j), (expect + 0.5).floor() as u8, "probe ({i},{j})");
        }
    }

    #[test]
    fn outside_source_is_transparent() {
        let img = GrayImage::filled(10, 10, 200);
        let matte = AlphaMatte::filled(10, 10, 1.0);
        let h = Homography::from_matrix(Matrix3::new(1.0, 0.0, -500.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let rf = warp(&img, &matte, &h, 10, 10);
        assert!(rf.matte.alpha().iter().all(|&a| a == 0.0));
        assert!(rf.texture.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn area_preserving_warp_keeps_mask_count() {
        let mask = BinMask::from_fn(200, 200, |x, y| (50..150).contains(&x) && (60..140).contains(&y));
        let matte = AlphaMatte::from_mask(&mask);
        let img = GrayImage::filled(200, 200, 0);
        // Rotation by 20 degrees about (100, 100).
        let t = 20f64.to_radians();
        let m = Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
        let c = Matrix3::new(1.0, 0.0, 100.0, 0.0, 1.0, 100.0, 0.0, 0.0, 1.0);
        let h = Homography::from_matrix(c * m * c.try_inverse().unwrap()).unwrap();
        let rf = warp(&img, &matte, &h, 200, 200);
        let count = rf.matte.alpha().iter().filter(|&&a| a > 0.5).count() as f64;
        assert!((count / mask.count() as f64 - 1.0).abs() < 0.02, "{count}");
    }

    #[test]
    fn world_scaling() {
        let rf = RectifiedFacade {
            texture: GrayImage::filled(2, 1, 0),
            matte: AlphaMatte::filled(2, 1, 1.0),
            aspect: 2.0,
            world_width: 0.0,
            world_height: 0.0,
        };
        assert_eq!(scale_to_world(rf.clone(), 20.0).unwrap().world_height, 10.0);
        let rf = RectifiedFacade { aspect: 0.5, ..rf };
        assert_eq!(scale_to_world(rf, 10.0).unwrap().world_height, 20.0);
    }

    #[test]
    fn rectify_axis_aligned_is_crop() {
        let img = GrayImage::from_fn(120, 90, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let mask = BinMask::from_fn(120, 90, |x, y| (20..100).contains(&x) && (10..50).contains(&y));
        let matte = AlphaMatte::from_mask(&mask);
        let r = rectify(
            &img,
            &matte,
            &mask,
            (VanishingPoint::infinite(90.0), VanishingPoint::infinite(0.0)),
            &RectifyConfig::default(),
        )
        .unwrap();
        assert!((r.facade.aspect - 2.0).abs() < 1e-12);
        assert!(r.camera.approximate);
        assert_eq!(r.facade.texture, img.crop(crate::raster::Rect::new(20, 10, 80, 40)));
        assert!(r.facade.matte.alpha().iter().all(|&a| (a - 1.0).abs() < 1e-12));
    }
}
