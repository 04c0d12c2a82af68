//! Seeded synthetic scenes with known geometry, used by tests, the
//! acceptance suite and the evaluation binaries.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{BinMask, GrayImage, LineSegment, Point2, ProbMask};

/// Pinhole camera looking at the plane `z = 0` of a facade.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    pub focal: f64,
    pub principal: Point2,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    /// Plane origin in camera coordinates.
    pub translation: [f64; 3],
}

impl PinholeCamera {
    /// Plane-to-image homography `K [r1 r2 t]`.
    pub fn plane_homography(&self) -> Matrix3<f64> {
        let (y, x) = (self.yaw_deg.to_radians(), self.pitch_deg.to_radians());
        let ry = Matrix3::new(y.cos(), 0.0, y.sin(), 0.0, 1.0, 0.0, -y.sin(), 0.0, y.cos());
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, x.cos(), -x.sin(), 0.0, x.sin(), x.cos());
        let r = rx * ry;
        let k = Matrix3::new(
            self.focal,
            0.0,
            self.principal.x,
            0.0,
            self.focal,
            self.principal.y,
            0.0,
            0.0,
            1.0,
        );
        let mut m = Matrix3::zeros();
        m.set_column(0, &r.column(0));
        m.set_column(1, &r.column(1));
        m.set_column(2, &Vector3::from(self.translation));
        k * m
    }
}

pub fn apply(h: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// Window-grid facade texture in plane units `[0, w] x [0, h]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacadeTexture {
    pub width: f64,
    pub height: f64,
    pub columns: usize,
    pub rows: usize,
    pub wall: u8,
    pub window: u8,
}

impl FacadeTexture {
    pub fn sample(&self, p: Point2) -> u8 {
        let cw = self.width / self.columns as f64;
        let ch = self.height / self.rows as f64;
        let (u, v) = ((p.x / cw).fract(), (p.y / ch).fract());
        if (0.25..0.75).contains(&u) && (0.2..0.7).contains(&v) {
            self.window
        } else {
            self.wall
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width && p.y < self.height
    }

    /// Fronto-parallel raster at `scale` pixels per unit.
    pub fn render_flat(&self, scale: f64) -> GrayImage {
        let w = (self.width * scale).round().max(1.0) as usize;
        let h = (self.height * scale).round().max(1.0) as usize;
        GrayImage::from_fn(w, h, |x, y| {
            self.sample(Point2::new((x as f64 + 0.5) / scale, (y as f64 + 0.5) / scale))
        })
    }
}

/// A rendered view of one textured rectangle.
#[derive(Clone, Debug)]
pub struct RectangleScene {
    pub image: GrayImage,
    /// Fractional pixel coverage of the rectangle.
    pub coverage: ProbMask,
    pub camera: PinholeCamera,
    pub texture: FacadeTexture,
    /// Image corners: top-left, top-right, bottom-right, bottom-left.
    pub corners: [Point2; 4],
    pub aspect: f64,
}

impl RectangleScene {
    pub fn mask(&self) -> BinMask {
        self.coverage.threshold(0.5)
    }
}

/// Supersampled rendering of `texture` seen by `camera`; `background`
/// gives the intensity at pixel `(x, y)` outside the rectangle.
pub fn render_plane(
    width: usize,
    height: usize,
    camera: &PinholeCamera,
    texture: &FacadeTexture,
    background: impl Fn(usize, usize) -> u8,
    samples: usize,
) -> (GrayImage, ProbMask) {
    let h = camera.plane_homography();
    let inv = h.try_inverse().expect("camera homography is invertible");
    let n = samples.max(1);
    let mut img = Vec::with_capacity(width * height);
    let mut cov = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let bg = background(x, y) as f64;
            let (mut acc, mut hits) = (0.0, 0usize);
            for sy in 0..n {
                for sx in 0..n {
                    let p = Point2::new(
                        x as f64 + (sx as f64 + 0.5) / n as f64,
                        y as f64 + (sy as f64 + 0.5) / n as f64,
                    );
                    let v = inv * Vector3::new(p.x, p.y, 1.0);
                    let q = Point2::new(v.x / v.z, v.y / v.z);
                    if v.z > 0.0 && texture.contains(q) {
                        acc += texture.sample(q) as f64;
                        hits += 1;
                    } else {
                        acc += bg;
                    }
                }
            }
            let total = (n * n) as f64;
            img.push((acc / total + 0.5).floor().clamp(0.0, 255.0) as u8);
            cov.push(hits as f64 / total);
        }
    }
    (
        GrayImage::new(width, height, img).expect("valid dims"),
        ProbMask::new(width, height, cov).expect("coverage in [0, 1]"),
    )
}

/// Random rectangle under a random camera: `|yaw|, |pitch| <= max_angle_deg`,
/// focal in `[0.8, 1.5]` times the image diagonal, aspect in `[0.5, 2.5]`.
pub fn random_rectangle_scene(seed: u64, width: usize, height: usize, max_angle_deg: f64) -> RectangleScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = (width as f64).hypot(height as f64);
    let focal = rng.random_range(0.8..=1.5) * diag;
    let yaw = rng.random_range(-max_angle_deg..=max_angle_deg);
    let pitch = rng.random_range(-max_angle_deg..=max_angle_deg);
    let aspect = rng.random_range(0.5..=2.5);
    let rect_h = 10.0;
    let rect_w = aspect * rect_h;
    let texture = FacadeTexture {
        width: rect_w,
        height: rect_h,
        columns: (aspect * 4.0).round().max(2.0) as usize,
        rows: 4,
        wall: rng.random_range(150..=200),
        window: rng.random_range(30..=80),
    };
    let principal = Point2::new(width as f64 / 2.0, height as f64 / 2.0);
    let offset = Point2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let mut camera = PinholeCamera {
        focal,
        principal,
        yaw_deg: yaw,
        pitch_deg: pitch,
        translation: [0.0, 0.0, 1.0],
    };
    // Move the camera back until the rectangle fills at most 80% of the frame.
    let plane = [
        Point2::new(0.0, 0.0),
        Point2::new(rect_w, 0.0),
        Point2::new(rect_w, rect_h),
        Point2::new(0.0, rect_h),
    ];
    let (yr, xr) = (yaw.to_radians(), pitch.to_radians());
    let ry = Matrix3::new(yr.cos(), 0.0, yr.sin(), 0.0, 1.0, 0.0, -yr.sin(), 0.0, yr.cos());
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, xr.cos(), -xr.sin(), 0.0, xr.sin(), xr.cos());
    let r = rx * ry;
    let center = r * Vector3::new(rect_w / 2.0, rect_h / 2.0, 0.0);
    let mut dist = rect_w.max(rect_h);
    let corners = loop {
        camera.translation = [
            -center.x + offset.x * dist,
            -center.y + offset.y * dist,
            dist - center.z,
        ];
        let h = camera.plane_homography();
        let c = plane.map(|p| apply(&h, p));
        let fits = c.iter().all(|p| {
            let v = h * Vector3::new(0.0, 0.0, 1.0);
            v.z > 0.0
                && p.x > 0.1 * width as f64
                && p.x < 0.9 * width as f64
                && p.y > 0.1 * height as f64
                && p.y < 0.9 * height as f64
        });
        if fits {
            break c;
        }
        dist *= 1.05;
    };
    let bg_base: f64 = rng.random_range(60.0..110.0);
    let gx: f64 = rng.random_range(-0.05..0.05);
    let gy: f64 = rng.random_range(-0.05..0.05);
    let (image, coverage) = render_plane(
        width,
        height,
        &camera,
        &texture,
        |x, y| (bg_base + gx * x as f64 + gy * y as f64).clamp(0.0, 255.0) as u8,
        4,
    );
    RectangleScene {
        image,
        coverage,
        camera,
        texture,
        corners,
        aspect,
    }
}

/// Straight segments and circles drawn as thin dark strokes on a light
/// background. Returns the image and a mask of the pixels within `tol` of a
/// straight stroke (the straight-line ground truth).
pub fn lines_and_circles(
    seed: u64,
    width: usize,
    height: usize,
    n_lines: usize,
    n_circles: usize,
) -> (GrayImage, BinMask, BinMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<(Point2, Point2)> = Vec::new();
    for _ in 0..n_lines {
        let a = Point2::new(
            rng.random_range(0.1..0.9) * width as f64,
            rng.random_range(0.1..0.9) * height as f64,
        );
        let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(0.25..0.45) * width.min(height) as f64;
        let b = a + Point2::new(t.cos(), t.sin()) * len;
        lines.push((a, b));
    }
    let mut circles: Vec<(Point2, f64)> = Vec::new();
    for _ in 0..n_circles {
        let r = rng.random_range(25.0..60.0);
        let c = Point2::new(
            rng.random_range(r + 5.0..width as f64 - r - 5.0),
            rng.random_range(r + 5.0..height as f64 - r - 5.0),
        );
        circles.push((c, r));
    }
    let seg_dist = |p: Point2, a: Point2, b: Point2| {
        let d = b - a;
        let t = ((p - a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
        p.distance(a + d * t)
    };
    let stroke = 1.2;
    let near_line = |p: Point2, r: f64| lines.iter().any(|&(a, b)| seg_dist(p, a, b) <= r);
    let near_circle = |p: Point2, r: f64| circles.iter().any(|&(c, rad)| (p.distance(c) - rad).abs() <= r);
    let img = GrayImage::from_fn(width, height, |x, y| {
        // 3x3 supersampled coverage of both stroke kinds.
        let mut cov = 0.0f64;
        for sy in 0..3 {
            for sx in 0..3 {
                let p = Point2::new(x as f64 + (sx as f64 + 0.5) / 3.0, y as f64 + (sy as f64 + 0.5) / 3.0);
                if near_line(p, stroke) || near_circle(p, stroke) {
                    cov += 1.0 / 9.0;
                }
            }
        }
        (220.0f64 - 170.0 * cov).round() as u8
    });
    let line_gt = BinMask::from_fn(width, height, |x, y| near_line(Point2::pixel_center(x, y), 3.0));
    let circle_gt = BinMask::from_fn(width, height, |x, y| near_circle(Point2::pixel_center(x, y), 3.0));
    (img, line_gt, circle_gt)
}

/// Segments converging to two vanishing points inside `[0, w] x [0, h]`,
/// followed by a jittered collinear copy of each of the first
/// `duplicates` segments.
pub fn duplicated_segment_corpus(
    seed: u64,
    width: f64,
    height: f64,
    per_vp: usize,
    vps: [Point2; 2],
    duplicates: usize,
) -> Vec<LineSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segs = Vec::new();
    for vp in vps {
        for _ in 0..per_vp {
            let p = Point2::new(
                rng.random_range(0.15..0.85) * width,
                rng.random_range(0.15..0.85) * height,
            );
            let d = p - vp;
            let u = d * (1.0 / d.norm());
            let len = rng.random_range(0.1..0.25) * width.min(height);
            segs.push(LineSegment::new(p - u * (len / 2.0), p + u * (len / 2.0)));
        }
    }
    let originals = segs.clone();
    for s in originals.iter().take(duplicates) {
        let jitter = rng.random_range(-0.2f64..0.2).to_radians();
        let m = s.midpoint();
        let (c, sn) = (jitter.cos(), jitter.sin());
        let rot = |p: Point2| {
            let d = p - m;
            m + Point2::new(c * d.x - sn * d.y, sn * d.x + c * d.y)
        };
        let shift = s.direction() * (rng.random_range(-0.1..0.1));
        segs.push(LineSegment::new(rot(s.a) + shift, rot(s.b) + shift));
    }
    segs
}

/// Random free-form mask: seeded random walks of a round brush with varying
/// radius.
pub fn free_form_mask(seed: u64, width: usize, height: usize, strokes: usize, max_radius: f64) -> BinMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BinMask::filled(width, height, false);
    for _ in 0..strokes {
        let mut p = Point2::new(
            rng.random_range(0.0..width as f64),
            rng.random_range(0.0..height as f64),
        );
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let steps = rng.random_range(4..12);
        for _ in 0..steps {
            let r = rng.random_range(max_radius * 0.3..=max_radius);
            heading += rng.random_range(-1.0..1.0);
            let len = rng.random_range(5.0..25.0);
            let q = p + Point2::new(heading.cos(), heading.sin()) * len;
            let n = (len / 1.0).ceil() as usize;
            for k in 0..=n {
                let c = p + (q - p) * (k as f64 / n as f64);
                stamp_disc(&mut m, c, r);
            }
            p = Point2::new(q.x.clamp(0.0, width as f64 - 1.0), q.y.clamp(0.0, height as f64 - 1.0));
        }
    }
    m
}

fn stamp_disc(m: &mut BinMask, c: Point2, r: f64) {
    let (w, h) = m.dims();
    let x0 = (c.x - r).floor().max(0.0) as usize;
    let y0 = (c.y - r).floor().max(0.0) as usize;
    let x1 = ((c.x + r).ceil() as usize).min(w.saturating_sub(1));
    let y1 = ((c.y + r).ceil() as usize).min(h.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if Point2::pixel_center(x, y).distance(c) <= r {
                m.set(x, y, true);
            }
        }
    }
}

/// Smooth structured texture for inpainting evaluation: stripes plus a
/// gentle gradient.
pub fn stripes(width: usize, height: usize, period: f64, angle_deg: f64) -> GrayImage {
    let t = angle_deg.to_radians();
    GrayImage::from_fn(width, height, |x, y| {
        let s = (x as f64 * t.cos() + y as f64 * t.sin()) / period;
        let v = 128.0 + 70.0 * (std::f64::consts::TAU * s).sin() + 0.1 * x as f64 - 0.05 * y as f64;
        v.round().clamp(0.0, 255.0) as u8
    })
}
