//! Trimap generation and closed-form alpha matting for grayscale images.
//!
//! The matting Laplacian is built from local windows of radius
//! `window_radius`. For a single intensity channel the window covariance
//! collapses to a scalar variance, so every entry is
//!
//! ```text
//! L_ij = sum_k [ delta_ij - (1 + (I_i - mu_k)(I_j - mu_k) / (var_k + eps / n)) / n ]
//! ```
//!
//! summed over the windows `k` that contain both `i` and `j` (`n` pixels per
//! window). Constrained pixels are folded into the right-hand side and only
//! the unknown block is solved, with Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{alpha_to_byte, BinMask, GrayImage, ProbMask, Trimap, TrimapLabel};

#[derive(Debug, Error, PartialEq)]
pub enum MattingError {
    #[error("trimap has no foreground pixel")]
    DegenerateTrimap,
    #[error("trimap needs at least one foreground and one background pixel")]
    MissingConstraint,
    #[error("solver stopped after {iterations} iterations at relative residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("image is {image:?} but trimap is {trimap:?}")]
    DimensionMismatch {
        image: (usize, usize),
        trimap: (usize, usize),
    },
    #[error("invalid matting configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MattingConfig {
    pub fg_threshold: f64,
    pub bg_threshold: f64,
    pub window_radius: usize,
    pub epsilon: f64,
    /// Relative residual `|r| / |b|` at which the solver stops.
    pub solver_tolerance: f64,
    pub max_iterations: usize,
    pub binarize_threshold: f64,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self {
            fg_threshold: 0.95,
            bg_threshold: 0.05,
            window_radius: 1,
            epsilon: 1e-5,
            solver_tolerance: 1e-6,
            max_iterations: 2000,
            binarize_threshold: 0.1,
        }
    }
}

impl MattingConfig {
    pub fn validate(&self) -> Result<(), MattingError> {
        let bad = |m: &str| Err(MattingError::InvalidConfig(m.to_string()));
        if !(0.0 <= self.bg_threshold
            && self.bg_threshold < self.fg_threshold
            && self.fg_threshold <= 1.0)
        {
            return bad("need 0 <= bg_threshold < fg_threshold <= 1");
        }
        if self.epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("epsilon must be positive");
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return bad("binarize_threshold must lie in (0, 1)");
        }
        if self.window_radius == 0 {
            return bad("window_radius must be at least 1");
        }
        if self.solver_tolerance.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("solver_tolerance must be positive");
        }
        Ok(())
    }
}

/// Per-pixel alpha in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte {
    width: usize,
    height: usize,
    alpha: Vec<f64>,
}

impl AlphaMatte {
    /// Values are clamped into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut alpha: Vec<f64>) -> Self {
        assert_eq!(alpha.len(), width * height, "alpha length mismatch");
        for a in &mut alpha {
            *a = if a.is_nan() { 0.0 } else { a.clamp(0.0, 1.0) };
        }
        Self {
            width,
            height,
            alpha,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_mask(mask: &BinMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            alpha: mask
                .data()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
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

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.width + x]
    }

    /// 8-bit rendering, `floor(255 a + 0.5)`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.alpha.iter().map(|&a| alpha_to_byte(a)).collect(),
        )
        .expect("matte dimensions are valid")
    }
}

pub fn make_trimap(mask: &ProbMask, cfg: &MattingConfig) -> Result<Trimap, MattingError> {
    cfg.validate()?;
    let labels: Vec<TrimapLabel> = mask
        .data()
        .iter()
        .map(|&p| {
            if p >= cfg.fg_threshold {
                TrimapLabel::Foreground
            } else if p <= cfg.bg_threshold {
                TrimapLabel::Background
            } else {
                TrimapLabel::Unknown
            }
        })
        .collect();
    if !labels.contains(&TrimapLabel::Foreground) {
        return Err(MattingError::DegenerateTrimap);
    }
    Ok(Trimap::new(mask.width(), mask.height(), labels).expect("same dimensions as mask"))
}

/// Mean and variance of every full window, indexed by window center.
struct WindowStats {
    width: usize,
    height: usize,
    radius: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl WindowStats {
    fn new(intensity: &[f64], width: usize, height: usize, radius: usize) -> Self {
        let mut mean = vec![0.0; width * height];
        let mut var = vec![0.0; width * height];
        let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
        if width > 2 * radius && height > 2 * radius {
            for cy in radius..height - radius {
                for cx in radius..width - radius {
                    let mut s = 0.0;
                    for y in cy - radius..=cy + radius {
                        for x in cx - radius..=cx + radius {
                            s += intensity[y * width + x];
                        }
                    }
                    let mu = s / n;
                    let mut v = 0.0;
                    for y in cy - radius..=cy + radius {
                        for x in cx - radius..=cx + radius {
                            let d = intensity[y * width + x] - mu;
                            v += d * d;
                        }
                    }
                    mean[cy * width + cx] = mu;
                    var[cy * width + cx] = v / n;
                }
            }
        }
        Self {
            width,
            height,
            radius,
            mean,
            var,
        }
    }

    /// Window centers whose window contains `(x, y)`.
    fn centers_covering(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
        let r = self.radius;
        let (w, h) = (self.width, self.height);
        let x_lo = x.saturating_sub(r).max(r);
        let y_lo = y.saturating_sub(r).max(r);
        let x_hi = (x + r).min(w.saturating_sub(r + 1));
        let y_hi = (y + r).min(h.saturating_sub(r + 1));
        let valid = w > 2 * r && h > 2 * r;
        (y_lo..=y_hi)
            .flat_map(move |cy| (x_lo..=x_hi).map(move |cx| (cx, cy)))
            .filter(move |_| valid)
    }
}

fn normalized_intensity(image: &GrayImage) -> Vec<f64> {
    image.data().iter().map(|&v| v as f64 / 255.0).collect()
}

/// Non-zero entries of row `(x, y)` of the matting Laplacian as
/// `(pixel index, value)` pairs in ascending index order.
pub fn laplacian_row(image: &GrayImage, cfg: &MattingConfig, x: usize, y: usize) -> Vec<(usize, f64)> {
    let intensity = normalized_intensity(image);
    let stats = WindowStats::new(&intensity, image.width(), image.height(), cfg.window_radius);
    let mut row = RowBuilder::new(cfg.window_radius);
    row.build(&intensity, &stats, cfg.epsilon, x, y);
    row.entries(image.width(), image.height(), x, y)
}

/// Accumulates one Laplacian row in a dense `(4r + 1)^2` neighbourhood buffer.
struct RowBuilder {
    radius: usize,
    side: usize,
    buf: Vec<f64>,
}

impl RowBuilder {
    fn new(radius: usize) -> Self {
        let side = 4 * radius + 1;
        Self {
            radius,
            side,
            buf: vec![0.0; side * side],
        }
    }

    fn build(&mut self, intensity: &[f64], stats: &WindowStats, eps: f64, x: usize, y: usize) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        let r = self.radius;
        let w = stats.width;
        let n = ((2 * r + 1) * (2 * r + 1)) as f64;
        let ii = intensity[y * w + x];
        let origin_x = x as isize - 2 * r as isize;
        let origin_y = y as isize - 2 * r as isize;
        for (cx, cy) in stats.centers_covering(x, y) {
            let c = cy * w + cx;
            let mu = stats.mean[c];
            let denom = stats.var[c] + eps / n;
            let di = ii - mu;
            for jy in cy - r..=cy + r {
                for jx in cx - r..=cx + r {
                    let dj = intensity[jy * w + jx] - mu;
                    let mut v = -(1.0 + di * dj / denom) / n;
                    if jx == x && jy == y {
                        v += 1.0;
                    }
                    let bx = (jx as isize - origin_x) as usize;
                    let by = (jy as isize - origin_y) as usize;
                    self.buf[by * self.side + bx] += v;
                }
            }
        }
    }

    fn entries(&self, width: usize, height: usize, x: usize, y: usize) -> Vec<(usize, f64)> {
        let r2 = 2 * self.radius as isize;
        let mut out = Vec::new();
        for by in 0..self.side {
            for bx in 0..self.side {
                let v = self.buf[by * self.side + bx];
                if v == 0.0 {
                    continue;
                }
                let jx = x as isize + bx as isize - r2;
                let jy = y as isize + by as isize - r2;
                if jx >= 0 && jy >= 0 && (jx as usize) < width && (jy as usize) < height {
                    out.push((jy as usize * width + jx as usize, v));
                }
            }
        }
        out
    }
}

/// Compressed sparse rows over the unknown pixels.
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients. Returns the iteration count.
fn pcg(
    a: &Csr,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize, MattingError> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; n];
    a.mul(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    for it in 0..max_iter {
        if residual < tol {
            return Ok(it);
        }
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
    }
    if residual < tol {
        return Ok(max_iter);
    }
    Err(MattingError::SolverDiverged {
        iterations: max_iter,
        residual,
    })
}

/// Closed-form matte: constrained pixels keep their trimap value, unknown
/// pixels minimize the Laplacian quadratic form.
pub fn solve_matte(
    image: &GrayImage,
    trimap: &Trimap,
    cfg: &MattingConfig,
) -> Result<AlphaMatte, MattingError> {
    cfg.validate()?;
    if image.dims() != trimap.dims() {
        return Err(MattingError::DimensionMismatch {
            image: image.dims(),
            trimap: trimap.dims(),
        });
    }
    if trimap.count(TrimapLabel::Foreground) == 0 || trimap.count(TrimapLabel::Background) == 0 {
        return Err(MattingError::MissingConstraint);
    }
    let (w, h) = image.dims();
    let mut alpha: Vec<f64> = trimap
        .data()
        .iter()
        .map(|l| match l {
            TrimapLabel::Foreground => 1.0,
            _ => 0.0,
        })
        .collect();

    let mut unknown_index = vec![usize::MAX; w * h];
    let mut unknown = Vec::new();
    for (i, l) in trimap.data().iter().enumerate() {
        if *l == TrimapLabel::Unknown {
            unknown_index[i] = unknown.len();
            unknown.push(i);
        }
    }
    if unknown.is_empty() {
        return Ok(AlphaMatte::new(w, h, alpha));
    }

    let intensity = normalized_intensity(image);
    let stats = WindowStats::new(&intensity, w, h, cfg.window_radius);
    let mut row = RowBuilder::new(cfg.window_radius);

    // Unknown pixels covered by no window have an all-zero row; they keep
    // alpha = 0 and are left out of the system.
    let mut system_index = vec![usize::MAX; unknown.len()];
    let mut csr = Csr {
        row_ptr: vec![0],
        cols: Vec::new(),
        vals: Vec::new(),
    };
    let mut rhs = Vec::new();
    let mut diag = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(unknown.len());
    let mut solved = Vec::new();
    for (k, &p) in unknown.iter().enumerate() {
        let (x, y) = (p % w, p / w);
        row.build(&intensity, &stats, cfg.epsilon, x, y);
        let entries = row.entries(w, h, x, y);
        let d = entries
            .iter()
            .find(|(j, _)| *j == p)
            .map(|(_, v)| *v)
            .unwrap_or(0.0);
        if d > 0.0 {
            system_index[k] = solved.len();
            solved.push(p);
        }
        rows.push(entries);
    }
    for (k, entries) in rows.iter().enumerate() {
        if system_index[k] == usize::MAX {
            continue;
        }
        let mut b = 0.0;
        let mut d = 0.0;
        for &(j, v) in entries {
            let uj = unknown_index[j];
            if uj == usize::MAX {
                b -= v * alpha[j];
            } else if system_index[uj] != usize::MAX {
                if j == unknown[k] {
                    d = v;
                }
                csr.cols.push(system_index[uj]);
                csr.vals.push(v);
            }
        }
        csr.row_ptr.push(csr.cols.len());
        rhs.push(b);
        diag.push(d);
    }

    let mut x = vec![0.0; solved.len()];
    pcg(
        &csr,
        &diag,
        &rhs,
        &mut x,
        cfg.solver_tolerance,
        cfg.max_iterations,
    )?;
    for (i, &p) in solved.iter().enumerate() {
        alpha[p] = x[i];
    }
    Ok(AlphaMatte::new(w, h, alpha))
}

/// True where alpha exceeds `binarize_threshold`.
pub fn binarize_matte(matte: &AlphaMatte, cfg: &MattingConfig) -> BinMask {
    BinMask::new(
        matte.width,
        matte.height,
        matte
            .alpha
            .iter()
            .map(|&a| a > cfg.binarize_threshold)
            .collect(),
    )
    .expect("matte dimensions are valid")
}
