//! Exemplar fill: the mask is peeled from its boundary inward, and each
//! patch around a front pixel is completed from the best-matching fully
//! known patch nearby.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InpaintBackend, InpaintError, InpaintRequest};
use crate::raster::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    /// Patch side lengths in pixels; the largest that finds a source wins.
    pub min_patch: usize,
    pub max_patch: usize,
    /// Sources are searched within this many pixels of the target patch.
    pub search_area: usize,
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            min_patch: 50,
            max_patch: 73,
            search_area: 100,
            seed: 0,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<(), InpaintError> {
        if self.min_patch < 3 || self.min_patch > self.max_patch {
            return Err(InpaintError::InvalidConfig(format!(
                "patch sizes need 3 <= min ({}) <= max ({})",
                self.min_patch, self.max_patch
            )));
        }
        if self.search_area == 0 {
            return Err(InpaintError::InvalidConfig("search_area must be > 0".into()));
        }
        Ok(())
    }

    /// Sizes tried per target, largest first, capped by the image.
    fn sizes(&self, w: usize, h: usize) -> Vec<usize> {
        let cap = w.min(h);
        let mut s: Vec<usize> = [self.max_patch, (self.min_patch + self.max_patch) / 2, self.min_patch]
            .into_iter()
            .map(|s| s.min(cap))
            .collect();
        s.dedup();
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PatchInpainter(pub PatchConfig);

/// Summed-area table of originally masked pixels, for O(1) "fully known"
/// tests on candidate sources.
struct HoleCounts {
    w: usize,
    sat: Vec<u32>,
}

impl HoleCounts {
    fn new(mask: &[bool], w: usize, h: usize) -> Self {
        let mut sat = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0;
            for x in 0..w {
                row += mask[y * w + x] as u32;
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, sat }
    }

    fn is_clear(&self, x: usize, y: usize, s: usize) -> bool {
        let r = self.w + 1;
        let (x1, y1) = (x + s, y + s);
        self.sat[y1 * r + x1] + self.sat[y * r + x] == self.sat[y * r + x1] + self.sat[y1 * r + x]
    }
}

struct Canvas<'a> {
    w: usize,
    h: usize,
    vals: Vec<u8>,
    known: Vec<bool>,
    holes: &'a HoleCounts,
}

impl Canvas<'_> {
    /// Sum of squared differences over the known pixels of the target,
    /// sampling every `step`-th row and column.
    fn ssd(&self, t: (usize, usize), src: (usize, usize), s: usize, step: usize, bound: u64) -> u64 {
        let mut acc = 0u64;
        for dy in (0..s).step_by(step) {
            let ti = (t.1 + dy) * self.w + t.0;
            let si = (src.1 + dy) * self.w + src.0;
            for dx in (0..s).step_by(step) {
                if self.known[ti + dx] {
                    let d = self.vals[ti + dx] as i64 - self.vals[si + dx] as i64;
                    acc += (d * d) as u64;
                }
            }
            if acc >= bound {
                return acc;
            }
        }
        acc
    }

    fn best_source(&self, t: (usize, usize), s: usize, search: usize, jitter: (usize, usize)) -> Option<(usize, usize)> {
        let x_lo = t.0.saturating_sub(search);
        let x_hi = (t.0 + search).min(self.w - s);
        let y_lo = t.1.saturating_sub(search);
        let y_hi = (t.1 + search).min(self.h - s);
        let scan = |xs: Vec<usize>, ys: Vec<usize>, step: usize| {
            let mut best: Option<(u64, (usize, usize))> = None;
            for &y in &ys {
                for &x in &xs {
                    if !self.holes.is_clear(x, y, s) {
                        continue;
                    }
                    let bound = best.map_or(u64::MAX, |b| b.0);
                    let e = self.ssd(t, (x, y), s, step, bound);
                    if e < bound {
                        best = Some((e, (x, y)));
                    }
                }
            }
            best.map(|b| b.1)
        };

        // Coarse grid with a seeded offset, then a dense search around the winner.
        let g = (s / 8).max(1);
        let sub = (s / 16).max(1);
        let coarse = scan(
            (x_lo + jitter.0 % g..=x_hi).step_by(g).collect(),
            (y_lo + jitter.1 % g..=y_hi).step_by(g).collect(),
            sub,
        );
        let (cx, cy) = match coarse {
            Some(c) => c,
            None => return scan((x_lo..=x_hi).collect(), (y_lo..=y_hi).collect(), 1),
        };
        scan(
            (cx.saturating_sub(g).max(x_lo)..=(cx + g).min(x_hi)).collect(),
            (cy.saturating_sub(g).max(y_lo)..=(cy + g).min(y_hi)).collect(),
            1,
        )
    }
}

pub fn inpaint_patch(req: &InpaintRequest, cfg: &PatchConfig) -> Result<GrayImage, InpaintError> {
    req.validate()?;
    cfg.validate()?;
    if req.mask.is_empty() {
        return Ok(req.image.clone());
    }
    let (w, h) = req.image.dims();
    let mask = req.mask.data();
    let holes = HoleCounts::new(mask, w, h);
    let mut canvas = Canvas {
        w,
        h,
        vals: req.image.data().to_vec(),
        known: mask.iter().map(|&m| !m).collect(),
        holes: &holes,
    };
    let sizes = cfg.sizes(w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    loop {
        let front: Vec<usize> = (0..w * h)
            .filter(|&i| {
                if canvas.known[i] {
                    return false;
                }
                let (x, y) = (i % w, i / w);
                (x > 0 && canvas.known[i - 1])
                    || (x + 1 < w && canvas.known[i + 1])
                    || (y > 0 && canvas.known[i - w])
                    || (y + 1 < h && canvas.known[i + w])
            })
            .collect();
        if front.is_empty() {
            break;
        }
        for i in front {
            if canvas.known[i] {
                continue;
            }
            let (px, py) = (i % w, i / w);
            let jitter = (rng.random_range(0..64usize), rng.random_range(0..64usize));
            let mut done = false;
            for &s in &sizes {
                let t = (
                    px.saturating_sub(s / 2).min(w - s),
                    py.saturating_sub(s / 2).min(h - s),
                );
                if let Some(src) = canvas.best_source(t, s, cfg.search_area, jitter) {
                    for dy in 0..s {
                        for dx in 0..s {
                            let ti = (t.1 + dy) * w + t.0 + dx;
                            if !canvas.known[ti] {
                                canvas.vals[ti] = canvas.vals[(src.1 + dy) * w + src.0 + dx];
                                canvas.known[ti] = true;
                            }
                        }
                    }
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(InpaintError::NoSourcePatch {
                    x: px,
                    y: py,
                    size: *sizes.last().expect("at least one size"),
                    search: cfg.search_area,
                });
            }
        }
    }
    Ok(GrayImage::new(w, h, canvas.vals).expect("dims unchanged"))
}

impl InpaintBackend for PatchInpainter {
    fn name(&self) -> &str {
        "patch"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<GrayImage, InpaintError> {
        inpaint_patch(req, &self.0)
    }
}
