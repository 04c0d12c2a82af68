//! Low-memory slicing: each mask component is inpainted inside its bounding
//! box plus a context margin, and the slices are stitched back.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InpaintBackend, InpaintError, InpaintRequest};
use crate::raster::{BinMask, GrayImage, Rect};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TilerConfig {
    pub context_radius: usize,
    pub max_chunk: ChunkSize,
}

impl Default for TilerConfig {
    fn default() -> Self {
        Self {
            context_radius: 100,
            max_chunk: ChunkSize {
                width: 600,
                height: 400,
            },
        }
    }
}

impl TilerConfig {
    pub fn validate(&self) -> Result<(), InpaintError> {
        let min = 2 * self.context_radius + 1;
        if self.max_chunk.width < min || self.max_chunk.height < min {
            return Err(InpaintError::InvalidConfig(format!(
                "max_chunk {}x{} must be at least {min} on each side",
                self.max_chunk.width, self.max_chunk.height
            )));
        }
        Ok(())
    }
}

/// One independently inpainted piece: its place in the image and the
/// cropped request (the original mask restricted to `rect`).
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub rect: Rect,
    pub request: InpaintRequest,
}

/// Bounding boxes of the 8-connected components of `mask`, in order of
/// their first pixel in raster order.
pub fn mask_components(mask: &BinMask) -> Vec<Rect> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if mask.get_signed(nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        boxes.push(Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1));
    }
    boxes
}

/// Tile `r` with pieces no larger than `max`, overlapping by `overlap`.
fn grid(r: Rect, max: ChunkSize, overlap: usize) -> Vec<Rect> {
    let axis = |start: usize, len: usize, max: usize| -> Vec<(usize, usize)> {
        if len <= max {
            return vec![(start, len)];
        }
        let n = (len - overlap).div_ceil(max - overlap);
        let tile = (len + (n - 1) * overlap).div_ceil(n);
        (0..n)
            .map(|i| {
                let s = if i + 1 == n {
                    start + len - tile
                } else {
                    start + i * (tile - overlap)
                };
                (s, tile)
            })
            .collect()
    };
    let xs = axis(r.x, r.width, max.width);
    let ys = axis(r.y, r.height, max.height);
    ys.iter()
        .flat_map(|&(y, th)| xs.iter().map(move |&(x, tw)| Rect::new(x, y, tw, th)))
        .collect()
}

/// Slices covering every masked pixel: component boxes grown by the
/// context radius, merged while they overlap, then cut into a grid when
/// larger than `max_chunk`. Slices without masked pixels are dropped.
pub fn split_for_inpaint(req: &InpaintRequest, cfg: &TilerConfig) -> Vec<Slice> {
    let (w, h) = req.image.dims();
    let mut boxes: Vec<Rect> = mask_components(&req.mask)
        .into_iter()
        .map(|b| b.dilate_clamped(cfg.context_radius, w, h))
        .collect();
    loop {
        let mut merged = false;
        'outer: for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].intersects(&boxes[j]) {
                    let u = boxes[i].union(&boxes[j]);
                    boxes[i] = u;
                    boxes.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    boxes
        .into_iter()
        .flat_map(|b| grid(b, cfg.max_chunk, cfg.context_radius))
        .filter_map(|rect| {
            let mask = req.mask.crop(rect);
            (!mask.is_empty()).then(|| Slice {
                rect,
                request: InpaintRequest {
                    image: req.image.crop(rect),
                    mask,
                },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TiledInpaint {
    pub image: GrayImage,
    pub slices: Vec<Rect>,
}

impl TiledInpaint {
    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    pub fn peak_slice_area(&self) -> usize {
        self.slices.iter().map(Rect::area).max().unwrap_or(0)
    }
}

/// Inpaint every slice with `backend` (in parallel) and write the masked
/// pixels back. A pixel covered by several slices takes their average
/// weighted by `1 + distance` to the nearest slice edge that is not an
/// image edge.
pub fn inpaint_tiled(
    req: &InpaintRequest,
    backend: &dyn InpaintBackend,
    cfg: &TilerConfig,
) -> Result<TiledInpaint, InpaintError> {
    req.validate()?;
    cfg.validate()?;
    let slices = split_for_inpaint(req, cfg);
    let filled: Vec<GrayImage> = slices
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            backend.inpaint(&s.request).map_err(|e| InpaintError::Slice {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let (w, h) = req.image.dims();
    let mut sum = vec![0.0f64; w * h];
    let mut weight = vec![0.0f64; w * h];
    for (s, img) in slices.iter().zip(&filled) {
        let r = s.rect;
        for y in 0..r.height {
            for x in 0..r.width {
                if !s.request.mask.get(x, y) {
                    continue;
                }
                let (gx, gy) = (r.x + x, r.y + y);
                let mut d = usize::MAX;
                if r.x > 0 {
                    d = d.min(x);
                }
                if r.right() < w {
                    d = d.min(r.width - 1 - x);
                }
                if r.y > 0 {
                    d = d.min(y);
                }
                if r.bottom() < h {
                    d = d.min(r.height - 1 - y);
                }
                let wt = if d == usize::MAX { 1.0 } else { 1.0 + d as f64 };
                sum[gy * w + gx] += wt * img.get(x, y) as f64;
                weight[gy * w + gx] += wt;
            }
        }
    }
    let mut out = req.image.clone();
    let mask = req.mask.data();
    for (i, px) in out.data_mut().iter_mut().enumerate() {
        if mask[i] {
            *px = (sum[i] / weight[i] + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(TiledInpaint {
        image: out,
        slices: slices.into_iter().map(|s| s.rect).collect(),
    })
}
