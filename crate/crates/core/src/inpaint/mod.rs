//! Occlusion removal on rectified facades: pluggable fill backends and a
//! slicing harness that bounds the working set of every backend call.

mod diffusion;
mod eval;
mod patch;
mod tiler;

pub use diffusion::{inpaint_diffusion, DiffusionInpainter, DiffusionOutcome};
pub use eval::{eval_truth, evaluate, EvalConfig, EvalMetrics, UntiledComparison};
pub use patch::{inpaint_patch, PatchConfig, PatchInpainter};
pub use tiler::{
    inpaint_tiled, mask_components, split_for_inpaint, ChunkSize, Slice, TiledInpaint,
    TilerConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinMask, GrayImage};

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("dimension mismatch: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },
    #[error("mask covers every pixel, nothing to fill from")]
    FullMask,
    #[error("no fully known {size}x{size} source patch within {search} px of ({x}, {y})")]
    NoSourcePatch {
        x: usize,
        y: usize,
        size: usize,
        search: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("slice {index}: {source}")]
    Slice {
        index: usize,
        #[source]
        source: Box<InpaintError>,
    },
}

/// Image plus the pixels to synthesize (`true` = fill).
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub image: GrayImage,
    pub mask: BinMask,
}

impl InpaintRequest {
    pub fn new(image: GrayImage, mask: BinMask) -> Result<Self, InpaintError> {
        let req = Self { image, mask };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), InpaintError> {
        if self.image.dims() != self.mask.dims() {
            return Err(InpaintError::DimensionMismatch {
                image: self.image.dims(),
                mask: self.mask.dims(),
            });
        }
        if self.mask.count() == self.mask.data().len() {
            return Err(InpaintError::FullMask);
        }
        Ok(())
    }
}

/// A fill method. Implementations must return an image of the input's size
/// in which every pixel outside the mask is unchanged.
pub trait InpaintBackend: Sync {
    fn name(&self) -> &str;
    /// Same request (and seed) gives the same bytes.
    fn deterministic(&self) -> bool;
    /// Largest input the backend accepts, if bounded.
    fn max_dims(&self) -> Option<(usize, usize)> {
        None
    }
    fn inpaint(&self, req: &InpaintRequest) -> Result<GrayImage, InpaintError>;
}

/// Mean absolute and mean squared error on intensities scaled to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub l1_mean: f64,
    pub l2_mean: f64,
}

/// Per-pixel losses of `result` against `truth`, over `region` when given.
/// An empty region gives zero losses.
pub fn losses(result: &GrayImage, truth: &GrayImage, region: Option<&BinMask>) -> Losses {
    assert_eq!(result.dims(), truth.dims(), "loss operands differ in size");
    let (mut l1, mut l2, mut n) = (0.0, 0.0, 0usize);
    for (i, (&a, &b)) in result.data().iter().zip(truth.data()).enumerate() {
        if region.is_some_and(|m| !m.data()[i]) {
            continue;
        }
        let d = (a as f64 - b as f64) / 255.0;
        l1 += d.abs();
        l2 += d * d;
        n += 1;
    }
    if n == 0 {
        return Losses {
            l1_mean: 0.0,
            l2_mean: 0.0,
        };
    }
    Losses {
        l1_mean: l1 / n as f64,
        l2_mean: l2 / n as f64,
    }
}

/// Pixels outside the mask compare bit-identical.
pub fn conserves_unmasked(req: &InpaintRequest, out: &GrayImage) -> bool {
    out.dims() == req.image.dims()
        && req
            .image
            .data()
            .iter()
            .zip(out.data())
            .zip(req.mask.data())
            .all(|((a, b), &m)| m || a == b)
}
