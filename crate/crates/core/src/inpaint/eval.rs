//! Held-out evaluation: seeded fronto-parallel facade textures with
//! free-form masks, filled through the tiler and scored against the truth.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{inpaint_tiled, losses, InpaintBackend, InpaintError, InpaintRequest, TilerConfig};
use crate::raster::GrayImage;
use crate::synthetic::{free_form_mask, FacadeTexture};
use crate::vanish::reduction_pct;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub pairs: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub strokes: usize,
    pub max_radius: f64,
    /// Also fill each pair as one whole-image call, for the reduction
    /// figures.
    pub compare_untiled: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pairs: 8,
            width: 1200,
            height: 800,
            seed: 0,
            strokes: 6,
            max_radius: 14.0,
            compare_untiled: false,
        }
    }
}

/// Whole-image baseline and the relative savings of the tiled path.
/// `peak_area` is the largest pixel count handed to one backend call, a
/// proxy for working-set size rather than a heap measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UntiledComparison {
    pub wall_time_ms: f64,
    pub peak_area: usize,
    pub time_reduction_pct: f64,
    pub peak_area_reduction_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub backend: String,
    pub pairs: usize,
    /// Mean over pairs of the per-pair mean loss over masked pixels, on
    /// intensities scaled to `[0, 1]`.
    pub l1_mean: f64,
    pub l2_mean: f64,
    pub wall_time_ms: f64,
    /// Total slices over all pairs.
    pub slice_count: usize,
    pub peak_slice_area: usize,
    pub untiled: Option<UntiledComparison>,
}

/// Ground truth for pair `index`: a window grid of random proportions.
pub fn eval_truth(cfg: &EvalConfig, index: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let tex = FacadeTexture {
        width: cfg.width as f64,
        height: cfg.height as f64,
        columns: rng.random_range(3..10),
        rows: rng.random_range(2..7),
        wall: rng.random_range(140..220),
        window: rng.random_range(20..90),
    };
    tex.render_flat(1.0)
}

pub fn evaluate(
    backend: &dyn InpaintBackend,
    tiler: &TilerConfig,
    cfg: &EvalConfig,
) -> Result<EvalMetrics, InpaintError> {
    let mut m = EvalMetrics {
        backend: backend.name().to_string(),
        pairs: cfg.pairs,
        l1_mean: 0.0,
        l2_mean: 0.0,
        wall_time_ms: 0.0,
        slice_count: 0,
        peak_slice_area: 0,
        untiled: None,
    };
    let mut untiled_ms = 0.0;
    for i in 0..cfg.pairs {
        let truth = eval_truth(cfg, i);
        let mask = free_form_mask(
            cfg.seed.wrapping_add(i as u64),
            cfg.width,
            cfg.height,
            cfg.strokes,
            cfg.max_radius,
        );
        let req = InpaintRequest::new(truth.clone(), mask)?;
        let t = Instant::now();
        let out = inpaint_tiled(&req, backend, tiler)?;
        m.wall_time_ms += t.elapsed().as_secs_f64() * 1e3;
        let l = losses(&out.image, &truth, Some(&req.mask));
        m.l1_mean += l.l1_mean;
        m.l2_mean += l.l2_mean;
        m.slice_count += out.slice_count();
        m.peak_slice_area = m.peak_slice_area.max(out.peak_slice_area());
        if cfg.compare_untiled {
            let t = Instant::now();
            backend.inpaint(&req)?;
            untiled_ms += t.elapsed().as_secs_f64() * 1e3;
        }
    }
    if cfg.pairs > 0 {
        m.l1_mean /= cfg.pairs as f64;
        m.l2_mean /= cfg.pairs as f64;
    }
    if cfg.compare_untiled {
        let area = cfg.width * cfg.height;
        m.untiled = Some(UntiledComparison {
            wall_time_ms: untiled_ms,
            peak_area: area,
            time_reduction_pct: reduction_pct(untiled_ms, m.wall_time_ms),
            peak_area_reduction_pct: reduction_pct(area as f64, m.peak_slice_area as f64),
        });
    }
    Ok(m)
}
