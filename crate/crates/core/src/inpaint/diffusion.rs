//! Harmonic fill: masked pixels relax to the average of their 4-neighbours
//! (Laplace equation with the unmasked ring as Dirichlet data and reflecting
//! image borders), solved by successive over-relaxation.

use serde::{Deserialize, Serialize};

use super::{InpaintBackend, InpaintError, InpaintRequest};
use crate::raster::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionInpainter {
    pub max_iterations: usize,
    /// Stop once no pixel moves by this much (intensity levels) in a sweep.
    pub tolerance: f64,
}

impl Default for DiffusionInpainter {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionOutcome {
    pub image: GrayImage,
    pub iterations: usize,
    pub converged: bool,
}

pub fn inpaint_diffusion(
    req: &InpaintRequest,
    max_iterations: usize,
    tolerance: f64,
) -> Result<DiffusionOutcome, InpaintError> {
    req.validate()?;
    if !(tolerance > 0.0) {
        return Err(InpaintError::InvalidConfig("tolerance must be > 0".into()));
    }
    let (w, h) = req.image.dims();
    let Some(bbox) = req.mask.bounding_rect() else {
        return Ok(DiffusionOutcome {
            image: req.image.clone(),
            iterations: 0,
            converged: true,
        });
    };
    let mask = req.mask.data();
    let mut v: Vec<f64> = req.image.data().iter().map(|&p| p as f64).collect();

    let masked: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };
    let stencil: Vec<[usize; 4]> = masked.iter().map(|&i| neighbours(i)).collect();

    // Start from the mean of the known ring.
    let (mut ring_sum, mut ring_n) = (0.0, 0usize);
    for n in &stencil {
        for &j in n.iter().filter(|&&j| j != usize::MAX && !mask[j]) {
            ring_sum += v[j];
            ring_n += 1;
        }
    }
    let start = ring_sum / ring_n.max(1) as f64;
    for &i in &masked {
        v[i] = start;
    }

    let span = bbox.width.max(bbox.height) as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / (span + 1.0)).sin());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut max_step = 0.0f64;
        for (&i, n) in masked.iter().zip(&stencil) {
            let (mut s, mut c) = (0.0, 0.0);
            for &j in n.iter().filter(|&&j| j != usize::MAX) {
                s += v[j];
                c += 1.0;
            }
            let step = omega * (s / c - v[i]);
            v[i] += step;
            max_step = max_step.max(step.abs());
        }
        if max_step < tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("diffusion stopped after {iterations} sweeps without converging");
    }

    let mut out = req.image.clone();
    let data = out.data_mut();
    for &i in &masked {
        data[i] = (v[i] + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    Ok(DiffusionOutcome {
        image: out,
        iterations,
        converged,
    })
}

impl InpaintBackend for DiffusionInpainter {
    fn name(&self) -> &str {
        "diffusion"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<GrayImage, InpaintError> {
        Ok(inpaint_diffusion(req, self.max_iterations, self.tolerance)?.image)
    }
}
