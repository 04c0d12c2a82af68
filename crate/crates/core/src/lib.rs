//! Single-image facade reconstruction: matting, low-signal line detection,
//! vanishing-point voting, rectification, tiled occlusion inpainting and
//! cuboid city-block assembly with glTF export.

pub mod inpaint;
pub mod lines;
pub mod matting;
pub mod model3d;
pub mod pipeline;
pub mod raster;
pub mod rectify;
pub mod synthetic;
pub mod vanish;
