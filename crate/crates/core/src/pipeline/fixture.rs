//! Synthetic two-block city on disk: rendered facade photos with soft
//! facade masks, one occluder per facade, and a manifest tying them
//! together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{BlockEntry, FacadeEntry, PipelineConfig, SceneManifest};
use super::PipelineError;
use crate::raster::{save_gray_png, GrayImage, Point2, ProbMask};
use crate::synthetic::random_rectangle_scene;

#[derive(Clone, Debug)]
pub struct FixtureCity {
    pub manifest: PathBuf,
    /// True width / height of each rendered facade.
    pub aspects: BTreeMap<String, f64>,
}

/// `(id, width_m, block, neighbor, same_building)`. Block `west` is a
/// 20 x 16 m loop with a 6 m mid-block facade; `east` is one building.
const LAYOUT: [(&str, f64, &str, &str, bool); 6] = [
    ("w1", 20.0, "west", "w2", true),
    ("w2", 16.0, "west", "w3", true),
    ("w3", 20.0, "west", "w4", true),
    ("w4", 10.0, "west", "w5", true),
    ("w5", 6.0, "west", "w1", false),
    ("e1", 12.0, "east", "e1", false),
];

fn save(img: &GrayImage, path: &Path) -> Result<(), PipelineError> {
    save_gray_png(img, path).map_err(|e| PipelineError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn prob_to_gray(m: &ProbMask) -> GrayImage {
    GrayImage::from_fn(m.width(), m.height(), |x, y| (m.get(x, y) * 255.0).round() as u8)
}

/// Point at `(u, v)` in the facade, bilinear between the image corners.
fn on_facade(c: &[Point2; 4], u: f64, v: f64) -> Point2 {
    let top = c[0] * (1.0 - u) + c[1] * u;
    let bottom = c[3] * (1.0 - u) + c[2] * u;
    top * (1.0 - v) + bottom * v
}

/// Write six `width x height` facade images with masks and a manifest to
/// `dir`.
pub fn write_fixture_city(
    dir: impl AsRef<Path>,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<FixtureCity, PipelineError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Output {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut facades = Vec::new();
    let mut aspects = BTreeMap::new();
    for (i, &(id, width_m, block, neighbor, same)) in LAYOUT.iter().enumerate() {
        let scene = random_rectangle_scene(seed.wrapping_mul(31).wrapping_add(i as u64), width, height, 30.0);
        let mut image = scene.image.clone();

        // A textured disc standing in front of the lower facade.
        let centre = on_facade(&scene.corners, rng.random_range(0.25..0.75), rng.random_range(0.6..0.85));
        let radius = 0.07 * height as f64;
        let base: f64 = rng.random_range(30.0..60.0);
        let occ = ProbMask::new(
            width,
            height,
            (0..width * height)
                .map(|k| {
                    let p = Point2::pixel_center(k % width, k / width);
                    (radius + 0.5 - p.distance(centre)).clamp(0.0, 1.0)
                })
                .collect(),
        )
        .expect("coverage in [0, 1]");
        for (k, px) in image.data_mut().iter_mut().enumerate() {
            let a = occ.data()[k];
            if a > 0.0 {
                let leaf = base + 25.0 * ((k as f64 * 0.37).sin() * (k as f64 * 0.011).cos()).abs();
                *px = (a * leaf + (1.0 - a) * *px as f64).round() as u8;
            }
        }

        let img_name = format!("{id}.png");
        let mask_name = format!("{id}_facade.png");
        let occ_name = format!("{id}_occlusion.png");
        save(&image, &dir.join(&img_name))?;
        save(&prob_to_gray(&scene.coverage), &dir.join(&mask_name))?;
        save(&prob_to_gray(&occ), &dir.join(&occ_name))?;
        aspects.insert(id.to_string(), scene.aspect);
        facades.push(FacadeEntry {
            id: id.into(),
            image: img_name.into(),
            facade_mask: mask_name.into(),
            occlusion_masks: vec![occ_name.into()],
            width_m,
            block: block.into(),
            neighbor: neighbor.into(),
            same_building: same,
            cardinal: 0,
        });
    }
    let manifest = SceneManifest {
        facades,
        blocks: vec![
            BlockEntry {
                id: "west".into(),
                offset: (0.0, 0.0),
                start: None,
            },
            BlockEntry {
                id: "east".into(),
                offset: (40.0, 0.0),
                start: None,
            },
        ],
        config: PipelineConfig::default(),
    };
    let path = dir.join("manifest.json");
    manifest.write(&path).map_err(|e| PipelineError::Output {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    Ok(FixtureCity { manifest: path, aspects })
}
