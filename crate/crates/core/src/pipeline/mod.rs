//! End-to-end reconstruction from a scene manifest: per-facade matting,
//! vanishing points, rectification and occlusion inpainting, then block
//! assembly and glTF export.

mod fixture;
mod manifest;

pub use fixture::{write_fixture_city, FixtureCity};
pub use manifest::{Backend, BlockEntry, FacadeEntry, ManifestError, PipelineConfig, SceneManifest};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inpaint::{inpaint_tiled, InpaintBackend, InpaintRequest, PatchInpainter};
use crate::lines::{detect_segments, render_overlay, segments_json};
use crate::matting::{binarize_matte, make_trimap, solve_matte, AlphaMatte, MattingError};
use crate::model3d::{
    assemble_city, export_gltf, layout_block, BlockLayout, BlockReport, FacadeRecord, FacadeTexture, ModelError,
};
use crate::raster::{
    load_image, load_prob_mask, save_gray_alpha_png, save_gray_png, BinMask, GrayImage, Trimap,
};
use crate::rectify::{rectify, scale_to_world, warp_matte, FacadeQuad, RectifiedFacade};
use crate::vanish::{
    estimate_vanishing_points, measure_reduction, reduction_metrics, ReductionReport, StageCount, VanishingPoint,
    VpConfig,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("cannot write {path}: {reason}")]
    Output { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Command-line switches that override the manifest configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Write intermediate images and geometry per facade.
    pub debug: bool,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    /// Disable collinear and candidate deduplication.
    pub no_dedup: bool,
    /// Also measure the vanishing-point reduction report.
    pub metrics: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Matting,
    VanishingPoints,
    Rectify,
    Inpaint,
    Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeFailure {
    pub stage: Stage,
    pub reason: String,
}

/// Wall time per stage, milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub matting_ms: f64,
    pub vanishing_points_ms: f64,
    pub rectify_ms: f64,
    pub inpaint_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VpSummary {
    pub candidates_raw: usize,
    pub candidates: usize,
    pub relaxed: bool,
    pub accumulation_segments: usize,
    pub voting_segments: usize,
    pub pair: [VanishingPoint; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifySummary {
    pub quad: FacadeQuad,
    pub focal: f64,
    pub approximate_focal: bool,
    pub aspect: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub world_width_m: f64,
    pub world_height_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintSummary {
    pub backend: Backend,
    pub masked_pixels: usize,
    pub slice_count: usize,
    pub peak_slice_area: usize,
    /// The patch backend failed and diffusion filled the facade instead.
    pub fell_back: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeReport {
    pub id: String,
    pub block: String,
    pub failure: Option<FacadeFailure>,
    pub timings: StageTimings,
    pub vp: Option<VpSummary>,
    pub rectification: Option<RectifySummary>,
    pub inpaint: Option<InpaintSummary>,
    /// Texture path relative to the output directory.
    pub texture: Option<String>,
    pub warnings: Vec<String>,
}

impl FacadeReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Candidate counts and timings summed over all facades, for the four
/// accumulate-and-vote variants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionSection {
    pub baseline: StageCount,
    pub collinear: StageCount,
    pub infinite: StageCount,
    pub combined: StageCount,
    pub report: ReductionReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub facades_ms: f64,
    pub modeling_ms: f64,
    pub export_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// One entry per manifest facade, sorted by id.
    pub facades: Vec<FacadeReport>,
    pub blocks: Vec<BlockReport>,
    pub reduction: Option<ReductionSection>,
    pub warnings: Vec<String>,
    pub timings: RunTimings,
    /// glTF path relative to the output directory.
    pub gltf: String,
}

impl RunReport {
    pub fn failed_facades(&self) -> usize {
        self.facades.iter().filter(|f| !f.ok()).count()
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> RunReport {
        let mut r = self.clone();
        r.timings = RunTimings::default();
        for f in &mut r.facades {
            f.timings = StageTimings::default();
        }
        if let Some(red) = &mut r.reduction {
            for s in [&mut red.baseline, &mut red.collinear, &mut red.infinite, &mut red.combined] {
                s.seconds = 0.0;
            }
            for row in [&mut red.report.collinear, &mut red.report.infinite, &mut red.report.combined] {
                row.time_pct = 0.0;
            }
        }
        r
    }
}

/// Per-facade stage timings, candidate counts and slice statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub run: RunTimings,
    pub facades: Vec<FacadeMetrics>,
    pub reduction: Option<ReductionSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeMetrics {
    pub id: String,
    pub timings: StageTimings,
    pub candidates_raw: Option<usize>,
    pub candidates: Option<usize>,
    pub slice_count: Option<usize>,
    pub peak_slice_area: Option<usize>,
}

pub fn stage_metrics(report: &RunReport) -> StageMetrics {
    StageMetrics {
        run: report.timings,
        facades: report
            .facades
            .iter()
            .map(|f| FacadeMetrics {
                id: f.id.clone(),
                timings: f.timings,
                candidates_raw: f.vp.as_ref().map(|v| v.candidates_raw),
                candidates: f.vp.as_ref().map(|v| v.candidates),
                slice_count: f.inpaint.as_ref().map(|i| i.slice_count),
                peak_slice_area: f.inpaint.as_ref().map(|i| i.peak_slice_area),
            })
            .collect(),
        reduction: report.reduction.clone(),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|e| PipelineError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn effective_config(manifest: &SceneManifest, opts: &RunOptions) -> PipelineConfig {
    let mut cfg = manifest.config.clone();
    if let Some(seed) = opts.seed {
        cfg.vp = cfg.vp.with_seed(seed);
        cfg.patch.seed = seed;
    }
    if let Some(b) = opts.backend {
        cfg.backend = b;
    }
    if opts.no_dedup {
        cfg.vp.dedup_collinear = false;
        cfg.vp.vote.dedup_candidates = false;
    }
    cfg
}

/// Everything one facade produced.
struct FacadeOutcome {
    report: FacadeReport,
    facade: Option<RectifiedFacade>,
    reduction: Option<[StageCount; 4]>,
}

struct Failed(FacadeFailure);

fn fail<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> Failed {
    move |e| {
        Failed(FacadeFailure {
            stage,
            reason: e.to_string(),
        })
    }
}

/// Matte of one probability mask; `None` when the mask has no foreground.
fn matte_for(image: &GrayImage, path: &Path, cfg: &PipelineConfig) -> Result<Option<(AlphaMatte, Trimap)>, Failed> {
    let prob = load_prob_mask(path).map_err(fail(Stage::Load))?;
    if prob.dims() != image.dims() {
        return Err(fail(Stage::Load)(format!(
            "mask {} is {:?} but the image is {:?}",
            path.display(),
            prob.dims(),
            image.dims()
        )));
    }
    let trimap = match make_trimap(&prob, &cfg.matting) {
        Ok(t) => t,
        Err(MattingError::DegenerateTrimap) => return Ok(None),
        Err(e) => return Err(fail(Stage::Matting)(e)),
    };
    let matte = solve_matte(image, &trimap, &cfg.matting).map_err(fail(Stage::Matting))?;
    Ok(Some((matte, trimap)))
}

/// Writer for `--debug` stage outputs; a no-op without a directory.
struct DebugDump {
    dir: Option<PathBuf>,
}

impl DebugDump {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn gray(&self, name: &str, img: &GrayImage) -> Result<(), Failed> {
        match self.path(name) {
            Some(p) => save_gray_png(img, p).map_err(fail(Stage::Output)),
            None => Ok(()),
        }
    }

    fn bytes(&self, name: &str, bytes: &[u8]) -> Result<(), Failed> {
        match self.path(name) {
            Some(p) => fs::write(&p, bytes).map_err(|e| fail(Stage::Output)(format!("{}: {e}", p.display()))),
            None => Ok(()),
        }
    }

    fn text(&self, name: &str, text: &str) -> Result<(), Failed> {
        self.bytes(name, text.as_bytes())
    }
}

fn process_facade(entry: &FacadeEntry, cfg: &PipelineConfig, opts: &RunOptions, out_dir: &Path) -> FacadeOutcome {
    let start = Instant::now();
    let mut report = FacadeReport {
        id: entry.id.clone(),
        block: entry.block.clone(),
        failure: None,
        timings: StageTimings::default(),
        vp: None,
        rectification: None,
        inpaint: None,
        texture: None,
        warnings: Vec::new(),
    };
    let mut reduction = None;
    let result = run_stages(entry, cfg, opts, out_dir, &mut report, &mut reduction);
    report.timings.total_ms = ms(start);
    let facade = match result {
        Ok(f) => Some(f),
        Err(Failed(failure)) => {
            log::warn!("facade {}: {:?} failed: {}", entry.id, failure.stage, failure.reason);
            report.failure = Some(failure);
            None
        }
    };
    FacadeOutcome {
        report,
        facade,
        reduction,
    }
}

fn run_stages(
    entry: &FacadeEntry,
    cfg: &PipelineConfig,
    opts: &RunOptions,
    out_dir: &Path,
    report: &mut FacadeReport,
    reduction: &mut Option<[StageCount; 4]>,
) -> Result<RectifiedFacade, Failed> {
    let stem = &entry.id;
    let debug = DebugDump {
        dir: opts.debug.then(|| out_dir.join("debug").join(stem)),
    };
    if let Some(d) = &debug.dir {
        fs::create_dir_all(d).map_err(|e| fail(Stage::Output)(format!("{}: {e}", d.display())))?;
    }
    let image = load_image(&entry.image).map_err(fail(Stage::Load))?;

    let t = Instant::now();
    let (matte, trimap) = matte_for(&image, &entry.facade_mask, cfg)?
        .ok_or_else(|| fail(Stage::Matting)("facade mask has no foreground pixel"))?;
    let mask = binarize_matte(&matte, &cfg.matting);
    let mut occlusion = BinMask::filled(image.width(), image.height(), false);
    for path in &entry.occlusion_masks {
        match matte_for(&image, path, cfg)? {
            Some((m, _)) => {
                let b = binarize_matte(&m, &cfg.matting);
                occlusion = BinMask::from_fn(image.width(), image.height(), |x, y| occlusion.get(x, y) || b.get(x, y));
            }
            None => report
                .warnings
                .push(format!("occlusion mask {} is empty", path.display())),
        }
    }
    report.timings.matting_ms = ms(t);
    debug.gray("trimap.png", &trimap.to_gray())?;
    debug.gray("matte.png", &matte.to_gray())?;
    debug.gray("occlusion.png", &occlusion.to_gray())?;

    let t = Instant::now();
    let est = estimate_vanishing_points(&image, &mask, &cfg.vp).map_err(fail(Stage::VanishingPoints))?;
    report.timings.vanishing_points_ms = ms(t);
    report.vp = Some(VpSummary {
        candidates_raw: est.candidates_raw,
        candidates: est.candidates,
        relaxed: est.relaxed,
        accumulation_segments: est.accumulation_segments.len(),
        voting_segments: est.voting_segments.len(),
        pair: [est.pair.0.vp, est.pair.1.vp],
    });
    if opts.metrics {
        *reduction = Some(reduction_counts(&image, &mask, &cfg.vp)?);
    }
    if debug.dir.is_some() {
        let png = render_overlay(&image, &est.voting_segments).map_err(fail(Stage::Output))?;
        debug.bytes("segments.png", &png)?;
    }
    debug.text("segments.json", &segments_json(&est.accumulation_segments))?;

    let t = Instant::now();
    let rect = rectify(&image, &matte, &mask, (est.pair.0.vp, est.pair.1.vp), &cfg.rectify)
        .map_err(fail(Stage::Rectify))?;
    report.timings.rectify_ms = ms(t);
    let (w, h) = rect.facade.texture.dims();
    debug.text(
        "geometry.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "quad": rect.quad,
            "camera": rect.camera,
        }))
        .expect("geometry serializes"),
    )?;
    debug.gray("rectified.png", &rect.facade.texture)?;

    let t = Instant::now();
    let keep = cfg.matting.binarize_threshold;
    let warped = warp_matte(&AlphaMatte::from_mask(&occlusion), &rect.homography, w, h);
    let fill = BinMask::from_fn(w, h, |x, y| warped.get(x, y) >= keep && rect.facade.matte.get(x, y) >= keep);
    debug.gray("inpaint_mask.png", &fill.to_gray())?;
    let mut facade = rect.facade.clone();
    let masked_pixels = fill.count();
    if masked_pixels > 0 {
        let req = InpaintRequest::new(facade.texture.clone(), fill).map_err(fail(Stage::Inpaint))?;
        let diffusion = cfg.diffusion;
        let primary: &dyn InpaintBackend = match cfg.backend {
            Backend::Diffusion => &diffusion,
            Backend::Patch => &PatchInpainter(cfg.patch),
        };
        let (tiled, fell_back) = match inpaint_tiled(&req, primary, &cfg.tiler) {
            Ok(r) => (r, false),
            Err(e) if cfg.backend == Backend::Patch => {
                report
                    .warnings
                    .push(format!("patch inpainting failed ({e}); filled by diffusion"));
                (inpaint_tiled(&req, &diffusion, &cfg.tiler).map_err(fail(Stage::Inpaint))?, true)
            }
            Err(e) => return Err(fail(Stage::Inpaint)(e)),
        };
        report.inpaint = Some(InpaintSummary {
            backend: cfg.backend,
            masked_pixels,
            slice_count: tiled.slice_count(),
            peak_slice_area: tiled.peak_slice_area(),
            fell_back,
        });
        facade.texture = tiled.image;
    }
    report.timings.inpaint_ms = ms(t);

    let facade = scale_to_world(facade, entry.width_m).map_err(fail(Stage::Rectify))?;
    report.rectification = Some(RectifySummary {
        quad: rect.quad,
        focal: rect.camera.focal,
        approximate_focal: rect.camera.approximate,
        aspect: facade.aspect,
        width_px: w,
        height_px: h,
        world_width_m: facade.world_width,
        world_height_m: facade.world_height,
    });
    let rel = format!("facades/{stem}.png");
    save_gray_alpha_png(&facade.texture, facade.matte.alpha(), out_dir.join(&rel)).map_err(fail(Stage::Output))?;
    report.texture = Some(rel);
    Ok(facade)
}

/// Run the four accumulate-and-vote variants on freshly detected
/// accumulation segments.
fn reduction_counts(image: &GrayImage, mask: &BinMask, cfg: &VpConfig) -> Result<[StageCount; 4], Failed> {
    let region = mask.dilate(cfg.region_margin);
    let segs = detect_segments(image, Some(&region), &cfg.accumulation).map_err(fail(Stage::VanishingPoints))?;
    let (_, counts) = measure_reduction(&segs, mask, &cfg.vote).map_err(fail(Stage::VanishingPoints))?;
    Ok(counts)
}

fn sum_counts(all: &[[StageCount; 4]]) -> ReductionSection {
    let mut s = [StageCount::default(); 4];
    for c in all {
        for k in 0..4 {
            s[k].candidates += c[k].candidates;
            s[k].seconds += c[k].seconds;
        }
    }
    ReductionSection {
        baseline: s[0],
        collinear: s[1],
        infinite: s[2],
        combined: s[3],
        report: reduction_metrics(s[0], s[1], s[2], s[3]),
    }
}

/// Height used in the block walk for a facade that failed: the mean of
/// the block's successful facades, or its own width.
fn fallback_height(members: &[&FacadeEntry], done: &BTreeMap<String, RectifiedFacade>, width: f64) -> f64 {
    let ok: Vec<f64> = members
        .iter()
        .filter_map(|m| done.get(&m.id).map(|f| f.world_height))
        .collect();
    if ok.is_empty() {
        width
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    }
}

fn layout_blocks(
    manifest: &SceneManifest,
    done: &BTreeMap<String, RectifiedFacade>,
) -> Vec<Result<(BlockLayout, BlockReport, Vec<String>), String>> {
    let members = manifest.block_members();
    manifest
        .blocks
        .par_iter()
        .map(|b| {
            let Some(ms) = members.get(b.id.as_str()) else {
                return Err(format!("block {} has no facades", b.id));
            };
            let mut warnings = Vec::new();
            let records: Vec<FacadeRecord> = ms
                .iter()
                .map(|f| {
                    let height = match done.get(&f.id) {
                        Some(r) => r.world_height,
                        None => {
                            let h = fallback_height(ms, done, f.width_m);
                            warnings.push(format!(
                                "block {}: facade {} failed, using height {h:.2} m and no texture",
                                b.id, f.id
                            ));
                            h
                        }
                    };
                    FacadeRecord {
                        id: f.id.clone(),
                        length: f.width_m,
                        height,
                        neighbor: f.neighbor.clone(),
                        same_building_as_neighbor: f.same_building,
                        cardinal: f.cardinal,
                    }
                })
                .collect();
            let start = b.start.clone().unwrap_or_else(|| ms[0].id.clone());
            let (layout, report) = layout_block(&b.id, b.offset, &start, &records)
                .map_err(|e| format!("block {}: {e}", b.id))?;
            if report.closed {
                warnings.push(format!(
                    "block {}: chain misses its start by {:.3} m, gap distributed",
                    b.id, report.closure_gap_m
                ));
            }
            Ok((layout, report, warnings))
        })
        .collect()
}

/// Run the whole pipeline. Only manifest and output-directory problems are
/// fatal; a facade that fails is reported and left untextured.
pub fn run_pipeline(
    manifest_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: &RunOptions,
) -> Result<RunReport, PipelineError> {
    let manifest = SceneManifest::load(manifest_path)?;
    run_manifest(&manifest, out_dir, opts)
}

/// `run_pipeline` for an already loaded manifest.
pub fn run_manifest(
    manifest: &SceneManifest,
    out_dir: impl AsRef<Path>,
    opts: &RunOptions,
) -> Result<RunReport, PipelineError> {
    let start = Instant::now();
    let out_dir = out_dir.as_ref();
    manifest.validate()?;
    create_dir(&out_dir.join("facades"))?;
    let cfg = effective_config(manifest, opts);

    let t = Instant::now();
    let mut outcomes: Vec<FacadeOutcome> = manifest
        .facades
        .par_iter()
        .map(|f| process_facade(f, &cfg, opts, out_dir))
        .collect();
    outcomes.sort_by(|a, b| a.report.id.cmp(&b.report.id));
    let facades_ms = ms(t);

    let mut done = BTreeMap::new();
    let mut textures = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut counts = Vec::new();
    for o in &mut outcomes {
        if let Some(c) = o.reduction {
            counts.push(c);
        }
        if let Some(f) = o.facade.take() {
            textures.insert(o.report.id.clone(), FacadeTexture::from_rectified(&f)?);
            done.insert(o.report.id.clone(), f);
        }
        for w in &o.report.warnings {
            warnings.push(format!("facade {}: {w}", o.report.id));
        }
    }

    let t = Instant::now();
    let mut layouts = Vec::new();
    let mut blocks = Vec::new();
    for r in layout_blocks(manifest, &done) {
        match r {
            Ok((layout, report, w)) => {
                layouts.push(layout);
                blocks.push(report);
                warnings.extend(w);
            }
            Err(w) => warnings.push(w),
        }
    }
    let scene = assemble_city(&layouts, textures);
    warnings.extend(scene.warnings.iter().cloned());
    let modeling_ms = ms(t);

    let t = Instant::now();
    let files = export_gltf(&scene, out_dir)?;
    let export_ms = ms(t);

    let report = RunReport {
        facades: outcomes.into_iter().map(|o| o.report).collect(),
        blocks,
        reduction: opts.metrics.then(|| sum_counts(&counts)),
        warnings,
        timings: RunTimings {
            facades_ms,
            modeling_ms,
            export_ms,
            total_ms: ms(start),
        },
        gltf: files
            .gltf
            .strip_prefix(out_dir)
            .unwrap_or(&files.gltf)
            .display()
            .to_string(),
    };
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&report).expect("report serializes")).map_err(|e| {
        PipelineError::Output {
            path: report_path.clone(),
            reason: e.to_string(),
        }
    })?;
    Ok(report)
}
