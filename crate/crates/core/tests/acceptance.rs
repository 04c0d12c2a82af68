//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Run with `cargo test -p facade-core --test acceptance -- --nocapture` to
//! see the lines interleaved with the harness output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use facade_core::inpaint::{
    conserves_unmasked, inpaint_diffusion, inpaint_tiled, split_for_inpaint, DiffusionInpainter, InpaintBackend,
    InpaintRequest, PatchConfig, PatchInpainter, TilerConfig,
};
use facade_core::lines::{detect_segments, LineDetectConfig, LinearityConfig};
use facade_core::matting::{solve_matte, AlphaMatte, MattingConfig};
use facade_core::model3d::{map_facades_within_block, Cuboid, FacadeRecord};
use facade_core::pipeline::{run_pipeline, write_fixture_city, Backend, RunOptions};
use facade_core::raster::{BinMask, GrayImage, LineSegment, Point2, Trimap, TrimapLabel};
use facade_core::rectify::{rectify, RectifyConfig};
use facade_core::synthetic::{
    duplicated_segment_corpus, free_form_mask, lines_and_circles, random_rectangle_scene, stripes,
};
use facade_core::vanish::{
    dedup_collinear, estimate_vanishing_points, measure_reduction, select_vp_pair, timed_candidate_pass, vote,
    VanishingPoint, VoteConfig, VpConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Written to the stdout handle directly so the lines are not swallowed by
/// the harness's output capture.
fn report(n: usize, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {n} [{tag}] {name}: {}", o.detail).unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance_suite() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("synthetic rectification suite", rectification_suite),
        ("line filter keeps straight evidence", line_filter),
        ("vanishing point deduplication", vp_dedup),
        ("vote matches direct summation", vote_oracle),
        ("matting matches dense solve", matting_oracle),
        ("inpainting conservation and tiling", inpainting),
        ("block walk hand traces", block_walk),
        ("two-block fixture exports valid glTF", fixture_city_gltf),
        ("seeded runs are bit-identical", determinism),
    ];
    // Start on a fresh line after the harness's "test ... " prefix.
    writeln!(std::io::stdout().lock()).unwrap();
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        report(i + 1, name, &o);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// 1. Rectification of rendered rectangles under random pinhole cameras.

fn rectification_suite() -> Outcome {
    let start = Instant::now();
    let mut ok = 0;
    let mut misses = Vec::new();
    for seed in 0..50u64 {
        let s = random_rectangle_scene(seed, 640, 480, 40.0);
        let mask = s.mask();
        let good = estimate_vanishing_points(&s.image, &mask, &VpConfig::default().with_seed(seed))
            .ok()
            .and_then(|est| {
                rectify(
                    &s.image,
                    &AlphaMatte::from_mask(&mask),
                    &mask,
                    (est.pair.0.vp, est.pair.1.vp),
                    &RectifyConfig::default(),
                )
                .ok()
            })
            .is_some_and(|r| {
                let corner_err =
                    r.quad.corners.iter().zip(&s.corners).map(|(a, b)| a.distance(*b)).sum::<f64>() / 4.0;
                (r.facade.aspect / s.aspect - 1.0).abs() < 0.05 && corner_err < 1.5
            });
        if good {
            ok += 1;
        } else {
            misses.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok >= 45 && secs < 60.0,
        format!("{ok}/50 within 5% aspect and 1.5 px corners (need 45) in {secs:.1} s (limit 60); misses {misses:?}"),
    )
}

// 2. Support pixels of retained segments come from straight strokes. The
// property is checked on the strict settings that form candidates; the
// relaxed voting settings (k_s = 8, t = 9 deg) accept arcs whose radius
// exceeds about 8 / tan(9 deg) px by design and are reported for reference.

fn support_shares(cfg: &LineDetectConfig) -> (f64, f64, usize) {
    let (mut total, mut on_lines, mut circle_only) = (0usize, 0usize, 0usize);
    for seed in 0..10u64 {
        // Eight lines and three circles give comparable total edge length.
        let (img, line_gt, circle_gt) = lines_and_circles(seed, 480, 360, 8, 3);
        let segs = detect_segments(&img, None, cfg).expect("valid config");
        for s in &segs {
            for &(x, y) in &s.support {
                total += 1;
                if line_gt.get(x, y) {
                    on_lines += 1;
                } else if circle_gt.get(x, y) {
                    circle_only += 1;
                }
            }
        }
    }
    let n = total.max(1) as f64;
    (on_lines as f64 / n, circle_only as f64 / n, total)
}

fn line_filter() -> Outcome {
    let (lines, circles, total) =
        support_shares(&LineDetectConfig::with_linearity(LinearityConfig::ACCUMULATION));
    let (v_lines, v_circles, v_total) = support_shares(&LineDetectConfig::with_linearity(LinearityConfig::VOTING));
    outcome(
        total > 0 && lines >= 0.9 && circles < 0.1,
        format!(
            "strict settings: {:.1}% of {total} support px on lines (need 90), {:.1}% on circles (limit 10); \
             relaxed voting settings for reference: {:.1}% / {:.1}% of {v_total}",
            100.0 * lines,
            100.0 * circles,
            100.0 * v_lines,
            100.0 * v_circles
        ),
    )
}

// 3. Deduplication shrinks the candidate space and time without moving the
// selected pair.

fn vp_dedup() -> Outcome {
    let (w, h) = (800.0, 600.0);
    let per_vp = 30;
    let vps = [Point2::new(2600.0, 240.0), Point2::new(330.0, -3100.0)];
    let mask = BinMask::filled(w as usize, h as usize, true);
    let cfg = VoteConfig::default();
    let plain = VoteConfig {
        dedup_candidates: false,
        ..cfg
    };
    let mut worst_space = f64::INFINITY;
    let mut worst_shift = 0.0f64;
    let mut faster = true;
    let mut times = Vec::new();
    for seed in 0..3u64 {
        // Half of the originals get a jittered collinear copy.
        let segs = duplicated_segment_corpus(seed, w, h, per_vp, vps, per_vp);
        let (rep, _) = measure_reduction(&segs, &mask, &cfg).expect("corpus has evidence");
        worst_space = worst_space.min(rep.combined.space_pct);

        // Minimum over repeats of the baseline and combined passes.
        let (mut base, mut both) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..7 {
            base = base.min(timed_candidate_pass(&segs, &mask, &plain, false).unwrap().0.seconds);
            both = both.min(timed_candidate_pass(&segs, &mask, &cfg, true).unwrap().0.seconds);
        }
        faster &= both < base;
        times.push(format!("{:.2}/{:.2} ms", 1e3 * base, 1e3 * both));

        let (_, raw_cands, _) = timed_candidate_pass(&segs, &mask, &plain, false).unwrap();
        let (_, dedup_cands, _) = timed_candidate_pass(&segs, &mask, &cfg, true).unwrap();
        let merged = dedup_collinear(&segs, &cfg);
        let a = select_vp_pair(&raw_cands, &segs, &mask, &plain).expect("pair without dedup");
        let b = select_vp_pair(&dedup_cands, &merged, &mask, &cfg).expect("pair with dedup");
        let c = mask.centroid().unwrap();
        let dirs = |p: (VanishingPoint, VanishingPoint)| [p.0.direction_from(c), p.1.direction_from(c)];
        let (da, db) = (dirs((a.0.vp, a.1.vp)), dirs((b.0.vp, b.1.vp)));
        for d in da {
            let nearest = db.iter().map(|&e| undirected_diff(d, e)).fold(f64::INFINITY, f64::min);
            worst_shift = worst_shift.max(nearest);
        }
    }
    outcome(
        worst_space >= 30.0 && worst_shift < cfg.quant_angle && faster,
        format!(
            "space reduction >= {worst_space:.1}% (need 30), pair shift <= {worst_shift:.3} deg (limit {}), \
             baseline/combined {}",
            cfg.quant_angle,
            times.join(", ")
        ),
    )
}

fn undirected_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

// 4. Vote against a direct summation with its own rasterizer.

/// Pixels of the digital segment from the pixel containing `a` to the pixel
/// containing `b`: one per step of the longer axis, the other coordinate
/// rounded half-up. Returns `(pixels inside the mask, pixels on the line)`,
/// where pixels off the image count on the line but never inside.
fn oracle_mask_counts(a: Point2, b: Point2, mask: &BinMask) -> (usize, usize) {
    let (x0, y0) = (a.x.floor() as i64, a.y.floor() as i64);
    let (x1, y1) = (b.x.floor() as i64, b.y.floor() as i64);
    let n = (x1 - x0).abs().max((y1 - y0).abs());
    let mut inside = 0;
    for t in 0..=n {
        let (x, y) = if n == 0 {
            (x0, y0)
        } else if (x1 - x0).abs() >= (y1 - y0).abs() {
            let y = y0 as f64 + ((y1 - y0) as f64 * t as f64 / n as f64 + 0.5).floor();
            (x0 + (x1 - x0).signum() * t, y as i64)
        } else {
            let x = x0 as f64 + ((x1 - x0) as f64 * t as f64 / n as f64 + 0.5).floor();
            (x as i64, y0 + (y1 - y0).signum() * t)
        };
        if mask.get_signed(x, y) {
            inside += 1;
        }
    }
    (inside, n as usize + 1)
}

fn oracle_vote(vp: &VanishingPoint, segs: &[LineSegment], mask: &BinMask, t_a: f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for s in segs {
        let (inside, total) = if s.support.is_empty() {
            oracle_mask_counts(s.a, s.b, mask)
        } else {
            let inside = s.support.iter().filter(|&&(x, y)| mask.get(x, y)).count();
            (inside, s.support.len())
        };
        let weight = (s.b.x - s.a.x).hypot(s.b.y - s.a.y) * inside as f64 / total as f64;
        let (ux, uy) = (s.b.x - s.a.x, s.b.y - s.a.y);
        let (vx, vy) = match *vp {
            VanishingPoint::Finite { x, y } => ((s.a.x + s.b.x) / 2.0 - x, (s.a.y + s.b.y) / 2.0 - y),
            VanishingPoint::Infinite { direction_deg } => {
                let t = direction_deg.to_radians();
                (t.cos(), t.sin())
            }
        };
        let d = if vx == 0.0 && vy == 0.0 {
            0.0
        } else {
            (ux * vy - uy * vx).abs().atan2((ux * vx + uy * vy).abs()).to_degrees()
        };
        num += weight * (1.0 - d / t_a).max(0.0);
        den += weight;
    }
    (den > 0.0).then(|| num / den)
}

fn intersect(s: &LineSegment, t: &LineSegment) -> Option<Point2> {
    let (r, q) = (s.b - s.a, t.b - t.a);
    let den = r.cross(q);
    if den.abs() < 1e-9 {
        return None;
    }
    let k = (t.a - s.a).cross(q) / den;
    Some(s.a + r * k)
}

fn vote_oracle() -> Outcome {
    let (w, h) = (64usize, 48usize);
    let cfg = VoteConfig::default();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut mismatched_errors = 0usize;
    for inst in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(inst);
        let (cx, cy) = (rng.random_range(10.0..54.0), rng.random_range(8.0..40.0));
        let (rx, ry) = (rng.random_range(6.0..30.0), rng.random_range(6.0..24.0));
        let mask = BinMask::from_fn(w, h, |x, y| {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            dx * dx + dy * dy <= 1.0
        });
        let n_segs = rng.random_range(1..=8);
        let mut segs = Vec::new();
        while segs.len() < n_segs {
            // Endpoints may leave the image so clipped pixels are exercised.
            let a = Point2::new(rng.random_range(-8.0..72.0), rng.random_range(-8.0..56.0));
            let b = Point2::new(rng.random_range(-8.0..72.0), rng.random_range(-8.0..56.0));
            if a.distance(b) < 1.0 {
                continue;
            }
            if rng.random_bool(0.25) {
                let support: Vec<(usize, usize)> = (0..rng.random_range(1..20))
                    .map(|_| (rng.random_range(0..w), rng.random_range(0..h)))
                    .collect();
                segs.push(LineSegment::with_support(a, b, support));
            } else {
                segs.push(LineSegment::new(a, b));
            }
        }
        let mut cands = Vec::new();
        let n_cands = rng.random_range(1..=20);
        while cands.len() < n_cands {
            let i = rng.random_range(0..segs.len());
            let j = rng.random_range(0..segs.len());
            let c = match rng.random_range(0..4) {
                0 => intersect(&segs[i], &segs[j]).map(VanishingPoint::finite),
                1 => intersect(&segs[i], &segs[j]).map(|p| {
                    let jitter = Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    VanishingPoint::finite(p + jitter)
                }),
                2 => Some(VanishingPoint::infinite(segs[i].angle_deg() + rng.random_range(-3.0..3.0))),
                _ => Some(VanishingPoint::finite(Point2::new(
                    rng.random_range(-500.0..600.0),
                    rng.random_range(-500.0..600.0),
                ))),
            };
            if let Some(c) = c {
                cands.push(c);
            }
        }
        for c in &cands {
            match (vote(c, &segs, &mask, &cfg), oracle_vote(c, &segs, &mask, cfg.t_a)) {
                (Ok(got), Some(want)) => {
                    worst = worst.max((got - want).abs());
                    checked += 1;
                }
                (Err(_), None) => {}
                _ => mismatched_errors += 1,
            }
        }
    }
    outcome(
        worst <= 1e-9 && mismatched_errors == 0 && checked > 1000,
        format!("{checked} votes, max |vote - oracle| = {worst:.2e} (limit 1e-9), {mismatched_errors} error mismatches"),
    )
}

// 5. Matting against a dense direct solve of the same quadratic form.

fn dense_matte(image: &GrayImage, trimap: &Trimap, eps: f64) -> Vec<f64> {
    let (w, h) = image.dims();
    let np = w * h;
    let v: Vec<f64> = image.data().iter().map(|&p| p as f64 / 255.0).collect();
    let mut lap = DMatrix::<f64>::zeros(np, np);
    let n = 9.0;
    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            let win: Vec<usize> = (0..9).map(|k| (cy + k / 3 - 1) * w + cx + k % 3 - 1).collect();
            let mu = win.iter().map(|&i| v[i]).sum::<f64>() / n;
            let var = win.iter().map(|&i| (v[i] - mu) * (v[i] - mu)).sum::<f64>() / n;
            for &i in &win {
                for &j in &win {
                    let kron = f64::from(u8::from(i == j));
                    lap[(i, j)] += kron - (1.0 + (v[i] - mu) * (v[j] - mu) / (var + eps / n)) / n;
                }
            }
        }
    }
    let labels = trimap.data();
    let known = |i: usize| match labels[i] {
        TrimapLabel::Foreground => Some(1.0),
        TrimapLabel::Background => Some(0.0),
        TrimapLabel::Unknown => None,
    };
    let unknown: Vec<usize> = (0..np).filter(|&i| known(i).is_none()).collect();
    let m = unknown.len();
    let a = DMatrix::from_fn(m, m, |r, c| lap[(unknown[r], unknown[c])]);
    let b = DVector::from_fn(m, |r, _| {
        -(0..np).filter_map(|j| known(j).map(|k| lap[(unknown[r], j)] * k)).sum::<f64>()
    });
    let x = a.lu().solve(&b).expect("unknown block is nonsingular");
    let mut alpha: Vec<f64> = (0..np).map(|i| known(i).unwrap_or(0.0)).collect();
    for (r, &i) in unknown.iter().enumerate() {
        alpha[i] = x[r].clamp(0.0, 1.0);
    }
    alpha
}

fn matting_instance(seed: u64) -> (GrayImage, Trimap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = rng.random_range(3..7);
    let (fg, bg): (f64, f64) = (rng.random_range(150.0..210.0), rng.random_range(30.0..90.0));
    let noise: f64 = rng.random_range(2.0..30.0);
    let img = GrayImage::from_fn(10, 10, |x, y| {
        let base = if x + y / 3 < split + 1 { fg } else { bg };
        (base + rng.random_range(-noise..noise)).clamp(0.0, 230.0) as u8
    });
    let labels: Vec<TrimapLabel> = (0..100)
        .map(|i| {
            let (x, _) = (i % 10, i / 10);
            if x + 1 < split {
                TrimapLabel::Foreground
            } else if x > split + 2 {
                TrimapLabel::Background
            } else if rng.random_bool(0.1) {
                if x <= split { TrimapLabel::Foreground } else { TrimapLabel::Background }
            } else {
                TrimapLabel::Unknown
            }
        })
        .collect();
    (img, Trimap::new(10, 10, labels).unwrap())
}

fn matting_oracle() -> Outcome {
    let cfg = MattingConfig::default();
    let (mut worst, mut worst_shift) = (0.0f64, 0.0f64);
    let mut constraint_violations = 0;
    let instances = 40u64;
    for seed in 0..instances {
        let (img, tri) = matting_instance(seed);
        let got = solve_matte(&img, &tri, &cfg).expect("instance solvable");
        let want = dense_matte(&img, &tri, cfg.epsilon);
        for (i, (&g, &e)) in got.alpha().iter().zip(&want).enumerate() {
            worst = worst.max((g - e).abs());
            let exact = match tri.data()[i] {
                TrimapLabel::Foreground => g == 1.0,
                TrimapLabel::Background => g == 0.0,
                TrimapLabel::Unknown => true,
            };
            constraint_violations += usize::from(!exact);
        }
        let shifted = GrayImage::from_fn(10, 10, |x, y| img.get(x, y) + 25);
        let moved = solve_matte(&shifted, &tri, &cfg).expect("shifted instance solvable");
        for (&a, &b) in got.alpha().iter().zip(moved.alpha()) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-4 && constraint_violations == 0 && worst_shift <= 1e-6,
        format!(
            "{instances} instances: max |iterative - dense| = {worst:.2e} (limit 1e-4), \
             {constraint_violations} constraint violations, shift drift {worst_shift:.2e} (limit 1e-6)"
        ),
    )
}

// 6. Inpainting leaves known pixels alone; the tiler is transparent to a
// single component and never exceeds its chunk bound.

fn textured(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = stripes(w, h, rng.random_range(12.0..40.0), rng.random_range(0.0..180.0));
    GrayImage::from_fn(w, h, |x, y| {
        (base.get(x, y) as i32 + rng.random_range(-12..=12)).clamp(0, 255) as u8
    })
}

fn inpainting() -> Outcome {
    let diffusion = DiffusionInpainter::default();
    let patch = PatchInpainter(PatchConfig::default());
    let tiler = TilerConfig::default();
    let mut conservation_failures = Vec::new();
    for seed in 0..4u64 {
        let req = InpaintRequest::new(textured(seed, 260, 180), free_form_mask(seed, 260, 180, 3, 9.0)).unwrap();
        let backends: [&dyn InpaintBackend; 2] = [&diffusion, &patch];
        for b in backends {
            let whole = b.inpaint(&req).expect("whole-image fill");
            if !conserves_unmasked(&req, &whole) {
                conservation_failures.push(format!("{} seed {seed}", b.name()));
            }
            let tiled = inpaint_tiled(&req, b, &tiler).expect("tiled fill");
            if !conserves_unmasked(&req, &tiled.image) {
                conservation_failures.push(format!("tiled {} seed {seed}", b.name()));
            }
        }
    }

    // One blob well inside a larger image: the slice holds the blob plus
    // its full context margin.
    let mut worst_equiv = 0.0f64;
    for seed in 0..3u64 {
        let (w, h) = (640, 480);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (cx, cy) = (rng.random_range(200.0..440.0), rng.random_range(160.0..320.0));
        let r = rng.random_range(15.0..40.0);
        let mask = BinMask::from_fn(w, h, |x, y| Point2::pixel_center(x, y).distance(Point2::new(cx, cy)) <= r);
        let req = InpaintRequest::new(textured(seed, w, h), mask).unwrap();
        let whole = inpaint_diffusion(&req, diffusion.max_iterations, diffusion.tolerance)
            .expect("whole fill")
            .image;
        let tiled = inpaint_tiled(&req, &diffusion, &tiler).expect("tiled fill");
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &m) in req.mask.data().iter().enumerate() {
            if m {
                sum += (whole.data()[i] as f64 - tiled.image.data()[i] as f64).abs();
                n += 1;
            }
        }
        worst_equiv = worst_equiv.max(sum / n as f64);
    }

    // Chunk bound over sparse, dense and near-full masks at full size.
    let (w, h) = (1200, 800);
    let img = GrayImage::filled(w, h, 128);
    let mut peak = (0usize, 0usize, 0usize);
    let mut masks: Vec<BinMask> = (0..6u64).map(|s| free_form_mask(s, w, h, 4 + 4 * s as usize, 30.0)).collect();
    masks.push(BinMask::from_fn(w, h, |x, y| (100..1100).contains(&x) && (80..720).contains(&y)));
    masks.push(BinMask::from_fn(w, h, |x, y| (x / 7 + y / 5) % 3 == 0 && x > 0));
    let mut bound_ok = true;
    for mask in masks {
        let req = InpaintRequest::new(img.clone(), mask).unwrap();
        for s in split_for_inpaint(&req, &tiler) {
            peak.0 = peak.0.max(s.rect.area());
            peak.1 = peak.1.max(s.rect.width);
            peak.2 = peak.2.max(s.rect.height);
            bound_ok &= s.rect.width <= 600 && s.rect.height <= 400;
        }
    }
    let tiled = inpaint_tiled(
        &InpaintRequest::new(textured(9, w, h), free_form_mask(9, w, h, 12, 30.0)).unwrap(),
        &diffusion,
        &tiler,
    )
    .expect("full-size tiled fill");
    bound_ok &= tiled.peak_slice_area() <= 600 * 400;

    outcome(
        conservation_failures.is_empty() && worst_equiv <= 1.0 && bound_ok,
        format!(
            "conservation failures {conservation_failures:?}, tiled vs whole mean abs {worst_equiv:.3} (limit 1), \
             peak slice {}x{} area {} (bound 600x400)",
            peak.1, peak.2, peak.0
        ),
    )
}

// 7. The block walk against traces done by hand from the four branches.

fn record(id: &str, length: f64, height: f64, neighbor: &str, same: bool, cardinal: u8) -> FacadeRecord {
    FacadeRecord {
        id: id.into(),
        length,
        height,
        neighbor: neighbor.into(),
        same_building_as_neighbor: same,
        cardinal,
    }
}

fn placement(c: &Cuboid) -> [f64; 5] {
    [c.x, c.y, c.width, c.depth, c.height]
}

fn block_walk() -> Outcome {
    let mut problems = Vec::new();

    // F1 turns the corner onto F2 (cardinal 0 -> 1): width = F2.length,
    // depth = F1.length, advance y by 10. F2 turns again (1 -> 2): width =
    // F2.length, depth = F1.length, advance x by -8.
    let two = [record("f1", 10.0, 30.0, "f2", true, 0), record("f2", 8.0, 30.0, "f1", true, 0)];
    match map_facades_within_block("f1", &two) {
        Ok(walk) => {
            let got: Vec<[f64; 5]> = walk.cuboids.iter().map(placement).collect();
            let want = vec![[0.0, 0.0, 8.0, 10.0, 30.0], [0.0, 10.0, 8.0, 10.0, 30.0]];
            if got != want || walk.end != (-8.0, 10.0) || walk.turns != 2 {
                problems.push(format!("two-facade trace {got:?} end {:?} turns {}", walk.end, walk.turns));
            }
        }
        Err(e) => problems.push(format!("two-facade walk failed: {e}")),
    }

    // Four 10 m facades, every corner shared: cardinals 1, 2, 3, 0 advance
    // (0, 10), (-10, 0), (0, -10), (10, 0). Heights are the taller of each
    // corner pair.
    let square = [
        record("a", 10.0, 12.0, "b", true, 0),
        record("b", 10.0, 15.0, "c", true, 0),
        record("c", 10.0, 9.0, "d", true, 0),
        record("d", 10.0, 20.0, "a", true, 0),
    ];
    match map_facades_within_block("a", &square) {
        Ok(walk) => {
            let got: Vec<[f64; 5]> = walk.cuboids.iter().map(placement).collect();
            let want = vec![
                [0.0, 0.0, 10.0, 10.0, 15.0],
                [0.0, 10.0, 10.0, 10.0, 15.0],
                [-10.0, 10.0, 10.0, 10.0, 20.0],
                [-10.0, 0.0, 10.0, 10.0, 20.0],
            ];
            if got != want {
                problems.push(format!("four-facade trace {got:?}"));
            }
            if walk.closure_gap() != 0.0 {
                problems.push(format!("square closure gap {}", walk.closure_gap()));
            }
            if walk.turns % 4 != 0 {
                problems.push(format!("square turns {}", walk.turns));
            }
        }
        Err(e) => problems.push(format!("four-facade walk failed: {e}")),
    }

    // A rectangular block with a mid-block facade still turns a multiple of
    // four times, from any start and cardinal.
    let rect = [
        record("w1", 20.0, 12.0, "w2", true, 0),
        record("w2", 16.0, 12.0, "w3", true, 0),
        record("w3", 20.0, 12.0, "w4", true, 0),
        record("w4", 10.0, 12.0, "w5", true, 0),
        record("w5", 6.0, 12.0, "w1", false, 0),
    ];
    for start in 0..rect.len() {
        for cardinal in 0..4u8 {
            let mut recs = rect.clone();
            recs[start].cardinal = cardinal;
            match map_facades_within_block(&recs[start].id, &recs) {
                Ok(walk) if walk.turns % 4 == 0 && walk.closure_gap() == 0.0 => {}
                Ok(walk) => problems.push(format!(
                    "start {} cardinal {cardinal}: turns {} gap {}",
                    recs[start].id,
                    walk.turns,
                    walk.closure_gap()
                )),
                Err(e) => problems.push(format!("start {}: {e}", recs[start].id)),
            }
        }
    }

    let pass = problems.is_empty();
    let detail = if pass {
        "2- and 4-facade traces exact, square gap 0, turns multiple of 4 for 20 rectangular walks".to_string()
    } else {
        problems.join("; ")
    };
    outcome(pass, detail)
}

// 8. Full fixture city through the pipeline; the glTF importer validates.

fn fixture_city_gltf() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let city = match write_fixture_city(dir.path().join("in"), 0, 1200, 800) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("fixture: {e}")),
    };
    let out = dir.path().join("out");
    let report = match run_pipeline(&city.manifest, &out, &RunOptions::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let imported = gltf::import(out.join(&report.gltf));
    let (valid, buildings) = match &imported {
        Ok((doc, _, _)) => (
            true,
            doc.meshes().filter(|m| m.name().is_some_and(|n| n.starts_with("building"))).count(),
        ),
        Err(_) => (false, 0),
    };
    let failed = report.failed_facades();
    let pass = valid
        && report.facades.len() == 6
        && report.blocks.len() == 2
        && failed == 0
        && buildings == 6
        && secs < 300.0;
    let validation = match imported {
        Ok(_) => "imports with zero validation errors".to_string(),
        Err(e) => format!("rejected: {e}"),
    };
    outcome(
        pass,
        format!(
            "{} facades ({failed} failed), {} blocks, {buildings} buildings, glTF {validation}, {secs:.1} s (limit 300)",
            report.facades.len(),
            report.blocks.len()
        ),
    )
}

// 9. Two seeded runs agree on every non-timing output byte for byte.

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let city = match write_fixture_city(dir.path().join("in"), 4, 800, 540) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("fixture: {e}")),
    };
    let mut problems = Vec::new();
    let mut compared = 0;
    for backend in [Backend::Diffusion, Backend::Patch] {
        let opts = RunOptions {
            seed: Some(17),
            backend: Some(backend),
            debug: true,
            ..Default::default()
        };
        let (a, b) = (dir.path().join(format!("{backend:?}-a")), dir.path().join(format!("{backend:?}-b")));
        let (ra, rb) = match (run_pipeline(&city.manifest, &a, &opts), run_pipeline(&city.manifest, &b, &opts)) {
            (Ok(ra), Ok(rb)) => (ra, rb),
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("{backend:?} run: {e}")),
        };
        if ra.without_timings() != rb.without_timings() {
            problems.push(format!("{backend:?} reports differ"));
        }
        let (fa, fb) = (files_under(&a), files_under(&b));
        if fa.keys().ne(fb.keys()) {
            problems.push(format!("{backend:?} file sets differ"));
        }
        // report.json carries wall times; it was compared above without them.
        for (rel, bytes) in fa.iter().filter(|(rel, _)| !rel.ends_with("report.json")) {
            compared += 1;
            if fb.get(rel) != Some(bytes) {
                problems.push(format!("{backend:?} {}", rel.display()));
            }
        }
    }
    let pass = problems.is_empty() && compared > 0;
    outcome(
        pass,
        format!("{compared} output files compared across diffusion and patch runs, differences {problems:?}"),
    )
}
