//! Pipeline wiring behind the command-line front end: fixture synthesis,
//! detection, evaluation, and stratification. Everything here is a library
//! function so the behavior is testable without spawning the binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anchors::{anchors_to_text, decode, grid_geometry, AnchorSpec, GridGeometry};
use crate::boxes::{BBox, ShapeClass, TaggedBox};
use crate::dataset::{
    full_validation_set, load_label_dir, load_manifest, manifest_to_csv, stratify, SizeManifest,
};
use crate::error::{Error, Result};
use crate::eval::{map_at, timing_report, EvalReport};
use crate::head::{
    run_head, run_original_head, synthetic_neck_maps, HeadConfig, HeadOutput, HeadVariant, NeckMaps,
};
use crate::nms::{grouped_nms, nms, DetectionSet, NmsParams};
use crate::tensor::Tensor;

/// Parses an IoU threshold list: either comma-separated values
/// (`"0.5,0.75"`) or an inclusive `start:step:end` ladder (`"0.5:0.05:0.95"`).
pub fn parse_iou_list(text: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::Config(format!("IoU list '{text}': {msg}"));
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:end".into()));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        let (start, step, end) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || end < start {
            return Err(bad("need step > 0 and end >= start".into()));
        }
        let count = ((end - start) / step).round() as usize + 1;
        (0..count)
            .map(|i| {
                let v = start + step * i as f64;
                // accumulation can land a hair above 1.0 for end = 1.0
                if (v - 1.0).abs() < 1e-9 {
                    1.0
                } else {
                    v
                }
            })
            .collect()
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?
    };
    if values.is_empty() {
        return Err(bad("empty".into()));
    }
    for &v in &values {
        if !(v > 0.0 && v <= 1.0) {
            return Err(bad(format!("threshold {v} outside (0, 1]")));
        }
    }
    Ok(values)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub image_count: usize,
    pub input_size: u32,
}

#[derive(Debug)]
pub struct SynthSummary {
    pub image_ids: Vec<String>,
    pub label_count: usize,
}

/// Generates a deterministic fixture directory: seeded neck maps per image,
/// head weights for both variants, synthetic labels, a size manifest, and
/// the anchor-set text configs. The same seed produces byte-identical files.
pub fn cmd_synth(opts: &SynthOptions) -> Result<SynthSummary> {
    if opts.image_count == 0 {
        return Err(Error::Config("image count must be >= 1".into()));
    }
    create_dir(&opts.out)?;
    let labels_dir = opts.out.join("labels");
    create_dir(&labels_dir)?;

    // head weights for both variants, from their own seeded streams
    let asym = HeadConfig::seeded(opts.seed, HeadVariant::Asym, opts.input_size)?;
    asym.save_fixtures(&opts.out)?;
    let original = HeadConfig::seeded(opts.seed, HeadVariant::Original, opts.input_size)?;
    original.save_fixtures(&opts.out)?;
    write_text(
        &opts.out.join("anchors.txt"),
        &anchors_to_text(asym.anchors()),
    )?;
    write_text(
        &opts.out.join("anchors_orig.txt"),
        &anchors_to_text(original.anchors()),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut manifest = SizeManifest::new();
    let mut image_ids = Vec::with_capacity(opts.image_count);
    let mut label_count = 0usize;

    for idx in 0..opts.image_count {
        let image_id = format!("img_{idx:03}");
        let image_dir = opts.out.join("images").join(&image_id);
        create_dir(&image_dir)?;
        synthetic_neck_maps(&mut rng, opts.input_size)?.save(&image_dir)?;

        let mut lines = String::new();
        for _ in 0..rng.random_range(1..=6usize) {
            let class_id: u32 = rng.random_range(0..10);
            let (w_n, h_n) = match rng.random_range(0..3u32) {
                0 => {
                    let s: f64 = rng.random_range(0.06..0.25);
                    (s, (s * rng.random_range(0.9..1.1)).min(0.6))
                }
                1 => {
                    let h: f64 = rng.random_range(0.05..0.2);
                    (h * rng.random_range(1.5..3.0), h)
                }
                _ => {
                    let w: f64 = rng.random_range(0.05..0.2);
                    (w, w * rng.random_range(1.5..3.0))
                }
            };
            let cx_n = rng.random_range(w_n / 2.0..1.0 - w_n / 2.0);
            let cy_n = rng.random_range(h_n / 2.0..1.0 - h_n / 2.0);
            lines.push_str(&format!(
                "{class_id} {cx_n:.6} {cy_n:.6} {w_n:.6} {h_n:.6}\n"
            ));
            label_count += 1;
        }
        write_text(&labels_dir.join(format!("{image_id}.txt")), &lines)?;
        manifest.insert(image_id.clone(), (opts.input_size, opts.input_size));
        image_ids.push(image_id);
    }

    write_text(&opts.out.join("manifest.csv"), &manifest_to_csv(&manifest))?;
    Ok(SynthSummary {
        image_ids,
        label_count,
    })
}

// ---------------------------------------------------------------------------
// detect

#[derive(Debug, Clone)]
pub struct DetectOptions {
    pub fixtures: PathBuf,
    pub out: PathBuf,
    pub variant: HeadVariant,
    pub conf_threshold: f64,
    pub nms_params: NmsParams,
    pub input_size: u32,
    /// Worker threads for image-level parallelism; 0 means all available.
    pub workers: usize,
}

#[derive(Debug)]
pub struct DetectSummary {
    pub image_count: usize,
    pub detection_count: usize,
    pub timing_means: (f64, f64, f64),
}

/// Decodes the nine asymmetric-head maps in their fixed (level, branch)
/// order into one tagged candidate list.
pub fn decode_head_output(
    head_out: &HeadOutput,
    input_size: u32,
    conf_threshold: f64,
) -> Result<Vec<TaggedBox>> {
    let mut all = Vec::new();
    for (raw, spec) in &head_out.maps {
        let geom = grid_geometry(spec, input_size)?;
        all.extend(decode(raw, spec, &geom, conf_threshold)?);
    }
    Ok(all)
}

/// Splits each baseline 255-channel map into its three per-anchor views and
/// decodes them against the unpooled grid.
pub fn decode_original_output(
    maps: &[(Tensor, [AnchorSpec; 3])],
    input_size: u32,
    conf_threshold: f64,
) -> Result<Vec<BBox>> {
    let mut all = Vec::new();
    for (raw, anchors) in maps {
        for (k, spec) in anchors.iter().enumerate() {
            let slice = raw.slice_channels(k * 85, (k + 1) * 85)?;
            let geom = GridGeometry::unpooled(spec.stride, input_size)?;
            all.extend(
                decode(&slice, spec, &geom, conf_threshold)?
                    .into_iter()
                    .map(|t| t.bbox),
            );
        }
    }
    Ok(all)
}

struct ImageDetections {
    image_id: String,
    boxes: Vec<(BBox, Option<ShapeClass>)>,
    timing: (f64, f64, f64),
}

fn detect_one_image(
    image_id: &str,
    config: &HeadConfig,
    opts: &DetectOptions,
) -> Result<ImageDetections> {
    let image_dir = opts.fixtures.join("images").join(image_id);

    let t0 = Instant::now();
    let neck = NeckMaps::load(&image_dir)?;
    let pre_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    match opts.variant {
        HeadVariant::Asym => {
            let head_out = run_head(&neck, config)?;
            let tagged = decode_head_output(&head_out, opts.input_size, opts.conf_threshold)?;
            let inference_ms = t1.elapsed().as_secs_f64() * 1e3;

            let t2 = Instant::now();
            let dets = DetectionSet {
                image_id: image_id.to_string(),
                boxes: tagged,
            };
            let survivors = grouped_nms(&dets, &opts.nms_params);
            let nms_ms = t2.elapsed().as_secs_f64() * 1e3;
            Ok(ImageDetections {
                image_id: image_id.to_string(),
                boxes: survivors
                    .into_iter()
                    .map(|t| (t.bbox, Some(t.branch)))
                    .collect(),
                timing: (pre_ms, inference_ms, nms_ms),
            })
        }
        HeadVariant::Original => {
            let maps = run_original_head(&neck, config)?;
            let candidates = decode_original_output(&maps, opts.input_size, opts.conf_threshold)?;
            let inference_ms = t1.elapsed().as_secs_f64() * 1e3;

            let t2 = Instant::now();
            let survivors = nms(&candidates, &opts.nms_params);
            let nms_ms = t2.elapsed().as_secs_f64() * 1e3;
            Ok(ImageDetections {
                image_id: image_id.to_string(),
                boxes: survivors.into_iter().map(|b| (b, None)).collect(),
                timing: (pre_ms, inference_ms, nms_ms),
            })
        }
    }
}

/// One detection line: `image_id class_id conf cx cy w h branch`.
fn detection_line(image_id: &str, b: &BBox, branch: Option<ShapeClass>) -> String {
    format!(
        "{image_id} {} {:.6} {:.4} {:.4} {:.4} {:.4} {}\n",
        b.class_id,
        b.confidence,
        b.cx,
        b.cy,
        b.w,
        b.h,
        branch.map(ShapeClass::tag).unwrap_or("-"),
    )
}

/// Runs the selected head over every fixture image, decodes, suppresses, and
/// writes `detections.txt` plus `timing.csv`. Image order (and therefore the
/// output bytes) is independent of the worker count.
pub fn cmd_detect(opts: &DetectOptions) -> Result<DetectSummary> {
    if !(opts.conf_threshold >= 0.0 && opts.conf_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "confidence threshold must lie in [0, 1], got {}",
            opts.conf_threshold
        )));
    }
    let manifest = load_manifest(&opts.fixtures.join("manifest.csv"))?;
    let config = HeadConfig::load_fixtures(&opts.fixtures, opts.variant, opts.input_size)?;
    create_dir(&opts.out)?;

    let ids: Vec<&String> = manifest.keys().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<ImageDetections> = pool.install(|| {
        ids.par_iter()
            .map(|id| detect_one_image(id, &config, opts))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut detections = String::new();
    let mut timing_csv = String::from("image_id,pre_process_ms,inference_ms,nms_ms\n");
    let mut timings = Vec::with_capacity(results.len());
    let mut detection_count = 0usize;
    for r in &results {
        for (b, branch) in &r.boxes {
            detections.push_str(&detection_line(&r.image_id, b, *branch));
            detection_count += 1;
        }
        timing_csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4}\n",
            r.image_id, r.timing.0, r.timing.1, r.timing.2
        ));
        timings.push(r.timing);
    }
    write_text(&opts.out.join("detections.txt"), &detections)?;
    write_text(&opts.out.join("timing.csv"), &timing_csv)?;

    let means = timing_report(&timings)?;
    Ok(DetectSummary {
        image_count: results.len(),
        detection_count,
        timing_means: (means.pre_process, means.inference, means.nms),
    })
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub detections: PathBuf,
    pub labels_dir: PathBuf,
    pub manifest: PathBuf,
    /// Per-image timing CSV; defaults to `timing.csv` next to the detections
    /// file when present.
    pub timing: Option<PathBuf>,
    pub iou_thresholds: Vec<f64>,
    pub out: PathBuf,
}

/// Parses a detections file written by [`cmd_detect`] into per-image boxes.
pub fn load_detections(path: &Path) -> Result<BTreeMap<String, Vec<BBox>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {what} '{s}'"),
            })
        };
        let class_id: u32 = fields[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad class id '{}'", fields[1]),
        })?;
        if fields[7] != "-" && ShapeClass::from_tag(fields[7]).is_none() {
            return Err(Error::Parse {
                line,
                message: format!("bad branch tag '{}'", fields[7]),
            });
        }
        let bbox = BBox::new(
            num(fields[3], "cx")?,
            num(fields[4], "cy")?,
            num(fields[5], "w")?,
            num(fields[6], "h")?,
            class_id,
            num(fields[2], "confidence")?,
        )?;
        map.entry(fields[0].to_string()).or_default().push(bbox);
    }
    Ok(map)
}

fn load_timing_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with("image_id,") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 timing columns, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad duration '{s}'"),
            })
        };
        rows.push((num(fields[1])?, num(fields[2])?, num(fields[3])?));
    }
    Ok(rows)
}

/// Evaluates a detections file against the label store and writes
/// `metrics.txt` (key-value, table column order) and `pr.csv`.
pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalReport> {
    let preds = load_detections(&opts.detections)?;
    let manifest = load_manifest(&opts.manifest)?;
    let labels = load_label_dir(&opts.labels_dir, &manifest)?;
    let store = full_validation_set(&labels, &manifest);
    let gts = store.to_bbox_map()?;

    let mut report = map_at(&preds, &gts, &opts.iou_thresholds)?;

    let timing_path = opts.timing.clone().or_else(|| {
        let sibling = opts.detections.parent()?.join("timing.csv");
        sibling.exists().then_some(sibling)
    });
    if let Some(path) = timing_path {
        let rows = load_timing_csv(&path)?;
        if !rows.is_empty() {
            report.timing = timing_report(&rows)?;
        }
    }

    create_dir(&opts.out)?;
    write_text(&opts.out.join("metrics.txt"), &report.metrics_text())?;
    write_text(&opts.out.join("pr.csv"), &report.pr_curve_csv())?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// stratify

#[derive(Debug, Clone)]
pub struct StratifyOptions {
    pub labels_dir: PathBuf,
    pub manifest: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct StratifySummary {
    /// `(shape class, image count, label count)` per split.
    pub splits: Vec<(ShapeClass, usize, usize)>,
    pub total_images: usize,
    pub total_labels: usize,
}

/// Builds the three aspect-ratio splits and writes one image-id manifest per
/// split (`square.txt`, `wide.txt`, `tall.txt`).
pub fn cmd_stratify(opts: &StratifyOptions) -> Result<StratifySummary> {
    if !opts.manifest.exists() {
        return Err(Error::Config(format!(
            "size manifest {} does not exist",
            opts.manifest.display()
        )));
    }
    let manifest = load_manifest(&opts.manifest)?;
    let labels = load_label_dir(&opts.labels_dir, &manifest)?;
    create_dir(&opts.out)?;

    let mut splits = Vec::new();
    for class in ShapeClass::ALL {
        let split = stratify(&labels, class)?;
        let mut listing = String::new();
        for id in &split.image_ids {
            listing.push_str(id);
            listing.push('\n');
        }
        write_text(&opts.out.join(format!("{}.txt", class.tag())), &listing)?;
        splits.push((class, split.image_count(), split.label_count()));
    }
    Ok(StratifySummary {
        splits,
        total_images: manifest.len(),
        total_labels: labels.len(),
    })
}
