//! Acceptance suite: one test per release criterion, each printing a PASS /
//! SKIP line (visible with `--nocapture`). Every numeric check runs against
//! an oracle implemented independently in this file.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asymdet::anchors::{decode, grid_geometry, new_anchor_set, PREDICTION_CHANNELS};
use asymdet::boxes::{iou, BBox, ShapeClass, TaggedBox};
use asymdet::cli::{
    cmd_detect, cmd_eval, cmd_stratify, cmd_synth, DetectOptions, EvalOptions, StratifyOptions,
    SynthOptions,
};
use asymdet::dataset::{load_label_dir, load_manifest, stratify};
use asymdet::eval::{
    average_precision, map_at, precision_recall, standard_iou_thresholds, ConfusionCounts,
};
use asymdet::head::{run_head, synthetic_neck_maps, HeadConfig, HeadVariant, LevelConv};
use asymdet::nms::{grouped_nms, nms, DetectionSet, NmsParams};
use asymdet::tensor::{avg_pool, Tensor};

fn assert_within_budget(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed < budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

// ---------------------------------------------------------------------------
// shape suite

#[test]
fn criterion_shape_suite() {
    let start = Instant::now();
    let config = HeadConfig::seeded(0, HeadVariant::Asym, 640).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let neck = synthetic_neck_maps(&mut rng, 640).unwrap();
    let out = run_head(&neck, &config).unwrap();
    let shapes: Vec<(usize, usize, usize)> = out.maps.iter().map(|(t, _)| t.shape()).collect();
    assert_eq!(
        shapes,
        vec![
            (85, 20, 20),
            (85, 20, 19),
            (85, 19, 20),
            (85, 40, 40),
            (85, 40, 39),
            (85, 39, 40),
            (85, 80, 80),
            (85, 80, 79),
            (85, 79, 80),
        ]
    );
    assert_within_budget(start.elapsed(), Duration::from_secs(1), "shape suite");
    println!("PASS shape-suite: head emits the nine expected map shapes at input 640");
}

// ---------------------------------------------------------------------------
// pooling oracle

fn avg_pool_oracle(input: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Tensor {
    let out_h = (input.height() - kernel.0) / stride.0 + 1;
    let out_w = (input.width() - kernel.1) / stride.1 + 1;
    Tensor::from_fn(input.channels(), out_h, out_w, |c, oi, oj| {
        let mut sum = 0.0;
        for di in 0..kernel.0 {
            for dj in 0..kernel.1 {
                sum += input.get(c, oi * stride.0 + di, oj * stride.1 + dj);
            }
        }
        sum / (kernel.0 * kernel.1) as f64
    })
    .unwrap()
}

#[test]
fn criterion_pooling_oracle() {
    let start = Instant::now();
    let kernels = [(1usize, 2usize), (2, 1), (2, 2)];
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // sizes up to 85x80x80; a handful of runs pinned at the maximum
        let (c, h, w) = if seed % 200 == 0 {
            (85, 80, 80)
        } else {
            (
                rng.random_range(1..=85usize),
                rng.random_range(2..=80usize),
                rng.random_range(2..=80usize),
            )
        };
        let input = Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-5.0..5.0)).unwrap();
        let kernel = kernels[(seed % 3) as usize];
        let stride = (1, 1);
        let got = avg_pool(&input, kernel, stride).unwrap();
        let want = avg_pool_oracle(&input, kernel, stride);
        assert_eq!(got.shape(), want.shape(), "seed {seed}");
        for (a, b) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12, "seed {seed}: max abs diff {worst}");
    }
    assert_within_budget(start.elapsed(), Duration::from_secs(30), "pooling oracle");
    println!("PASS pooling-oracle: 1000 seeded tensors, max abs diff {worst:.3e} < 1e-12");
}

// ---------------------------------------------------------------------------
// decode round-trip

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn criterion_decode_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut cells_checked = 0usize;
    for spec in new_anchor_set() {
        let geom = grid_geometry(&spec, 640).unwrap();
        let raw = Tensor::from_fn(PREDICTION_CHANNELS, geom.rows, geom.cols, |_, _, _| {
            rng.random_range(-6.0..6.0)
        })
        .unwrap();
        let boxes = decode(&raw, &spec, &geom, 0.0).unwrap();
        assert_eq!(boxes.len(), geom.rows * geom.cols);
        let stride = f64::from(geom.stride);
        for (cell, tagged) in boxes.iter().enumerate() {
            let (i, j) = (cell / geom.cols, cell % geom.cols);
            let (cx, cy) = geom.cell_center(i, j);
            let b = &tagged.bbox;
            // inverse formulas re-derive the raw cell values
            let tx = logit(((b.cx - cx) / stride + 1.0) / 2.0);
            let ty = logit(((b.cy - cy) / stride + 1.0) / 2.0);
            let tw = logit((b.w / spec.anchor_w).sqrt() / 2.0);
            let th = logit((b.h / spec.anchor_h).sqrt() / 2.0);
            assert!((tx - raw.get(0, i, j)).abs() < 1e-6);
            assert!((ty - raw.get(1, i, j)).abs() < 1e-6);
            assert!((tw - raw.get(2, i, j)).abs() < 1e-6);
            assert!((th - raw.get(3, i, j)).abs() < 1e-6);
            cells_checked += 1;
        }
    }
    assert!(
        cells_checked >= 10_000,
        "only {cells_checked} cells checked"
    );
    assert_within_budget(
        start.elapsed(),
        Duration::from_secs(10),
        "decode round-trip",
    );
    println!("PASS decode-round-trip: {cells_checked} cells re-encoded within 1e-6");
}

// ---------------------------------------------------------------------------
// NMS oracle

/// Selection-style greedy NMS: repeatedly keep the best remaining box and
/// delete everything it suppresses. Equivalent definition, independent
/// mechanics (no sorting).
fn nms_oracle(boxes: &[BBox], params: &NmsParams) -> Vec<BBox> {
    let mut alive: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() && kept.len() < params.max_detections {
        let mut best = alive[0];
        for &i in &alive[1..] {
            let (a, b) = (&boxes[i], &boxes[best]);
            let better = a.confidence > b.confidence
                || (a.confidence == b.confidence
                    && (a.class_id < b.class_id || (a.class_id == b.class_id && i < best)));
            if better {
                best = i;
            }
        }
        let keeper = boxes[best];
        kept.push(keeper);
        alive.retain(|&i| {
            i != best
                && !((!params.per_class || boxes[i].class_id == keeper.class_id)
                    && iou(&keeper, &boxes[i]) >= params.iou_threshold)
        });
    }
    kept
}

fn random_box_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<BBox> {
    (0..n)
        .map(|_| {
            let conf = (rng.random_range(0.0..=1.0f64) * 50.0).round() / 50.0;
            BBox::new(
                rng.random_range(0.0..120.0),
                rng.random_range(0.0..120.0),
                rng.random_range(1.0..50.0),
                rng.random_range(1.0..50.0),
                rng.random_range(0..3),
                conf,
            )
            .unwrap()
        })
        .collect()
}

fn assert_conflict_free(survivors: &[BBox], params: &NmsParams) {
    for (i, a) in survivors.iter().enumerate() {
        for b in &survivors[i + 1..] {
            if !params.per_class || a.class_id == b.class_id {
                assert!(iou(a, b) < params.iou_threshold);
            }
        }
    }
}

#[test]
fn criterion_nms_oracle() {
    let start = Instant::now();
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let n = rng.random_range(0..=30usize);
        let boxes = random_box_set(&mut rng, n);
        let max_det = [5usize, 20, 300][rng.random_range(0..3usize)];
        let params =
            NmsParams::new(rng.random_range(0.2..0.8), rng.random_bool(0.5), max_det).unwrap();

        // plain NMS against the oracle, exact
        let got = nms(&boxes, &params);
        assert_eq!(got, nms_oracle(&boxes, &params), "seed {seed}");
        assert_conflict_free(&got, &params);
        assert_eq!(nms(&got, &params), got, "seed {seed}: not idempotent");

        // grouped NMS against the composed oracle, exact
        let tagged: Vec<TaggedBox> = boxes
            .iter()
            .map(|&bbox| TaggedBox {
                bbox,
                branch: ShapeClass::ALL[rng.random_range(0..3usize)],
            })
            .collect();
        let dets = DetectionSet {
            image_id: "img".into(),
            boxes: tagged.clone(),
        };
        let mut fused = Vec::new();
        for branch in ShapeClass::ALL {
            let group: Vec<BBox> = tagged
                .iter()
                .filter(|t| t.branch == branch)
                .map(|t| t.bbox)
                .collect();
            fused.extend(nms_oracle(&group, &params));
        }
        let want_grouped = nms_oracle(&fused, &params);
        let got_grouped: Vec<BBox> = grouped_nms(&dets, &params).iter().map(|t| t.bbox).collect();
        assert_eq!(got_grouped, want_grouped, "seed {seed}");
        assert_conflict_free(&got_grouped, &params);
    }
    assert_within_budget(start.elapsed(), Duration::from_secs(30), "NMS oracle");
    println!("PASS nms-oracle: plain and grouped NMS match brute force on 1000 seeded sets");
}

// ---------------------------------------------------------------------------
// AP / mAP oracle

/// Literal greedy matching, independent of the library implementation.
fn match_oracle(preds: &[BBox], gts: &[BBox], thresh: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap()
            .then(preds[a].class_id.cmp(&preds[b].class_id))
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut flags = vec![false; preds.len()];
    for pi in order {
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.class_id != preds[pi].class_id {
                continue;
            }
            let v = iou(&preds[pi], g);
            if v >= thresh && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, gi));
            }
        }
        if let Some((_, gi)) = best {
            taken[gi] = true;
            flags[pi] = true;
        }
    }
    flags
}

/// Exact rectangle-sum AP: mean over the 101 grid recalls of the best raw
/// precision among cuts reaching that recall. No envelope machinery.
fn ap_oracle(flags: &[bool], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        tp += f as usize;
        points.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = points
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 101.0
}

/// Full independent evaluation: match, pool, slice per class, rectangle-sum.
fn map_oracle(
    preds: &BTreeMap<String, Vec<BBox>>,
    gts: &BTreeMap<String, Vec<BBox>>,
    thresholds: &[f64],
) -> (f64, f64, BTreeMap<u32, f64>) {
    let mut gt_per_class: BTreeMap<u32, usize> = BTreeMap::new();
    for boxes in gts.values() {
        for b in boxes {
            *gt_per_class.entry(b.class_id).or_insert(0) += 1;
        }
    }
    let empty: Vec<BBox> = Vec::new();
    let mut image_ids: Vec<&String> = gts.keys().chain(preds.keys()).collect();
    image_ids.sort();
    image_ids.dedup();

    let mut per_threshold = Vec::new();
    let mut first_per_class = BTreeMap::new();
    for (ti, &t) in thresholds.iter().enumerate() {
        // pooled (conf, image, idx, class, flag), sorted like the library
        let mut pool: Vec<(f64, &str, usize, u32, bool)> = Vec::new();
        for id in &image_ids {
            let p = preds.get(*id).unwrap_or(&empty);
            let g = gts.get(*id).unwrap_or(&empty);
            let flags = match_oracle(p, g, t);
            for (k, b) in p.iter().enumerate() {
                pool.push((b.confidence, id.as_str(), k, b.class_id, flags[k]));
            }
        }
        pool.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| a.1.cmp(b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut ap_sum = 0.0;
        for (&class, &gt_count) in &gt_per_class {
            let flags: Vec<bool> = pool.iter().filter(|e| e.3 == class).map(|e| e.4).collect();
            let ap = ap_oracle(&flags, gt_count);
            ap_sum += ap;
            if ti == 0 {
                first_per_class.insert(class, ap);
            }
        }
        per_threshold.push(ap_sum / gt_per_class.len() as f64);
    }
    let map50 = per_threshold[0];
    let map5095 = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
    (map50, map5095, first_per_class)
}

#[test]
fn criterion_ap_map_oracle() {
    let start = Instant::now();
    let thresholds = standard_iou_thresholds();

    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let mk = |rng: &mut ChaCha8Rng, conf: f64| {
            BBox::new(
                rng.random_range(0.0..80.0),
                rng.random_range(0.0..80.0),
                rng.random_range(4.0..30.0),
                rng.random_range(4.0..30.0),
                rng.random_range(0..3),
                conf,
            )
            .unwrap()
        };
        let n_images = rng.random_range(1..=5usize);
        let mut preds = BTreeMap::new();
        let mut gts = BTreeMap::new();
        let mut total_gt = 0usize;
        let mut budget_preds = 10usize;
        let mut budget_gts = 10usize;
        for i in 0..n_images {
            let id = format!("img{i}");
            let ng = rng.random_range(0..=budget_gts.min(4));
            budget_gts -= ng;
            total_gt += ng;
            gts.insert(
                id.clone(),
                (0..ng).map(|_| mk(&mut rng, 1.0)).collect::<Vec<_>>(),
            );
            let np = rng.random_range(0..=budget_preds.min(4));
            budget_preds -= np;
            let boxes: Vec<BBox> = (0..np)
                .map(|_| {
                    let conf = (rng.random_range(0.05..0.95f64) * 40.0).round() / 40.0;
                    mk(&mut rng, conf)
                })
                .collect();
            preds.insert(id, boxes);
        }
        if total_gt == 0 {
            continue;
        }

        let report = map_at(&preds, &gts, &thresholds).unwrap();
        let (want50, want5095, want_per_class) = map_oracle(&preds, &gts, &thresholds);
        assert!((report.map50 - want50).abs() < 1e-9, "seed {seed}");
        assert!((report.map50_95 - want5095).abs() < 1e-9, "seed {seed}");
        for (class, want_ap) in &want_per_class {
            assert!(
                (report.per_class_ap[class] - want_ap).abs() < 1e-9,
                "seed {seed} class {class}"
            );
        }

        // AP itself against the oracle on the raw flag sequences
        let n = rng.random_range(0..=10usize);
        let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let gt = flags.iter().filter(|&&f| f).count() + rng.random_range(0..3usize);
        if gt > 0 {
            assert!((average_precision(&flags, gt) - ap_oracle(&flags, gt)).abs() < 1e-9);
        }
    }

    // perfect detector scores exactly 1.0
    let gt_boxes = vec![
        BBox::new(20.0, 20.0, 10.0, 10.0, 0, 1.0).unwrap(),
        BBox::new(50.0, 50.0, 16.0, 8.0, 1, 1.0).unwrap(),
    ];
    let perfect: BTreeMap<String, Vec<BBox>> = [("a".to_string(), gt_boxes.clone())].into();
    let report = map_at(&perfect, &perfect, &thresholds).unwrap();
    assert_eq!(report.map50, 1.0);
    assert_eq!(report.map50_95, 1.0);

    // empty detector scores exactly 0.0
    let none: BTreeMap<String, Vec<BBox>> = BTreeMap::new();
    let gts: BTreeMap<String, Vec<BBox>> = [("a".to_string(), gt_boxes)].into();
    let report = map_at(&none, &gts, &thresholds).unwrap();
    assert_eq!(report.map50, 0.0);
    assert_eq!(report.map50_95, 0.0);

    assert_within_budget(start.elapsed(), Duration::from_secs(30), "AP/mAP oracle");
    println!("PASS ap-map-oracle: 200 toy datasets match the rectangle-sum oracle within 1e-9");
}

// ---------------------------------------------------------------------------
// precision / recall unit cases

#[test]
fn criterion_precision_recall_cases() {
    let pr = |tp, fp, fn_| precision_recall(&ConfusionCounts { tp, fp, fn_ });
    assert_eq!(pr(10, 0, 0), (1.0, 1.0));
    assert_eq!(pr(3, 1, 2), (0.75, 0.6));
    println!("PASS precision-recall: (10,0,0) -> (1.0,1.0) and (3,1,2) -> (0.75,0.6), exact");
}

// ---------------------------------------------------------------------------
// parameter-count invariant

#[test]
fn criterion_parameter_count() {
    let head = HeadConfig::seeded(0, HeadVariant::Asym, 640).unwrap();
    let identity_branch_convs: usize = head.convs().iter().map(LevelConv::parameter_count).sum();
    assert_eq!(head.parameter_count(), identity_branch_convs);
    assert_eq!(head.parameter_count(), 85 * (1024 + 512 + 256) + 3 * 85);
    println!(
        "PASS parameter-count: asym head has {} parameters, all in the convolutions",
        head.parameter_count()
    );
}

// ---------------------------------------------------------------------------
// stratification partition

#[test]
fn criterion_stratification_partition() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&SynthOptions {
        out: dir.path().to_path_buf(),
        seed: 77,
        image_count: 12,
        input_size: 640,
    })
    .unwrap();
    let manifest = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    let labels = load_label_dir(&dir.path().join("labels"), &manifest).unwrap();
    assert!(!labels.is_empty());

    let key = |l: &asymdet::dataset::LabelRecord| (l.image_id.clone(), l.to_line());
    let splits: Vec<_> = ShapeClass::ALL
        .iter()
        .map(|&c| stratify(&labels, c).unwrap())
        .collect();

    // exhaustive: split sizes sum to the total and every label appears once
    let total: usize = splits.iter().map(|s| s.labels.len()).sum();
    assert_eq!(total, labels.len());
    let mut seen: Vec<_> = splits
        .iter()
        .flat_map(|s| s.labels.iter().map(key))
        .collect();
    seen.sort();
    let mut all: Vec<_> = labels.iter().map(key).collect();
    all.sort();
    assert_eq!(seen, all);

    // disjoint: no label key occurs in two splits
    for (i, a) in splits.iter().enumerate() {
        for b in &splits[i + 1..] {
            let keys_a: std::collections::BTreeSet<_> = a.labels.iter().map(key).collect();
            assert!(b.labels.iter().all(|l| !keys_a.contains(&key(l))));
        }
    }

    // idempotent: re-stratifying a split is the identity
    for s in &splits {
        let again = stratify(&s.labels, s.shape_class).unwrap();
        assert_eq!(again.labels.len(), s.labels.len());
        assert_eq!(again.image_ids, s.image_ids);
    }

    assert_within_budget(start.elapsed(), Duration::from_secs(5), "stratification");
    println!("PASS stratification: splits are disjoint, exhaustive, and idempotent");
}

// ---------------------------------------------------------------------------
// stratification counts on real validation labels (data-dependent, optional)

#[test]
fn criterion_coco_stratification_counts() {
    let Some(dir) = std::env::var_os("ASYMDET_COCO_DIR").map(std::path::PathBuf::from) else {
        println!(
            "SKIP coco-stratification: set ASYMDET_COCO_DIR to a directory holding \
             labels/*.txt and manifest.csv for the 5,000-image validation set"
        );
        return;
    };
    let start = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let summary = cmd_stratify(&StratifyOptions {
        labels_dir: dir.join("labels"),
        manifest: dir.join("manifest.csv"),
        out: out.path().to_path_buf(),
    })
    .unwrap();

    let within = |got: usize, want: usize| {
        let tol = 0.03 * want as f64;
        (got as f64 - want as f64).abs() <= tol
    };
    let by_class = |c: ShapeClass| {
        summary
            .splits
            .iter()
            .find(|(class, _, _)| *class == c)
            .map(|&(_, images, labels)| (images, labels))
            .unwrap()
    };
    let (sq_img, _) = by_class(ShapeClass::Square);
    let (wd_img, wd_lab) = by_class(ShapeClass::Wide);
    let (tl_img, tl_lab) = by_class(ShapeClass::Tall);
    assert!(within(sq_img, 2988), "square images {sq_img} vs 2988 +-3%");
    assert!(within(wd_img, 3158), "wide images {wd_img} vs 3158 +-3%");
    assert!(within(wd_lab, 8522), "wide labels {wd_lab} vs 8522 +-3%");
    assert!(within(tl_img, 4061), "tall images {tl_img} vs 4061 +-3%");
    assert!(within(tl_lab, 21578), "tall labels {tl_lab} vs 21578 +-3%");
    assert!(within(summary.total_images, 5000));
    assert!(within(summary.total_labels, 36335));

    assert_within_budget(
        start.elapsed(),
        Duration::from_secs(60),
        "coco stratification",
    );
    println!("PASS coco-stratification: split counts within 3% of the published figures");
}

// ---------------------------------------------------------------------------
// end-to-end determinism

fn strip_timing_lines(metrics: &str) -> String {
    metrics
        .lines()
        .filter(|l| !l.contains("_ms"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_determinism() {
    let fixtures = tempfile::tempdir().unwrap();
    cmd_synth(&SynthOptions {
        out: fixtures.path().to_path_buf(),
        seed: 42,
        image_count: 2,
        input_size: 640,
    })
    .unwrap();

    let run = |out_dir: &std::path::Path, workers: usize| {
        cmd_detect(&DetectOptions {
            fixtures: fixtures.path().to_path_buf(),
            out: out_dir.to_path_buf(),
            variant: HeadVariant::Asym,
            conf_threshold: 0.25,
            nms_params: NmsParams::default(),
            input_size: 640,
            workers,
        })
        .unwrap();
        cmd_eval(&EvalOptions {
            detections: out_dir.join("detections.txt"),
            labels_dir: fixtures.path().join("labels"),
            manifest: fixtures.path().join("manifest.csv"),
            timing: None,
            iou_thresholds: standard_iou_thresholds(),
            out: out_dir.to_path_buf(),
        })
        .unwrap();
        let read = |name: &str| std::fs::read_to_string(out_dir.join(name)).unwrap();
        (read("detections.txt"), read("metrics.txt"), read("pr.csv"))
    };

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // different worker counts must not change a single byte
    let (det_a, met_a, pr_a) = run(a.path(), 1);
    let (det_b, met_b, pr_b) = run(b.path(), 4);

    assert!(!det_a.is_empty());
    assert_eq!(det_a, det_b);
    assert_eq!(strip_timing_lines(&met_a), strip_timing_lines(&met_b));
    assert_eq!(pr_a, pr_b);
    println!(
        "PASS determinism: detect+eval outputs are byte-identical across runs and worker counts"
    );
}
