//! Detection evaluation: greedy IoU matching, confusion counts, precision /
//! recall, 101-point interpolated average precision, mAP at one or many IoU
//! thresholds, and the per-stage timing summary.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::boxes::{confidence_order, iou, BBox};
use crate::error::{Error, Result};

/// Recall grid size of the interpolated PR curve (samples at 0.00, 0.01,
/// ..., 1.00).
pub const PR_SAMPLES: usize = 101;

/// The ten-threshold ladder behind the `.5:.95` mAP convention.
pub fn standard_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Detection confusion counts. True negatives are undefined for detection
/// and always zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    /// False negatives. (`fn` is reserved in Rust.)
    pub fn_: usize,
}

/// `(precision, recall)` per the usual ratios, with `0/0` defined as 0.
pub fn precision_recall(c: &ConfusionCounts) -> (f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// Result of matching one image's predictions against its ground truth.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// `flags[i]` is true iff `preds[i]` is a true positive.
    pub flags: Vec<bool>,
    /// Ground-truth boxes left unmatched (the false negatives).
    pub unmatched_gt: usize,
}

/// Greedy matching: predictions are visited in confidence-descending order
/// (deterministic tie-break) and each takes the unmatched same-class ground
/// truth with the highest IoU at or above `iou_thresh`. Each ground truth
/// matches at most once; IoU ties go to the earliest ground truth.
pub fn match_predictions(preds: &[BBox], gts: &[BBox], iou_thresh: f64) -> MatchResult {
    let mut flags = vec![false; preds.len()];
    let mut taken = vec![false; gts.len()];
    for &pi in &confidence_order(preds) {
        let p = &preds[pi];
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.class_id != p.class_id {
                continue;
            }
            let v = iou(p, g);
            if v >= iou_thresh && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, gi));
            }
        }
        if let Some((_, gi)) = best {
            taken[gi] = true;
            flags[pi] = true;
        }
    }
    MatchResult {
        flags,
        unmatched_gt: taken.iter().filter(|t| !**t).count(),
    }
}

/// Interpolated PR curve: cumulative precision/recall along the
/// confidence-descending flag sequence, precision made non-increasing by a
/// right-to-left envelope, sampled at the 101 recall grid points.
pub fn pr_curve_samples(flags: &[bool], total_gt: usize) -> Vec<(f64, f64)> {
    let mut precisions = Vec::with_capacity(flags.len());
    let mut recalls = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        precisions.push(tp as f64 / (k + 1) as f64);
        recalls.push(if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        });
    }
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }
    (0..PR_SAMPLES)
        .map(|i| {
            let r = i as f64 / (PR_SAMPLES - 1) as f64;
            let idx = recalls.partition_point(|&rec| rec < r);
            let p = if idx < precisions.len() {
                precisions[idx]
            } else {
                0.0
            };
            (r, p)
        })
        .collect()
}

/// 101-point interpolated average precision over confidence-ordered TP/FP
/// flags. A class with no ground truth scores 0 here and is excluded from
/// class averaging by [`map_at`].
pub fn average_precision(flags: &[bool], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    let sum: f64 = pr_curve_samples(flags, total_gt)
        .iter()
        .map(|(_, p)| p)
        .sum();
    sum / PR_SAMPLES as f64
}

/// Per-stage wall-clock means, in milliseconds per image.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingMs {
    pub pre_process: f64,
    pub inference: f64,
    pub nms: f64,
}

/// Arithmetic means of per-image `(pre-process, inference, NMS)` durations.
pub fn timing_report(per_image_ms: &[(f64, f64, f64)]) -> Result<TimingMs> {
    if per_image_ms.is_empty() {
        return Err(Error::Validation(
            "timing report needs at least one image".into(),
        ));
    }
    let n = per_image_ms.len() as f64;
    let sum = per_image_ms.iter().fold((0.0, 0.0, 0.0), |acc, d| {
        (acc.0 + d.0, acc.1 + d.1, acc.2 + d.2)
    });
    Ok(TimingMs {
        pre_process: sum.0 / n,
        inference: sum.1 / n,
        nms: sum.2 / n,
    })
}

/// Full evaluation summary.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Precision at the max-F1 operating point of the aggregate curve.
    pub precision: f64,
    /// Recall at the same operating point.
    pub recall: f64,
    /// Mean per-class AP at the first IoU threshold.
    pub map50: f64,
    /// Mean per-class AP averaged over every supplied IoU threshold.
    pub map50_95: f64,
    /// AP per class (first threshold), classes present in ground truth only.
    pub per_class_ap: BTreeMap<u32, f64>,
    /// Number of classes present in ground truth.
    pub class_count: usize,
    /// 101 `(recall, precision)` samples per class, at the first threshold.
    pub pr_curve: BTreeMap<u32, Vec<(f64, f64)>>,
    /// Per-stage timing means; zero unless the caller supplies measurements.
    pub timing: TimingMs,
}

impl EvalReport {
    /// Key-value text form, one metric per line, leading with the table
    /// column order P, R, mAP@first-threshold, mAP-averaged, then timings.
    pub fn metrics_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("precision {:.6}\n", self.precision));
        s.push_str(&format!("recall {:.6}\n", self.recall));
        s.push_str(&format!("map50 {:.6}\n", self.map50));
        s.push_str(&format!("map50_95 {:.6}\n", self.map50_95));
        s.push_str(&format!("pre_process_ms {:.1}\n", self.timing.pre_process));
        s.push_str(&format!("inference_ms {:.1}\n", self.timing.inference));
        s.push_str(&format!("nms_ms {:.1}\n", self.timing.nms));
        s.push_str(&format!("classes {}\n", self.class_count));
        for (class, ap) in &self.per_class_ap {
            s.push_str(&format!("ap {class} {ap:.6}\n"));
        }
        s
    }

    /// PR-curve CSV: `class_id,recall,precision`, 101 rows per class.
    pub fn pr_curve_csv(&self) -> String {
        let mut s = String::from("class_id,recall,precision\n");
        for (class, samples) in &self.pr_curve {
            for (r, p) in samples {
                s.push_str(&format!("{class},{r:.2},{p:.6}\n"));
            }
        }
        s
    }
}

/// One pooled prediction: enough to order flags deterministically.
#[derive(Debug, Clone, Copy)]
struct PooledFlag<'a> {
    confidence: f64,
    image_id: &'a str,
    index: usize,
    class_id: u32,
    hit: bool,
}

fn sort_pooled(pool: &mut [PooledFlag<'_>]) {
    pool.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .expect("confidences are finite")
            .then_with(|| a.image_id.cmp(b.image_id))
            .then(a.index.cmp(&b.index))
    });
}

/// Evaluates predictions against ground truth over a list of IoU match
/// thresholds. `map50` uses the first threshold; `map50_95` averages over
/// the whole list, so passing [`standard_iou_thresholds`] yields the usual
/// pair of headline numbers.
pub fn map_at(
    preds: &BTreeMap<String, Vec<BBox>>,
    gts: &BTreeMap<String, Vec<BBox>>,
    iou_thresholds: &[f64],
) -> Result<EvalReport> {
    if iou_thresholds.is_empty() {
        return Err(Error::Config("need at least one IoU threshold".into()));
    }
    for &t in iou_thresholds {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold must lie in (0, 1], got {t}"
            )));
        }
    }

    let mut gt_per_class: BTreeMap<u32, usize> = BTreeMap::new();
    for boxes in gts.values() {
        for b in boxes {
            *gt_per_class.entry(b.class_id).or_insert(0) += 1;
        }
    }
    let total_gt: usize = gt_per_class.values().sum();
    if total_gt == 0 {
        return Err(Error::EmptyDataset(
            "no ground-truth labels to evaluate against".into(),
        ));
    }

    let empty: Vec<BBox> = Vec::new();
    let image_ids: Vec<&String> = {
        let mut ids: BTreeSet<&String> = gts.keys().collect();
        ids.extend(preds.keys());
        ids.into_iter().collect()
    };

    // Per-image matching is independent; parallel map preserves input order,
    // so pooling below is run-invariant.
    let per_image: Vec<Vec<Vec<bool>>> = image_ids
        .par_iter()
        .map(|id| {
            let p = preds.get(*id).unwrap_or(&empty);
            let g = gts.get(*id).unwrap_or(&empty);
            iou_thresholds
                .iter()
                .map(|&t| match_predictions(p, g, t).flags)
                .collect()
        })
        .collect();

    // Pool flags per threshold, then slice per class.
    let classes: Vec<u32> = gt_per_class.keys().copied().collect();
    let mut mean_ap_per_threshold = Vec::with_capacity(iou_thresholds.len());
    let mut per_class_ap = BTreeMap::new();
    let mut pr_curve = BTreeMap::new();
    let mut aggregate_first: Vec<PooledFlag<'_>> = Vec::new();

    for (ti, _t) in iou_thresholds.iter().enumerate() {
        let mut pool: Vec<PooledFlag<'_>> = Vec::new();
        for (ii, id) in image_ids.iter().enumerate() {
            let p = preds.get(*id).unwrap_or(&empty);
            for (k, b) in p.iter().enumerate() {
                pool.push(PooledFlag {
                    confidence: b.confidence,
                    image_id: id.as_str(),
                    index: k,
                    class_id: b.class_id,
                    hit: per_image[ii][ti][k],
                });
            }
        }
        sort_pooled(&mut pool);
        if ti == 0 {
            aggregate_first = pool.clone();
        }

        let mut ap_sum = 0.0;
        for &class in &classes {
            let flags: Vec<bool> = pool
                .iter()
                .filter(|f| f.class_id == class)
                .map(|f| f.hit)
                .collect();
            let class_gt = gt_per_class[&class];
            let ap = average_precision(&flags, class_gt);
            ap_sum += ap;
            if ti == 0 {
                per_class_ap.insert(class, ap);
                pr_curve.insert(class, pr_curve_samples(&flags, class_gt));
            }
        }
        mean_ap_per_threshold.push(ap_sum / classes.len() as f64);
    }

    // Operating point: the confidence cut maximizing F1 on the aggregate
    // (all-class) sweep at the first threshold.
    let (mut best_f1, mut best_pr) = (-1.0f64, (0.0, 0.0));
    let mut tp = 0usize;
    for (k, f) in aggregate_first.iter().enumerate() {
        tp += f.hit as usize;
        let p = tp as f64 / (k + 1) as f64;
        let r = tp as f64 / total_gt as f64;
        let f1 = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        if f1 > best_f1 {
            best_f1 = f1;
            best_pr = (p, r);
        }
    }

    Ok(EvalReport {
        precision: best_pr.0,
        recall: best_pr.1,
        map50: mean_ap_per_threshold[0],
        map50_95: mean_ap_per_threshold.iter().sum::<f64>() / mean_ap_per_threshold.len() as f64,
        per_class_ap,
        class_count: classes.len(),
        pr_curve,
        timing: TimingMs::default(),
    })
}
