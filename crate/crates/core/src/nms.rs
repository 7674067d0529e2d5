//! Greedy non-maximum suppression, plus the four-pass grouped strategy: one
//! pass per shape-class group, then a final pass over the fused survivors.

use crate::boxes::{confidence_order, iou, BBox, ShapeClass, TaggedBox};
use crate::error::{Error, Result};

/// Suppression parameters, shared by all four passes of the grouped strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsParams {
    /// Boxes overlapping a kept box at or above this IoU are suppressed.
    pub iou_threshold: f64,
    /// Suppress only within the same class id.
    pub per_class: bool,
    /// Survivors are truncated to this count.
    pub max_detections: usize,
}

impl NmsParams {
    pub fn new(iou_threshold: f64, per_class: bool, max_detections: usize) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "NMS IoU threshold must lie in (0, 1), got {iou_threshold}"
            )));
        }
        Ok(NmsParams {
            iou_threshold,
            per_class,
            max_detections,
        })
    }
}

impl Default for NmsParams {
    fn default() -> Self {
        NmsParams {
            iou_threshold: 0.45,
            per_class: true,
            max_detections: 300,
        }
    }
}

/// Decoded candidates of one image, tagged by source branch.
#[derive(Debug, Clone)]
pub struct DetectionSet {
    pub image_id: String,
    pub boxes: Vec<TaggedBox>,
}

/// Greedy suppression returning the kept indices in processing order: a box
/// is kept iff its IoU with every already-kept box (of the same class when
/// `per_class`) is strictly below the threshold.
fn nms_indices(boxes: &[BBox], params: &NmsParams) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &idx in &confidence_order(boxes) {
        if kept.len() >= params.max_detections {
            break;
        }
        let candidate = &boxes[idx];
        let conflicts = kept.iter().any(|&k| {
            let keeper = &boxes[k];
            (!params.per_class || keeper.class_id == candidate.class_id)
                && iou(keeper, candidate) >= params.iou_threshold
        });
        if !conflicts {
            kept.push(idx);
        }
    }
    kept
}

/// Plain greedy NMS. Survivors come back unchanged, ordered by descending
/// confidence, truncated to `max_detections`.
pub fn nms(boxes: &[BBox], params: &NmsParams) -> Vec<BBox> {
    nms_indices(boxes, params)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// The four-pass strategy: NMS within each of the three shape-class groups,
/// then a final NMS over the fused survivors. Every pass uses the same
/// parameters. Branch tags ride along unchanged.
pub fn grouped_nms(dets: &DetectionSet, params: &NmsParams) -> Vec<TaggedBox> {
    let mut fused: Vec<TaggedBox> = Vec::new();
    for branch in ShapeClass::ALL {
        let group: Vec<TaggedBox> = dets
            .boxes
            .iter()
            .filter(|t| t.branch == branch)
            .copied()
            .collect();
        let group_boxes: Vec<BBox> = group.iter().map(|t| t.bbox).collect();
        for idx in nms_indices(&group_boxes, params) {
            fused.push(group[idx]);
        }
    }
    let fused_boxes: Vec<BBox> = fused.iter().map(|t| t.bbox).collect();
    nms_indices(&fused_boxes, params)
        .into_iter()
        .map(|i| fused[i])
        .collect()
}
