//! Box geometry: the center-format bounding box, IoU, and the aspect-ratio
//! shape classes that drive branch grouping and dataset stratification.

use crate::error::{Error, Result};

/// Number of object categories; label class ids live in `[0, NUM_CLASSES)`.
pub const NUM_CLASSES: u32 = 80;

/// Aspect-ratio boundary between the square class and the rectangular ones.
/// A box is Square when `w/h` lies in the closed interval
/// `[1/RATIO_BOUND, RATIO_BOUND]`.
pub const RATIO_BOUND: f64 = 1.2;

/// Axis-aligned box in center format, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    pub confidence: f64,
}

impl BBox {
    /// Builds a box, enforcing the type invariants: finite center, `w,h >= 0`,
    /// class id in range, confidence in `[0,1]`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, class_id: u32, confidence: f64) -> Result<Self> {
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Validation(format!(
                "box center must be finite, got ({cx}, {cy})"
            )));
        }
        if !(w >= 0.0 && h >= 0.0) || !w.is_finite() || !h.is_finite() {
            return Err(Error::Validation(format!(
                "box size must be finite and non-negative, got ({w}, {h})"
            )));
        }
        if class_id >= NUM_CLASSES {
            return Err(Error::Validation(format!(
                "class id {class_id} out of range [0, {NUM_CLASSES})"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!(
                "confidence {confidence} out of range [0, 1]"
            )));
        }
        Ok(BBox {
            cx,
            cy,
            w,
            h,
            class_id,
            confidence,
        })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `(x_min, y_min, x_max, y_max)` corners.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

/// Receptive-field shape class: which head branch a box belongs to, and which
/// stratum a label falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeClass {
    Square,
    Wide,
    Tall,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Square, ShapeClass::Wide, ShapeClass::Tall];

    /// Lower-case tag used in text output formats.
    pub fn tag(self) -> &'static str {
        match self {
            ShapeClass::Square => "square",
            ShapeClass::Wide => "wide",
            ShapeClass::Tall => "tall",
        }
    }

    pub fn from_tag(tag: &str) -> Option<ShapeClass> {
        match tag {
            "square" => Some(ShapeClass::Square),
            "wide" => Some(ShapeClass::Wide),
            "tall" => Some(ShapeClass::Tall),
            _ => None,
        }
    }
}

impl std::fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A box together with the head branch that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedBox {
    pub bbox: BBox,
    pub branch: ShapeClass,
}

/// Deterministic processing order for a box list: confidence descending,
/// ties broken by lower class id, then by input position. Shared by NMS and
/// matching so every sweep is run-invariant.
pub fn confidence_order(boxes: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .confidence
            .partial_cmp(&boxes[a].confidence)
            .expect("confidences are finite")
            .then(boxes[a].class_id.cmp(&boxes[b].class_id))
            .then(a.cmp(&b))
    });
    order
}

/// Intersection over union of two axis-aligned boxes. Returns 0 when the
/// union has zero area, so degenerate boxes are tolerated.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Classifies a `w x h` box into Square / Wide / Tall.
///
/// The comparisons are written multiplicatively (`w > 1.2*h` rather than
/// `w/h > 1.2`) so that boundary handling and the Wide/Tall swap symmetry are
/// exact in floating point. Boundary ratios land in Square.
pub fn classify_shape(w: f64, h: f64) -> Result<ShapeClass> {
    if !w.is_finite() || !h.is_finite() || w < 0.0 || h < 0.0 {
        return Err(Error::Validation(format!(
            "shape classification needs finite non-negative dims, got ({w}, {h})"
        )));
    }
    if h == 0.0 {
        return Err(Error::DegenerateBox(format!(
            "cannot classify a zero-height box ({w} x {h})"
        )));
    }
    if w > RATIO_BOUND * h {
        Ok(ShapeClass::Wide)
    } else if h > RATIO_BOUND * w {
        Ok(ShapeClass::Tall)
    } else {
        Ok(ShapeClass::Square)
    }
}
