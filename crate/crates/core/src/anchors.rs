//! Anchor sets, grid geometry for plain and asymmetrically pooled feature
//! maps, and decoding of raw prediction tensors into boxes.

use std::fmt;

use crate::boxes::{BBox, ShapeClass, TaggedBox, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

/// Channels of one prediction map: 4 box terms + objectness + class logits.
pub const PREDICTION_CHANNELS: usize = 4 + 1 + NUM_CLASSES as usize;

/// Pyramid level of a feature map. P3 is the highest-resolution map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    P3,
    P4,
    P5,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::P3, Level::P4, Level::P5];

    /// Pixels per cell of the unpooled grid at this level.
    pub fn stride(self) -> u32 {
        match self {
            Level::P3 => 8,
            Level::P4 => 16,
            Level::P5 => 32,
        }
    }

    /// Channel count of the neck feature map feeding this level.
    pub fn neck_channels(self) -> usize {
        match self {
            Level::P3 => 256,
            Level::P4 => 512,
            Level::P5 => 1024,
        }
    }

    /// Lower-case tag used in fixture file names and text configs.
    pub fn tag(self) -> &'static str {
        match self {
            Level::P3 => "p3",
            Level::P4 => "p4",
            Level::P5 => "p5",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Level> {
        match tag {
            "p3" | "P3" => Some(Level::P3),
            "p4" | "P4" => Some(Level::P4),
            "p5" | "P5" => Some(Level::P5),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::P3 => "P3",
            Level::P4 => "P4",
            Level::P5 => "P5",
        })
    }
}

/// Pooling applied to a prediction map after the detection convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// No pooling; the grid stays square.
    None,
    /// (1,2) average pooling; shrinks the width by one cell.
    PoolW,
    /// (2,1) average pooling; shrinks the height by one cell.
    PoolH,
}

impl Pooling {
    /// The pooling each branch applies: square maps stay unpooled, wide maps
    /// pool along the width, tall maps pool along the height.
    pub fn for_branch(branch: ShapeClass) -> Pooling {
        match branch {
            ShapeClass::Square => Pooling::None,
            ShapeClass::Wide => Pooling::PoolW,
            ShapeClass::Tall => Pooling::PoolH,
        }
    }

    /// `(kernel_h, kernel_w)` of the pooling window, if any.
    pub fn kernel(self) -> Option<(usize, usize)> {
        match self {
            Pooling::None => None,
            Pooling::PoolW => Some((1, 2)),
            Pooling::PoolH => Some((2, 1)),
        }
    }
}

/// One anchor: prior box dimensions plus the grid it decodes against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSpec {
    pub anchor_w: f64,
    pub anchor_h: f64,
    /// Pixels per cell of the pre-pooling grid.
    pub stride: u32,
    /// Which pooling branch this anchor serves; always consistent with the
    /// sign of `anchor_w - anchor_h`.
    pub branch: ShapeClass,
    pub level: Level,
}

impl AnchorSpec {
    /// Builds an anchor for a level; the branch is derived from the anchor
    /// dimensions, so the branch/dimension invariant holds by construction.
    pub fn new(level: Level, anchor_w: f64, anchor_h: f64) -> Result<Self> {
        if !(anchor_w.is_finite() && anchor_h.is_finite() && anchor_w > 0.0 && anchor_h > 0.0) {
            return Err(Error::Validation(format!(
                "anchor dimensions must be positive and finite, got ({anchor_w}, {anchor_h})"
            )));
        }
        let branch = if anchor_w > anchor_h {
            ShapeClass::Wide
        } else if anchor_w < anchor_h {
            ShapeClass::Tall
        } else {
            ShapeClass::Square
        };
        Ok(AnchorSpec {
            anchor_w,
            anchor_h,
            stride: level.stride(),
            branch,
            level,
        })
    }
}

/// Geometry of one prediction grid: cell counts and cell-center placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub stride: u32,
    pub pooling: Pooling,
}

impl GridGeometry {
    pub fn new(stride: u32, input_size: u32, pooling: Pooling) -> Result<Self> {
        if stride == 0 || !input_size.is_multiple_of(stride) {
            return Err(Error::Config(format!(
                "input size {input_size} is not divisible by stride {stride}"
            )));
        }
        let n = (input_size / stride) as usize;
        let (rows, cols) = match pooling {
            Pooling::None => (n, n),
            Pooling::PoolW => (n, n - 1),
            Pooling::PoolH => (n - 1, n),
        };
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "grid collapses to zero cells at input {input_size}, stride {stride}"
            )));
        }
        Ok(GridGeometry {
            rows,
            cols,
            stride,
            pooling,
        })
    }

    /// Unpooled square grid; the geometry the baseline head decodes against.
    pub fn unpooled(stride: u32, input_size: u32) -> Result<Self> {
        GridGeometry::new(stride, input_size, Pooling::None)
    }

    /// Center of cell `(i, j)` in input pixels. A pooled cell sits at the
    /// arithmetic mean of the two unpooled cell centers it averages over,
    /// matching what average pooling does to the underlying values.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let s = f64::from(self.stride);
        match self.pooling {
            Pooling::None => ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s),
            Pooling::PoolW => ((j as f64 + 1.0) * s, (i as f64 + 0.5) * s),
            Pooling::PoolH => ((j as f64 + 0.5) * s, (i as f64 + 1.0) * s),
        }
    }
}

/// Grid geometry an anchor decodes against: the pooling is the one its
/// branch applies, the cell counts follow from stride and input size.
pub fn grid_geometry(spec: &AnchorSpec, input_size: u32) -> Result<GridGeometry> {
    GridGeometry::new(spec.stride, input_size, Pooling::for_branch(spec.branch))
}

/// The nine-anchor set of the asymmetric head: one anchor per prediction
/// map, squares on the unpooled maps, wide anchors on the width-pooled maps,
/// tall anchors on the height-pooled maps. Ordered P5 first, then P4, P3,
/// with branches in (Square, Wide, Tall) order within a level.
pub fn new_anchor_set() -> Vec<AnchorSpec> {
    let dims: [(Level, [(f64, f64); 3]); 3] = [
        (Level::P5, [(200.0, 200.0), (400.0, 200.0), (200.0, 400.0)]),
        (Level::P4, [(60.0, 60.0), (120.0, 60.0), (60.0, 120.0)]),
        (Level::P3, [(20.0, 20.0), (40.0, 20.0), (20.0, 40.0)]),
    ];
    dims.iter()
        .flat_map(|(level, anchors)| {
            anchors
                .iter()
                .map(|&(w, h)| AnchorSpec::new(*level, w, h).expect("static anchor table"))
        })
        .collect()
}

/// The baseline three-per-level anchor set, grouped by level (P5 first) with
/// each level's anchors in their conventional listing order.
pub fn original_anchor_set() -> Vec<AnchorSpec> {
    let dims: [(Level, [(f64, f64); 3]); 3] = [
        (Level::P5, [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)]),
        (Level::P4, [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)]),
        (Level::P3, [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)]),
    ];
    dims.iter()
        .flat_map(|(level, anchors)| {
            anchors
                .iter()
                .map(|&(w, h)| AnchorSpec::new(*level, w, h).expect("static anchor table"))
        })
        .collect()
}

/// Serializes an anchor set as one `level branch anchor_w anchor_h stride`
/// line per anchor.
pub fn anchors_to_text(anchors: &[AnchorSpec]) -> String {
    let mut out = String::new();
    for a in anchors {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            a.level, a.branch, a.anchor_w, a.anchor_h, a.stride
        ));
    }
    out
}

/// Parses the text form produced by [`anchors_to_text`], validating every
/// field and the branch/dimension consistency invariant.
pub fn anchors_from_text(text: &str) -> Result<Vec<AnchorSpec>> {
    let mut anchors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let level = Level::from_tag(fields[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown level '{}'", fields[0]),
        })?;
        let branch = ShapeClass::from_tag(fields[1]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown branch '{}'", fields[1]),
        })?;
        let parse_num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad {what} '{s}'"),
            })
        };
        let w = parse_num(fields[2], "anchor width")?;
        let h = parse_num(fields[3], "anchor height")?;
        let stride: u32 = fields[4].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad stride '{}'", fields[4]),
        })?;
        let spec = AnchorSpec::new(level, w, h)?;
        if spec.branch != branch {
            return Err(Error::Validation(format!(
                "line {line}: branch '{branch}' inconsistent with dimensions ({w}, {h})"
            )));
        }
        if spec.stride != stride {
            return Err(Error::Validation(format!(
                "line {line}: stride {stride} inconsistent with level {level}"
            )));
        }
        anchors.push(spec);
    }
    Ok(anchors)
}

/// Decodes one raw prediction map into boxes tagged with the anchor's branch.
///
/// Per cell, with channel layout `[tx, ty, tw, th, obj, class logits...]`:
///
/// ```text
/// bx = center_x + (2*sigmoid(tx) - 1) * stride      (same for by)
/// bw = anchor_w * (2*sigmoid(tw))^2                 (same for bh)
/// confidence = sigmoid(obj) * max_c sigmoid(class_c)
/// ```
///
/// so a zero cell decodes to the cell center at anchor size. Boxes below
/// `conf_threshold` are dropped. Cells are visited row-major, so the output
/// order is deterministic.
pub fn decode(
    raw: &Tensor,
    spec: &AnchorSpec,
    geometry: &GridGeometry,
    conf_threshold: f64,
) -> Result<Vec<TaggedBox>> {
    if raw.channels() != PREDICTION_CHANNELS {
        return Err(Error::shape(
            "decode input",
            format!("{PREDICTION_CHANNELS} channels"),
            format!("{} channels", raw.channels()),
        ));
    }
    if raw.height() != geometry.rows || raw.width() != geometry.cols {
        return Err(Error::shape(
            "decode input",
            format!("{}x{} cells", geometry.rows, geometry.cols),
            format!("{}x{} cells", raw.height(), raw.width()),
        ));
    }

    let stride = f64::from(geometry.stride);
    let mut boxes = Vec::new();
    for i in 0..geometry.rows {
        for j in 0..geometry.cols {
            let (center_x, center_y) = geometry.cell_center(i, j);
            let bx = center_x + (2.0 * sigmoid(raw.get(0, i, j)) - 1.0) * stride;
            let by = center_y + (2.0 * sigmoid(raw.get(1, i, j)) - 1.0) * stride;
            let sw = 2.0 * sigmoid(raw.get(2, i, j));
            let sh = 2.0 * sigmoid(raw.get(3, i, j));
            let bw = spec.anchor_w * sw * sw;
            let bh = spec.anchor_h * sh * sh;

            let obj = sigmoid(raw.get(4, i, j));
            let mut best_class = 0u32;
            let mut best_logit = f64::NEG_INFINITY;
            for c in 0..NUM_CLASSES as usize {
                let logit = raw.get(5 + c, i, j);
                if logit > best_logit {
                    best_logit = logit;
                    best_class = c as u32;
                }
            }
            let confidence = obj * sigmoid(best_logit);
            if confidence < conf_threshold {
                continue;
            }
            boxes.push(TaggedBox {
                bbox: BBox::new(bx, by, bw, bh, best_class, confidence)?,
                branch: spec.branch,
            });
        }
    }
    Ok(boxes)
}
