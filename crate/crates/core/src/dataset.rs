//! Label ingestion and aspect-ratio stratification.
//!
//! Labels arrive as one text file per image (`<image_id>.txt`, five numbers
//! per line: class id and normalized center/size), plus an image-size
//! manifest CSV (`image_id,width,height`) for denormalization. Stratification
//! is computed on pixel dimensions and filters at label granularity: an image
//! stays in a split as long as at least one of its labels matches.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::boxes::{classify_shape, BBox, ShapeClass, NUM_CLASSES};
use crate::error::{Error, Result};

/// One parsed label: normalized coordinates plus the owning image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub class_id: u32,
    pub cx_n: f64,
    pub cy_n: f64,
    pub w_n: f64,
    pub h_n: f64,
    pub image_id: String,
    pub image_w: u32,
    pub image_h: u32,
}

impl LabelRecord {
    pub fn pixel_w(&self) -> f64 {
        self.w_n * f64::from(self.image_w)
    }

    pub fn pixel_h(&self) -> f64 {
        self.h_n * f64::from(self.image_h)
    }

    /// Shape class of the label in pixel space.
    pub fn shape_class(&self) -> Result<ShapeClass> {
        classify_shape(self.pixel_w(), self.pixel_h())
    }

    /// Pixel-space box with confidence 1.0, for use as ground truth.
    pub fn to_bbox(&self) -> Result<BBox> {
        BBox::new(
            self.cx_n * f64::from(self.image_w),
            self.cy_n * f64::from(self.image_h),
            self.pixel_w(),
            self.pixel_h(),
            self.class_id,
            1.0,
        )
    }

    /// The five-number text line of this label.
    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.cx_n, self.cy_n, self.w_n, self.h_n
        )
    }
}

/// Parses one label file's text. Each non-empty line must hold five
/// whitespace-separated numbers; class ids must be integral in
/// `[0, NUM_CLASSES)`, coordinates normalized to `[0, 1]` with positive size.
pub fn parse_labels(
    label_text: &str,
    image_id: &str,
    image_w: u32,
    image_h: u32,
) -> Result<Vec<LabelRecord>> {
    if image_w == 0 || image_h == 0 {
        return Err(Error::Validation(format!(
            "image '{image_id}' has degenerate size {image_w}x{image_h}"
        )));
    }
    let mut records = Vec::new();
    for (idx, raw) in label_text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let class_id: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("class id '{}' is not a non-negative integer", fields[0]),
        })?;
        if class_id >= NUM_CLASSES {
            return Err(Error::Validation(format!(
                "line {line}: class id {class_id} out of range [0, {NUM_CLASSES})"
            )));
        }
        let mut nums = [0.0f64; 4];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("'{field}' is not a number"),
            })?;
        }
        let [cx_n, cy_n, w_n, h_n] = nums;
        for v in nums {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "line {line}: coordinate {v} outside [0, 1]"
                )));
            }
        }
        if w_n <= 0.0 || h_n <= 0.0 {
            return Err(Error::Validation(format!(
                "line {line}: box size must be positive, got {w_n} x {h_n}"
            )));
        }
        records.push(LabelRecord {
            class_id,
            cx_n,
            cy_n,
            w_n,
            h_n,
            image_id: image_id.to_string(),
            image_w,
            image_h,
        });
    }
    Ok(records)
}

/// Image-size manifest: id to `(width, height)`.
pub type SizeManifest = BTreeMap<String, (u32, u32)>;

/// Reads an `image_id,width,height` CSV. A literal header row is tolerated.
pub fn load_manifest(path: &Path) -> Result<SizeManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = SizeManifest::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed == "image_id,width,height" {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 'image_id,width,height', got '{trimmed}'"),
            });
        }
        let parse_dim = |s: &str| -> Result<u32> {
            let v: u32 = s.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("'{s}' is not a positive integer"),
            })?;
            if v == 0 {
                return Err(Error::Validation(format!(
                    "line {line}: image dimension must be >= 1"
                )));
            }
            Ok(v)
        };
        manifest.insert(
            fields[0].trim().to_string(),
            (parse_dim(fields[1])?, parse_dim(fields[2])?),
        );
    }
    Ok(manifest)
}

/// Writes the manifest in its CSV form (no header, sorted by image id).
pub fn manifest_to_csv(manifest: &SizeManifest) -> String {
    let mut s = String::new();
    for (id, (w, h)) in manifest {
        s.push_str(&format!("{id},{w},{h}\n"));
    }
    s
}

/// Loads every `<image_id>.txt` under `labels_dir` for the images named in
/// the manifest. Files are parsed in parallel; the result is ordered by
/// image id. Images without a label file simply contribute no labels.
pub fn load_label_dir(labels_dir: &Path, manifest: &SizeManifest) -> Result<Vec<LabelRecord>> {
    let entries: Vec<(&String, &(u32, u32))> = manifest.iter().collect();
    let per_image: Vec<Vec<LabelRecord>> = entries
        .par_iter()
        .map(|(id, (w, h))| {
            let path = labels_dir.join(format!("{id}.txt"));
            if !path.exists() {
                return Ok(Vec::new());
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            parse_labels(&text, id, *w, *h).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

/// The full ground-truth store: every image in the manifest, every label.
#[derive(Debug, Clone)]
pub struct GroundTruthStore {
    images: SizeManifest,
    labels_by_image: BTreeMap<String, Vec<LabelRecord>>,
    label_count: usize,
}

impl GroundTruthStore {
    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn images(&self) -> &SizeManifest {
        &self.images
    }

    pub fn labels_for(&self, image_id: &str) -> &[LabelRecord] {
        self.labels_by_image
            .get(image_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Ground-truth boxes per image, in the pixel frame, confidence 1.0.
    pub fn to_bbox_map(&self) -> Result<BTreeMap<String, Vec<BBox>>> {
        let mut map = BTreeMap::new();
        for (id, labels) in &self.labels_by_image {
            let boxes: Vec<BBox> = labels
                .iter()
                .map(LabelRecord::to_bbox)
                .collect::<Result<_>>()?;
            map.insert(id.clone(), boxes);
        }
        Ok(map)
    }
}

/// Builds the unfiltered validation store: all manifest images, all labels.
pub fn full_validation_set(labels: &[LabelRecord], manifest: &SizeManifest) -> GroundTruthStore {
    let mut labels_by_image: BTreeMap<String, Vec<LabelRecord>> = BTreeMap::new();
    for l in labels {
        labels_by_image
            .entry(l.image_id.clone())
            .or_default()
            .push(l.clone());
    }
    GroundTruthStore {
        images: manifest.clone(),
        labels_by_image,
        label_count: labels.len(),
    }
}

/// One aspect-ratio stratum of the validation labels.
#[derive(Debug, Clone)]
pub struct StratifiedSplit {
    pub shape_class: ShapeClass,
    pub image_ids: BTreeSet<String>,
    pub labels: Vec<LabelRecord>,
}

impl StratifiedSplit {
    pub fn image_count(&self) -> usize {
        self.image_ids.len()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }
}

/// Keeps only the labels whose pixel aspect ratio falls in `target`; an
/// image is retained iff it keeps at least one label.
pub fn stratify(labels: &[LabelRecord], target: ShapeClass) -> Result<StratifiedSplit> {
    let mut kept = Vec::new();
    let mut image_ids = BTreeSet::new();
    for l in labels {
        if l.shape_class()? == target {
            image_ids.insert(l.image_id.clone());
            kept.push(l.clone());
        }
    }
    Ok(StratifiedSplit {
        shape_class: target,
        image_ids,
        labels: kept,
    })
}
