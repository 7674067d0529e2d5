//! Detection head with asymmetric receptive fields, and its downstream
//! pipeline.
//!
//! The head applies a 1x1 detection convolution per pyramid level and then
//! branches each result three ways: unchanged, through (1,2) average
//! pooling, and through (2,1) average pooling. The pooled maps have
//! rectangular receptive fields, so nine prediction maps come out instead of
//! three, each with a single anchor matched to its branch shape. Downstream,
//! candidates are suppressed with a four-pass grouped NMS (one pass per
//! shape group, then one over the fused survivors) and scored with
//! PR/AP/mAP evaluation. A label stratifier splits validation sets by
//! aspect ratio so each branch can be measured on the shapes it targets.
//!
//! Everything runs on a small self-contained tensor kernel; there is no
//! network backbone here. Neck feature maps come from fixture files or the
//! seeded synthesizer in [`cli`].

pub mod anchors;
pub mod boxes;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod head;
pub mod nms;
pub mod tensor;

pub use error::{Error, Result};
