//! Positive/negative/ignore labelling of anchors against ground truth.
//!
//! An anchor is positive when it is the best-overlapping anchor of some
//! ground-truth box, or when its best IOU exceeds the positive threshold.
//! Anchors whose best IOU falls below the negative threshold are negative and
//! everything in between is ignored.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{encode, iou, BBox, BoxDelta, GeometryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("assignment thresholds must satisfy 0 <= neg ({neg}) <= pos ({pos}) <= 1")]
    BadThresholds { pos: f64, neg: f64 },
    #[error("no anchors to assign")]
    NoAnchors,
    #[error("regression target for anchor {anchor}: {source}")]
    Geometry {
        anchor: usize,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignmentConfig {
    pub pos_iou_threshold: f64,
    pub neg_iou_threshold: f64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            pos_iou_threshold: 0.7,
            neg_iou_threshold: 0.3,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<(), AssignError> {
        let (pos, neg) = (self.pos_iou_threshold, self.neg_iou_threshold);
        if (0.0..=1.0).contains(&neg) && (0.0..=1.0).contains(&pos) && neg <= pos {
            Ok(())
        } else {
            Err(AssignError::BadThresholds { pos, neg })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorAssignment {
    pub label: Label,
    pub matched_gt: Option<usize>,
    pub regression_target: Option<BoxDelta>,
}

impl AnchorAssignment {
    const NEGATIVE: Self = Self {
        label: Label::Negative,
        matched_gt: None,
        regression_target: None,
    };
    const IGNORE: Self = Self {
        label: Label::Ignore,
        matched_gt: None,
        regression_target: None,
    };
}

/// Best ground-truth match per anchor; ties go to the lower gt index.
fn best_gt_per_anchor(anchors: &[BBox], gt_boxes: &[BBox]) -> Vec<(usize, f64)> {
    anchors
        .par_iter()
        .map(|a| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (g, gt) in gt_boxes.iter().enumerate() {
                let v = iou(a, gt);
                if v > best.1 {
                    best = (g, v);
                }
            }
            best
        })
        .collect()
}

/// Best anchor per ground-truth box; ties go to the lower anchor index.
fn best_anchor_per_gt(anchors: &[BBox], gt_boxes: &[BBox]) -> Vec<usize> {
    gt_boxes
        .iter()
        .map(|gt| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (a, anchor) in anchors.iter().enumerate() {
                let v = iou(anchor, gt);
                if v > best.1 {
                    best = (a, v);
                }
            }
            best.0
        })
        .collect()
}

pub fn assign(
    anchors: &[BBox],
    gt_boxes: &[BBox],
    config: &AssignmentConfig,
) -> Result<Vec<AnchorAssignment>, AssignError> {
    config.validate()?;
    if anchors.is_empty() {
        return Err(AssignError::NoAnchors);
    }
    if gt_boxes.is_empty() {
        return Ok(vec![AnchorAssignment::NEGATIVE; anchors.len()]);
    }

    let best = best_gt_per_anchor(anchors, gt_boxes);
    let mut positive: Vec<bool> = best
        .iter()
        .map(|&(_, v)| v > config.pos_iou_threshold)
        .collect();
    for a in best_anchor_per_gt(anchors, gt_boxes) {
        positive[a] = true;
    }

    anchors
        .iter()
        .enumerate()
        .map(|(idx, anchor)| {
            let (g, v) = best[idx];
            if positive[idx] {
                let target = encode(anchor, &gt_boxes[g])
                    .map_err(|source| AssignError::Geometry { anchor: idx, source })?;
                Ok(AnchorAssignment {
                    label: Label::Positive,
                    matched_gt: Some(g),
                    regression_target: Some(target),
                })
            } else if v < config.neg_iou_threshold {
                Ok(AnchorAssignment::NEGATIVE)
            } else {
                Ok(AnchorAssignment::IGNORE)
            }
        })
        .collect()
}
