//! Turning scored, regressed anchors into a ranked and de-duplicated ROI list.

use std::cmp::Ordering;

use thiserror::Error;

use crate::anchors::AnchorGrid;
use crate::geometry::{clip, decode, iou, BBox, BoxDelta, GeometryError};

/// Upper bound applied to log-size deltas before decoding, `ln(1000 / 16)`.
pub const MAX_LOG_SIZE_DELTA: f64 = 4.135_166_556_742_356;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("length mismatch: {anchors} anchors, {scores} scores, {deltas} deltas")]
    LengthMismatch {
        anchors: usize,
        scores: usize,
        deltas: usize,
    },
    #[error("invalid proposal config: {0}")]
    BadConfig(String),
    #[error("score {score} at anchor {index} is not in [0, 1]")]
    BadScore { index: usize, score: f64 },
    #[error("decoding anchor {index}: {source}")]
    Decode {
        index: usize,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
    pub source_index: usize,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64, source_index: usize) -> Self {
        Self {
            bbox,
            score,
            source_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub pre_nms_top: usize,
    pub nms_iou_threshold: f64,
    pub post_nms_top: usize,
    pub min_box_size: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            pre_nms_top: 6000,
            nms_iou_threshold: 0.7,
            post_nms_top: 300,
            min_box_size: 1.0,
        }
    }
}

impl ProposalConfig {
    /// The reduced ROI budget used for the faster detector variant.
    pub fn reduced() -> Self {
        Self {
            post_nms_top: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProposalError> {
        if self.post_nms_top == 0 || self.pre_nms_top == 0 {
            return Err(ProposalError::BadConfig("top-n limits must be positive".into()));
        }
        if self.post_nms_top > self.pre_nms_top {
            return Err(ProposalError::BadConfig(format!(
                "post_nms_top {} exceeds pre_nms_top {}",
                self.post_nms_top, self.pre_nms_top
            )));
        }
        if !(self.nms_iou_threshold > 0.0 && self.nms_iou_threshold < 1.0) {
            return Err(ProposalError::BadConfig(format!(
                "nms_iou_threshold {} must lie in (0, 1)",
                self.nms_iou_threshold
            )));
        }
        if !(self.min_box_size.is_finite() && self.min_box_size >= 0.0) {
            return Err(ProposalError::BadConfig("min_box_size must be >= 0".into()));
        }
        Ok(())
    }
}

/// Descending score, then ascending source index.
pub fn rank_order(a: &ScoredBox, b: &ScoredBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.source_index.cmp(&b.source_index))
}

/// Greedy NMS over boxes already in rank order, stopping after `max_keep`.
/// Returns positions into `sorted`.
fn greedy_suppress(sorted: &[ScoredBox], iou_threshold: f64, max_keep: usize) -> Vec<usize> {
    let mut suppressed = vec![false; sorted.len()];
    let mut keep = Vec::new();
    for i in 0..sorted.len() {
        if keep.len() >= max_keep {
            break;
        }
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        let anchor = &sorted[i].bbox;
        for (j, s) in sorted.iter().enumerate().skip(i + 1) {
            if !suppressed[j] && iou(anchor, &s.bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Greedy non-maximum suppression. Returns the kept `source_index` values in
/// descending score order.
pub fn nms(boxes: &[ScoredBox], iou_threshold: f64) -> Vec<usize> {
    nms_boxes(boxes, iou_threshold, usize::MAX)
        .into_iter()
        .map(|b| b.source_index)
        .collect()
}

/// Like [`nms`] but returns the kept boxes, keeping at most `max_keep`.
pub fn nms_boxes(boxes: &[ScoredBox], iou_threshold: f64, max_keep: usize) -> Vec<ScoredBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by(rank_order);
    greedy_suppress(&sorted, iou_threshold, max_keep)
        .into_iter()
        .map(|i| sorted[i])
        .collect()
}

/// Clamps the size terms of a predicted delta so decoding cannot overflow.
pub fn bounded_delta(d: &BoxDelta) -> BoxDelta {
    BoxDelta {
        tw: d.tw.min(MAX_LOG_SIZE_DELTA),
        th: d.th.min(MAX_LOG_SIZE_DELTA),
        ..*d
    }
}

pub fn propose(
    grid: &AnchorGrid,
    scores: &[f64],
    deltas: &[BoxDelta],
    image_width: f64,
    image_height: f64,
    config: &ProposalConfig,
) -> Result<Vec<ScoredBox>, ProposalError> {
    config.validate()?;
    let n = grid.anchors.len();
    if scores.len() != n || deltas.len() != n {
        return Err(ProposalError::LengthMismatch {
            anchors: n,
            scores: scores.len(),
            deltas: deltas.len(),
        });
    }

    let mut candidates = Vec::with_capacity(n);
    for (index, ((anchor, &score), delta)) in grid.anchors.iter().zip(scores).zip(deltas).enumerate() {
        if !(0.0..=1.0).contains(&score) {
            return Err(ProposalError::BadScore { index, score });
        }
        let decoded = decode(anchor, &bounded_delta(delta))
            .map_err(|source| ProposalError::Decode { index, source })?;
        let b = clip(&decoded, image_width, image_height);
        if b.width() < config.min_box_size || b.height() < config.min_box_size {
            continue;
        }
        candidates.push(ScoredBox::new(b, score, index));
    }

    candidates.sort_by(rank_order);
    candidates.truncate(config.pre_nms_top);
    let kept = greedy_suppress(&candidates, config.nms_iou_threshold, config.post_nms_top);
    Ok(kept.into_iter().map(|i| candidates[i]).collect())
}
