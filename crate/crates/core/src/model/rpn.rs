//! Region proposal head: a 3x3 conv to an intermediate width, ReLU, then two
//! 1x1 branches for per-anchor objectness (2k) and box offsets (4k).
//!
//! Score channels are interleaved per anchor (`2a` background, `2a + 1`
//! foreground); delta channels are `4a..4a + 4` in `tx, ty, tw, th` order.

use super::layers::{relu_in_place, Conv3x3, Linear};
use super::{FeatureMap, ModelError};
use crate::geometry::BoxDelta;

const INTERMEDIATE_DIMS: [usize; 2] = [256, 512];

#[derive(Debug, Clone, PartialEq)]
pub struct RpnHead {
    pub conv: Conv3x3,
    pub score: Linear,
    pub delta: Linear,
}

impl RpnHead {
    pub fn zeros(in_channels: usize, intermediate_dim: usize, k: usize) -> Self {
        Self {
            conv: Conv3x3::zeros(in_channels, intermediate_dim),
            score: Linear::zeros(intermediate_dim, 2 * k),
            delta: Linear::zeros(intermediate_dim, 4 * k),
        }
    }

    pub fn intermediate_dim(&self) -> usize {
        self.conv.out_channels
    }

    pub fn validate(&self, in_channels: usize, k: usize) -> Result<(), ModelError> {
        self.conv.check()?;
        self.score.check()?;
        self.delta.check()?;
        let inter = self.intermediate_dim();
        if !INTERMEDIATE_DIMS.contains(&inter) {
            return Err(ModelError::Dimension(format!(
                "rpn intermediate width must be 256 or 512, got {inter}"
            )));
        }
        if self.conv.in_channels != in_channels {
            return Err(ModelError::Dimension(format!(
                "rpn conv expects {} channels, feature map has {in_channels}",
                self.conv.in_channels
            )));
        }
        if self.score.in_dim != inter || self.delta.in_dim != inter {
            return Err(ModelError::Dimension("rpn branch input width mismatch".into()));
        }
        if self.score.out_dim != 2 * k || self.delta.out_dim != 4 * k {
            return Err(ModelError::Dimension(format!(
                "rpn branches give {} score and {} delta channels, k = {k} needs {} and {}",
                self.score.out_dim,
                self.delta.out_dim,
                2 * k,
                4 * k
            )));
        }
        Ok(())
    }
}

/// Raw per-anchor outputs, ordered like the anchor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnLogits {
    /// `[background, foreground]` logits per anchor.
    pub objectness: Vec<[f64; 2]>,
    pub deltas: Vec<BoxDelta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpnOutput {
    /// Foreground probability per anchor.
    pub scores: Vec<f64>,
    pub deltas: Vec<BoxDelta>,
}

pub fn rpn_logits(fm: &FeatureMap, head: &RpnHead, k: usize) -> Result<RpnLogits, ModelError> {
    head.validate(fm.channels, k)?;
    let plane = fm.plane();
    let mut hidden = head.conv.forward(&fm.data, fm.height, fm.width)?;
    relu_in_place(&mut hidden);
    let score_maps = head.score.forward_pointwise(&hidden, plane);
    let delta_maps = head.delta.forward_pointwise(&hidden, plane);

    let n = plane * k;
    let mut objectness = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    for loc in 0..plane {
        for a in 0..k {
            objectness.push([
                score_maps[(2 * a) * plane + loc],
                score_maps[(2 * a + 1) * plane + loc],
            ]);
            let d = |t: usize| delta_maps[(4 * a + t) * plane + loc];
            deltas.push(BoxDelta::new(d(0), d(1), d(2), d(3)));
        }
    }
    Ok(RpnLogits { objectness, deltas })
}

pub fn rpn_forward(fm: &FeatureMap, head: &RpnHead, k: usize) -> Result<RpnOutput, ModelError> {
    let logits = rpn_logits(fm, head, k)?;
    let scores = logits
        .objectness
        .iter()
        .map(|[bg, fg]| 1.0 / (1.0 + (bg - fg).exp()))
        .collect();
    Ok(RpnOutput {
        scores,
        deltas: logits.deltas,
    })
}
