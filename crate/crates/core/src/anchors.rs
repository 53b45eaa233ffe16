//! Reference boxes: the k = scales x ratios base anchors and their tiling over
//! a feature map.

use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("anchor config needs exactly 3 scales and 3 ratios, got {scales} and {ratios}")]
    WrongCount { scales: usize, ratios: usize },
    #[error("anchor scale {0} must be positive and finite")]
    BadScale(f64),
    #[error("anchor ratio {0} must be positive and finite")]
    BadRatio(f64),
    #[error("anchor stride must be at least 1")]
    BadStride,
}

/// Scales are anchor side lengths in input pixels, ratios are height/width.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stride: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            scales: vec![128.0, 256.0, 512.0],
            ratios: vec![0.5, 1.0, 2.0],
            stride: 16,
        }
    }
}

impl AnchorConfig {
    pub const SCALES_PER_CELL: usize = 3;
    pub const RATIOS_PER_CELL: usize = 3;

    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.scales.len() != Self::SCALES_PER_CELL || self.ratios.len() != Self::RATIOS_PER_CELL
        {
            return Err(AnchorError::WrongCount {
                scales: self.scales.len(),
                ratios: self.ratios.len(),
            });
        }
        self.validate_values()
    }

    fn validate_values(&self) -> Result<(), AnchorError> {
        if let Some(&s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(AnchorError::BadScale(s));
        }
        if let Some(&r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(AnchorError::BadRatio(r));
        }
        if self.stride == 0 {
            return Err(AnchorError::BadStride);
        }
        Ok(())
    }

    /// Anchors per feature-map cell.
    pub fn k(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    /// Row-major over cells, then base-anchor index within the cell.
    pub anchors: Vec<BBox>,
    pub feat_width: usize,
    pub feat_height: usize,
    pub k: usize,
}

impl AnchorGrid {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Index of anchor `a` at column `i`, row `j`.
    pub fn index(&self, i: usize, j: usize, a: usize) -> usize {
        (j * self.feat_width + i) * self.k + a
    }
}

/// Base anchors centered at the origin, scale-major: index = scale * 3 + ratio.
///
/// Only the values are checked here, so a 1x1 config is accepted for tests;
/// [`tile`] and the pipeline go through [`AnchorConfig::validate`].
pub fn base_anchors(config: &AnchorConfig) -> Result<Vec<BBox>, AnchorError> {
    config.validate_values()?;
    let mut out = Vec::with_capacity(config.k());
    for &s in &config.scales {
        for &r in &config.ratios {
            let root = r.sqrt();
            out.push(BBox::from_center(0.0, 0.0, s / root, s * root));
        }
    }
    Ok(out)
}

pub fn tile(config: &AnchorConfig, feat_width: usize, feat_height: usize) -> Result<AnchorGrid, AnchorError> {
    config.validate()?;
    Ok(tile_unchecked(config, feat_width, feat_height))
}

fn tile_unchecked(config: &AnchorConfig, feat_width: usize, feat_height: usize) -> AnchorGrid {
    let base = base_anchors(config).expect("validated config");
    let stride = config.stride as f64;
    let mut anchors = Vec::with_capacity(feat_width * feat_height * base.len());
    for j in 0..feat_height {
        let cy = (j as f64 + 0.5) * stride;
        for i in 0..feat_width {
            let cx = (i as f64 + 0.5) * stride;
            anchors.extend(base.iter().map(|b| b.translate(cx, cy)));
        }
    }
    AnchorGrid {
        anchors,
        feat_width,
        feat_height,
        k: base.len(),
    }
}
