//! Deterministic forward pass: toy backbone, RPN head, ROI pooling and the
//! detection head, plus batch-norm folding and the weight file format.

mod backbone;
mod batchnorm;
mod head;
mod layers;
mod roi_pool;
mod rpn;
mod weights;

use thiserror::Error;

pub use backbone::{
    extract_features, AttachStage, BackboneSpec, Filter, BODY_THRESHOLD, DARK_THRESHOLD, FILTER_BANK,
    HIGHLIGHT_THRESHOLD, INPUT_HEIGHT, INPUT_WIDTH,
};
pub use batchnorm::{apply_batchnorm, fold_batchnorm, BnParams};
pub use head::{detect_forward, DetectHead, HeadOutput};
pub use layers::{relu_in_place, softmax, Conv3x3, Linear};
pub use roi_pool::{roi_pool, DEFAULT_ROI_BINS};
pub use rpn::{rpn_forward, rpn_logits, RpnHead, RpnLogits, RpnOutput};
pub use weights::{sidecar_path, ModelWeights, WeightsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("expects preprocessed 800x1000 input, got {width}x{height}")]
    InputSize { width: usize, height: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid backbone spec: {0}")]
    BadSpec(String),
    #[error("roi ({0:.1}, {1:.1}, {2:.1}, {3:.1}) lies outside the feature map")]
    RoiOutside(f64, f64, f64, f64),
    #[error("roi has no area on the feature map")]
    EmptyRoi,
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
}

/// Channel-major (`[c][y][x]`) activations with their input stride.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize, stride: usize) -> Self {
        Self {
            channels,
            height,
            width,
            stride,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }
}
