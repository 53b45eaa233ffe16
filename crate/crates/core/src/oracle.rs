//! Hand-built weights that detect the synthetic glyphs without training.
//!
//! The RPN scores every anchor at a cell containing a bolt highlight. The
//! detection head is an L1 template matcher: for every class and every
//! pooled body/highlight feature it holds the pair `relu(x - t)`,
//! `relu(t - x)`, whose sum is `|x - t|`. Class logits are
//! `kappa * (margin - distance)` against a background logit of 0, where the
//! margin is half the distance to the nearest non-matching ROI seen during
//! calibration.

use thiserror::Error;

use crate::anchors::base_anchors;
use crate::classes::FastenerClass;
use crate::data::synth::{glyph_size, render_scene, Placement, SynthConfig};
use crate::geometry::{clip, BBox};
use crate::model::{
    extract_features, roi_pool, DetectHead, FeatureMap, Filter, ModelError, ModelWeights, RpnHead, FILTER_BANK,
    INPUT_HEIGHT, INPUT_WIDTH,
};
use crate::pipeline::PipelineConfig;

pub const RPN_INTERMEDIATE: usize = 256;
pub const HEAD_HIDDEN: usize = 1024;
/// Gain from the highlight fraction of a cell to its objectness logit.
pub const RPN_GAIN: f64 = 20.0;
/// Class logit reached by an exact template match.
pub const MATCH_LOGIT: f64 = 6.0;
/// Calibration searches ROIs centered within this many cells of a glyph.
const SEARCH_CELLS: isize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle weights need channel {0:?} in the backbone")]
    MissingChannel(Filter),
    #[error("no anchor shape matches the {width}x{height} glyph of class {class}")]
    NoMatchingAnchor {
        class: FastenerClass,
        width: usize,
        height: usize,
    },
    #[error("class {0} cannot be separated from a non-matching roi")]
    Inseparable(FastenerClass),
    #[error("hidden width {needed} exceeds {available}")]
    HiddenTooSmall { needed: usize, available: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Per class in report order: selected pooled features of an exact ROI.
    pub templates: Vec<Vec<f64>>,
    /// Nearest impostor distance per class.
    pub nearest_impostor: Vec<f64>,
}

impl Calibration {
    pub fn margin(&self, class: FastenerClass) -> f64 {
        self.nearest_impostor[class.ordinal()] / 2.0
    }
}

fn channel_of(filter: Filter, channels: usize) -> Result<usize, OracleError> {
    FILTER_BANK[..channels]
        .iter()
        .position(|&f| f == filter)
        .ok_or(OracleError::MissingChannel(filter))
}

/// Indices into a pooled ROI vector that the template matcher reads.
pub fn template_indices(config: &PipelineConfig) -> Result<Vec<usize>, OracleError> {
    let c = config.backbone.channels;
    let body = channel_of(Filter::BodyMask, c)?;
    let high = channel_of(Filter::HighlightMask, c)?;
    let bins = config.roi_bins * config.roi_bins;
    Ok((0..bins).flat_map(|b| [b * c + body, b * c + high]).collect())
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn select(pooled: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| pooled[i]).collect()
}

/// One glyph of `class` centered on a cell near the middle of the canvas.
fn canonical_scene(class: FastenerClass, config: &PipelineConfig) -> Result<(FeatureMap, BBox), OracleError> {
    let stride = config.backbone.stride() as f64;
    let synth = SynthConfig::default();
    let p = Placement {
        class,
        cx: stride * 25.0 + stride / 2.0,
        cy: stride * 31.0 + stride / 2.0,
    };
    let (img, _) = render_scene(&[p], 0, &synth);
    Ok((extract_features(&img, &config.backbone)?, p.bbox()))
}

pub fn calibrate(config: &PipelineConfig) -> Result<Calibration, OracleError> {
    config.validate().map_err(|e| OracleError::Config(e.to_string()))?;
    let idx = template_indices(config)?;
    let shapes: Vec<(f64, f64)> = base_anchors(&config.anchors)
        .map_err(|e| OracleError::Config(e.to_string()))?
        .iter()
        .map(|b| (b.width(), b.height()))
        .collect();
    for class in FastenerClass::ALL {
        let (w, h) = glyph_size(class);
        let hit = shapes
            .iter()
            .any(|&(aw, ah)| (aw - w as f64).abs() < 1e-6 && (ah - h as f64).abs() < 1e-6);
        if !hit {
            return Err(OracleError::NoMatchingAnchor { class, width: w, height: h });
        }
    }

    let scenes: Vec<(FeatureMap, BBox)> = FastenerClass::ALL
        .iter()
        .map(|&c| canonical_scene(c, config))
        .collect::<Result<_, _>>()?;
    let mut templates = Vec::new();
    for (fm, b) in &scenes {
        templates.push(select(&roi_pool(fm, b, config.roi_bins)?, &idx));
    }

    let stride = config.backbone.stride() as f64;
    let (cw, ch) = (INPUT_WIDTH as f64, INPUT_HEIGHT as f64);
    let mut nearest = vec![f64::INFINITY; 4];
    for (scene_class, (fm, glyph)) in FastenerClass::ALL.iter().zip(&scenes) {
        let (gx, gy) = glyph.center();
        for dj in -SEARCH_CELLS..=SEARCH_CELLS {
            for di in -SEARCH_CELLS..=SEARCH_CELLS {
                let (cx, cy) = (gx + di as f64 * stride, gy + dj as f64 * stride);
                for &(w, h) in &shapes {
                    let roi = clip(&BBox::from_center(cx, cy, w, h), cw, ch);
                    let feats = select(&roi_pool(fm, &roi, config.roi_bins)?, &idx);
                    for (t, class) in FastenerClass::ALL.iter().enumerate() {
                        let exact = class == scene_class && roi == *glyph;
                        if !exact {
                            nearest[t] = nearest[t].min(l1(&feats, &templates[t]));
                        }
                    }
                }
            }
        }
    }
    for class in FastenerClass::ALL {
        if !(nearest[class.ordinal()] > 1e-6) {
            return Err(OracleError::Inseparable(class));
        }
    }
    Ok(Calibration {
        templates,
        nearest_impostor: nearest,
    })
}

pub fn build_weights(config: &PipelineConfig, cal: &Calibration) -> Result<ModelWeights, OracleError> {
    let channels = config.backbone.channels;
    let k = config.anchors.k();
    let high = channel_of(Filter::HighlightMask, channels)?;
    let idx = template_indices(config)?;

    let mut rpn = RpnHead::zeros(channels, RPN_INTERMEDIATE, k);
    let centre = rpn.conv.weight_index(0, high, 1, 1);
    rpn.conv.weight[centre] = 1.0;
    for a in 0..k {
        rpn.score.weight[(2 * a + 1) * RPN_INTERMEDIATE] = RPN_GAIN;
    }

    let needed = 2 * idx.len() * FastenerClass::ALL.len();
    if needed > HEAD_HIDDEN {
        return Err(OracleError::HiddenTooSmall {
            needed,
            available: HEAD_HIDDEN,
        });
    }
    let mut head = DetectHead::zeros(config.pooled_dim(), HEAD_HIDDEN);
    let in_dim = head.fc.in_dim;
    for class in FastenerClass::ALL {
        let c = class.ordinal();
        let margin = cal.margin(class);
        let kappa = MATCH_LOGIT / margin;
        let row = class.head_index();
        head.cls.bias[row] = kappa * margin;
        for (f, (&input, &t)) in idx.iter().zip(&cal.templates[c]).enumerate() {
            let up = (c * idx.len() + f) * 2;
            head.fc.weight[up * in_dim + input] = 1.0;
            head.fc.bias[up] = -t;
            head.fc.weight[(up + 1) * in_dim + input] = -1.0;
            head.fc.bias[up + 1] = t;
            head.cls.weight[row * HEAD_HIDDEN + up] = -kappa;
            head.cls.weight[row * HEAD_HIDDEN + up + 1] = -kappa;
        }
    }
    let mut w = ModelWeights { rpn, head };
    w.quantize_f32();
    Ok(w)
}

/// Calibrates and builds the oracle in one step.
pub fn oracle_weights(config: &PipelineConfig) -> Result<(ModelWeights, Calibration), OracleError> {
    let cal = calibrate(config)?;
    let w = build_weights(config, &cal)?;
    Ok((w, cal))
}
