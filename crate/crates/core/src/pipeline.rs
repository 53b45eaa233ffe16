//! End-to-end composition: features, RPN, proposals, ROI head, per-class
//! decoding and output NMS; plus a mining pass over a dataset.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

use crate::anchors::{tile, AnchorConfig, AnchorError, AnchorGrid};
use crate::assign::{AssignError, AssignmentConfig};
use crate::classes::FastenerClass;
use crate::data::{Annotation, RgbImage};
use crate::eval::{Detection, EvalConfig, EvalError};
use crate::geometry::{clip, decode, encode, iou, BBox, BoxDelta, GeometryError};
use crate::model::{
    detect_forward, extract_features, roi_pool, rpn_forward, BackboneSpec, FeatureMap, ModelError, ModelWeights,
    DEFAULT_ROI_BINS, INPUT_HEIGHT, INPUT_WIDTH,
};
use crate::ohem::{ohem_round, OhemConfig, OhemError, OhemSelection, RoiLoss, RoiTarget};
use crate::proposal::{bounded_delta, nms_boxes, propose, ProposalConfig, ProposalError, ScoredBox};

/// IOU above which a proposal counts as foreground for its best ground truth.
pub const ROI_FOREGROUND_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("backbone: {0}")]
    Backbone(#[source] ModelError),
    #[error("anchors: {0}")]
    Anchors(#[from] AnchorError),
    #[error("rpn: {0}")]
    Rpn(#[source] ModelError),
    #[error("proposal: {0}")]
    Proposal(#[from] ProposalError),
    #[error("roi pooling: {0}")]
    RoiPool(#[source] ModelError),
    #[error("detection head: {0}")]
    Head(#[source] ModelError),
    #[error("box decoding: {0}")]
    Decode(#[from] GeometryError),
    #[error("ohem: {0}")]
    Ohem(#[from] OhemError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub backbone: BackboneSpec,
    pub anchors: AnchorConfig,
    pub assignment: AssignmentConfig,
    pub proposal: ProposalConfig,
    pub ohem: OhemConfig,
    pub eval: EvalConfig,
    pub score_threshold: f64,
    pub final_nms_iou: f64,
    pub roi_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneSpec::default(),
            anchors: AnchorConfig::default(),
            assignment: AssignmentConfig::default(),
            proposal: ProposalConfig::default(),
            ohem: OhemConfig::default(),
            eval: EvalConfig::default(),
            score_threshold: 0.5,
            final_nms_iou: 0.3,
            roi_bins: DEFAULT_ROI_BINS,
        }
    }
}

impl PipelineConfig {
    /// Anchor shapes matched to the synthetic glyph sizes.
    pub fn fastener_preset() -> Self {
        Self {
            anchors: AnchorConfig {
                scales: vec![120.0, 160.0, 200.0],
                ratios: vec![0.64, 1.0, 1.5625],
                stride: 16,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.backbone.validate().map_err(|e| cfg(&e))?;
        self.anchors.validate().map_err(|e| cfg(&e))?;
        self.assignment.validate().map_err(|e: AssignError| cfg(&e))?;
        self.proposal.validate().map_err(|e| cfg(&e))?;
        self.ohem.validate().map_err(|e| cfg(&e))?;
        self.eval.validate().map_err(|e: EvalError| cfg(&e))?;
        if self.anchors.stride != self.backbone.stride() {
            return Err(PipelineError::Config(format!(
                "anchor stride {} differs from backbone stride {}",
                self.anchors.stride,
                self.backbone.stride()
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(PipelineError::Config(format!(
                "score_threshold {} outside [0, 1]",
                self.score_threshold
            )));
        }
        if !(self.final_nms_iou > 0.0 && self.final_nms_iou <= 1.0) {
            return Err(PipelineError::Config(format!(
                "final_nms_iou {} outside (0, 1]",
                self.final_nms_iou
            )));
        }
        if self.roi_bins == 0 {
            return Err(PipelineError::Config("roi_bins must be >= 1".into()));
        }
        Ok(())
    }

    /// Flattened length of one pooled ROI.
    pub fn pooled_dim(&self) -> usize {
        self.roi_bins * self.roi_bins * self.backbone.channels
    }

    pub fn check_weights(&self, weights: &ModelWeights) -> Result<(), PipelineError> {
        weights
            .rpn
            .validate(self.backbone.channels, self.anchors.k())
            .map_err(|e| PipelineError::Config(format!("rpn weights: {e}")))?;
        weights
            .head
            .validate()
            .map_err(|e| PipelineError::Config(format!("head weights: {e}")))?;
        if weights.head.in_dim() != self.pooled_dim() {
            return Err(PipelineError::Config(format!(
                "head expects {} inputs but pooling yields {}",
                weights.head.in_dim(),
                self.pooled_dim()
            )));
        }
        Ok(())
    }
}

/// Intermediate results of the first stage for one image.
#[derive(Debug, Clone)]
pub struct Proposals {
    pub features: FeatureMap,
    pub grid: AnchorGrid,
    pub rois: Vec<ScoredBox>,
}

pub fn propose_rois(
    img: &RgbImage,
    weights: &ModelWeights,
    config: &PipelineConfig,
) -> Result<Proposals, PipelineError> {
    config.validate()?;
    config.check_weights(weights)?;
    let features = extract_features(img, &config.backbone).map_err(PipelineError::Backbone)?;
    let grid = tile(&config.anchors, features.width, features.height)?;
    let rpn = rpn_forward(&features, &weights.rpn, grid.k).map_err(PipelineError::Rpn)?;
    let rois = propose(
        &grid,
        &rpn.scores,
        &rpn.deltas,
        INPUT_WIDTH as f64,
        INPUT_HEIGHT as f64,
        &config.proposal,
    )?;
    Ok(Proposals { features, grid, rois })
}

fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class.ordinal().cmp(&b.class.ordinal()))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
}

pub fn detect(img: &RgbImage, weights: &ModelWeights, config: &PipelineConfig) -> Result<Vec<Detection>, PipelineError> {
    let props = propose_rois(img, weights, config)?;
    let (w, h) = (INPUT_WIDTH as f64, INPUT_HEIGHT as f64);
    let mut per_class: Vec<Vec<ScoredBox>> = vec![Vec::new(); FastenerClass::ALL.len()];
    for (r, roi) in props.rois.iter().enumerate() {
        let pooled = roi_pool(&props.features, &roi.bbox, config.roi_bins).map_err(PipelineError::RoiPool)?;
        let out = detect_forward(&pooled, &weights.head).map_err(PipelineError::Head)?;
        for class in FastenerClass::ALL {
            let p = out.prob(class);
            if p < config.score_threshold {
                continue;
            }
            let b = clip(&decode(&roi.bbox, &bounded_delta(&out.delta(class)))?, w, h);
            per_class[class.ordinal()].push(ScoredBox::new(b, p, r));
        }
    }
    let mut dets: Vec<Detection> = Vec::new();
    for (class, boxes) in FastenerClass::ALL.iter().zip(per_class) {
        for kept in nms_boxes(&boxes, config.final_nms_iou, usize::MAX) {
            dets.push(Detection {
                class: *class,
                bbox: kept.bbox,
                score: kept.score,
            });
        }
    }
    dets.sort_by(detection_order);
    Ok(dets)
}

/// Target for each proposal: its best ground truth when the overlap exceeds
/// [`ROI_FOREGROUND_IOU`], background otherwise.
pub fn roi_targets(rois: &[ScoredBox], ann: &Annotation) -> Result<Vec<RoiTarget>, PipelineError> {
    rois.iter()
        .map(|roi| {
            let mut best: Option<(usize, f64)> = None;
            for (g, obj) in ann.objects.iter().enumerate() {
                let v = iou(&roi.bbox, &obj.bbox);
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v > ROI_FOREGROUND_IOU => {
                    let obj = &ann.objects[g];
                    Ok(RoiTarget::foreground(obj.class.head_index(), encode(&roi.bbox, &obj.bbox)?))
                }
                _ => Ok(RoiTarget::background()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMining {
    pub rois: Vec<BBox>,
    pub targets: Vec<RoiTarget>,
    pub selection: OhemSelection,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossStats {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    /// Counts per bin of width `bin_width` starting at 0; the last bin is open.
    pub histogram: Vec<usize>,
    pub bin_width: f64,
}

impl LossStats {
    pub fn from_losses(losses: &[RoiLoss], bins: usize, bin_width: f64) -> Self {
        let mut histogram = vec![0usize; bins.max(1)];
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for l in losses {
            sum += l.total;
            max = max.max(l.total);
            let b = ((l.total / bin_width) as usize).min(histogram.len() - 1);
            histogram[b] += 1;
        }
        Self {
            count: losses.len(),
            mean: if losses.is_empty() { 0.0 } else { sum / losses.len() as f64 },
            max,
            histogram,
            bin_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningReport {
    pub images: Vec<ImageMining>,
    pub all_losses: LossStats,
    pub selected_losses: LossStats,
}

pub fn ohem_simulation(
    dataset: &[(RgbImage, Annotation)],
    weights: &ModelWeights,
    config: &PipelineConfig,
) -> Result<MiningReport, PipelineError> {
    let mut images = Vec::with_capacity(dataset.len());
    let mut all = Vec::new();
    let mut chosen = Vec::new();
    for (img, ann) in dataset {
        let props = propose_rois(img, weights, config)?;
        let targets = roi_targets(&props.rois, ann)?;
        let forward = |i: usize, roi: &ScoredBox| -> Result<_, PipelineError> {
            let pooled = roi_pool(&props.features, &roi.bbox, config.roi_bins).map_err(PipelineError::RoiPool)?;
            let out = detect_forward(&pooled, &weights.head).map_err(PipelineError::Head)?;
            let delta = FastenerClass::from_head_index(targets[i].class)
                .map(|c| out.delta(c))
                .unwrap_or(BoxDelta::ZERO);
            Ok((out.class_probs, delta))
        };
        let selection = ohem_round(&props.rois, forward, &targets, &config.ohem)?;
        all.extend_from_slice(&selection.losses);
        chosen.extend(selection.selected_losses());
        images.push(ImageMining {
            rois: props.rois.iter().map(|r| r.bbox).collect(),
            targets,
            selection,
        });
    }
    Ok(MiningReport {
        images,
        all_losses: LossStats::from_losses(&all, 20, 0.5),
        selected_losses: LossStats::from_losses(&chosen, 20, 0.5),
    })
}

pub const DETECTIONS_HEADER: &str = "image,class,score,xmin,ymin,xmax,ymax";

pub fn detections_csv_rows(image: &str, dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = d.bbox;
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            image,
            d.class.name(),
            d.score,
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectHead, RpnHead};

    fn zero_weights(config: &PipelineConfig) -> ModelWeights {
        ModelWeights {
            rpn: RpnHead::zeros(config.backbone.channels, 256, config.anchors.k()),
            head: DetectHead::zeros(config.pooled_dim(), 64),
        }
    }

    #[test]
    fn blank_image_has_no_detections() {
        let config = PipelineConfig::default();
        let img = RgbImage::new(800, 1000);
        let dets = detect(&img, &zero_weights(&config), &config).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn wrong_input_size_names_the_stage() {
        let config = PipelineConfig::default();
        let err = detect(&RgbImage::new(10, 10), &zero_weights(&config), &config).unwrap_err();
        assert!(matches!(err, PipelineError::Backbone(ModelError::InputSize { .. })));
        assert!(err.to_string().starts_with("backbone:"));
    }

    #[test]
    fn config_checks() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.anchors.stride = 32;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let mut c = PipelineConfig::default();
        c.final_nms_iou = 0.0;
        assert!(c.validate().is_err());
        let c = PipelineConfig::default();
        let mut w = zero_weights(&c);
        w.head = DetectHead::zeros(10, 8);
        assert!(c.check_weights(&w).is_err());
    }

    #[test]
    fn zero_loss_mining_keeps_index_order() {
        // uniform zero-weight head: every ROI has the same background loss
        let config = PipelineConfig {
            ohem: OhemConfig {
                batch_size: 16,
                ..OhemConfig::default()
            },
            ..PipelineConfig::default()
        };
        let img = RgbImage::new(800, 1000);
        let ann = Annotation::new("blank.ppm", 800, 1000);
        let report = ohem_simulation(&[(img, ann)], &zero_weights(&config), &config).unwrap();
        let sel = &report.images[0].selection.selected;
        assert_eq!(sel, &(0..16).collect::<Vec<_>>());
        assert_eq!(report.selected_losses.count, 16);
    }

    #[test]
    fn csv_rows() {
        let d = Detection {
            class: FastenerClass::W300_1,
            bbox: BBox::new(1.0, 2.0, 3.5, 4.25).unwrap(),
            score: 0.5,
        };
        assert_eq!(
            detections_csv_rows("a.ppm", &[d]),
            "a.ppm,W300-1,0.500000,1.000000,2.000000,3.500000,4.250000\n"
        );
    }
}
