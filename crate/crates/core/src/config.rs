//! Flat `section.key=value` configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! anchors.scales=120,160,200
//! proposal.post_nms_top=50
//! ```
//!
//! Keys not present keep the value of the base config. Unknown keys are
//! errors.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::model::AttachStage;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue { line: usize, key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

fn scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| scalar(line, key, v.trim())).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_config(text: &str, base: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    let mut c = base;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: t.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "backbone.attach_stage" => {
                c.backbone.attach_stage = match value {
                    "stage4" => AttachStage::Stage4,
                    "stage5" => AttachStage::Stage5,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                        })
                    }
                }
            }
            "backbone.stage5_downsample" => c.backbone.stage5_downsample = scalar(line, key, value)?,
            "backbone.channels" => c.backbone.channels = scalar(line, key, value)?,
            "anchors.scales" => c.anchors.scales = list(line, key, value)?,
            "anchors.ratios" => c.anchors.ratios = list(line, key, value)?,
            "anchors.stride" => c.anchors.stride = scalar(line, key, value)?,
            "assignment.pos_iou_threshold" => c.assignment.pos_iou_threshold = scalar(line, key, value)?,
            "assignment.neg_iou_threshold" => c.assignment.neg_iou_threshold = scalar(line, key, value)?,
            "proposal.pre_nms_top" => c.proposal.pre_nms_top = scalar(line, key, value)?,
            "proposal.nms_iou_threshold" => c.proposal.nms_iou_threshold = scalar(line, key, value)?,
            "proposal.post_nms_top" => c.proposal.post_nms_top = scalar(line, key, value)?,
            "proposal.min_box_size" => c.proposal.min_box_size = scalar(line, key, value)?,
            "ohem.batch_size" => c.ohem.batch_size = scalar(line, key, value)?,
            "ohem.reg_loss_weight" => c.ohem.reg_loss_weight = scalar(line, key, value)?,
            "ohem.max_cls_loss" => c.ohem.max_cls_loss = scalar(line, key, value)?,
            "eval.iou_threshold" => c.eval.iou_threshold = scalar(line, key, value)?,
            "pipeline.score_threshold" => c.score_threshold = scalar(line, key, value)?,
            "pipeline.final_nms_iou" => c.final_nms_iou = scalar(line, key, value)?,
            "pipeline.roi_bins" => c.roi_bins = scalar(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

pub fn config_to_text(c: &PipelineConfig) -> String {
    let mut s = String::new();
    let stage = match c.backbone.attach_stage {
        AttachStage::Stage4 => "stage4",
        AttachStage::Stage5 => "stage5",
    };
    let _ = writeln!(s, "backbone.attach_stage={stage}");
    let _ = writeln!(s, "backbone.stage5_downsample={}", c.backbone.stage5_downsample);
    let _ = writeln!(s, "backbone.channels={}", c.backbone.channels);
    let _ = writeln!(s, "anchors.scales={}", join(&c.anchors.scales));
    let _ = writeln!(s, "anchors.ratios={}", join(&c.anchors.ratios));
    let _ = writeln!(s, "anchors.stride={}", c.anchors.stride);
    let _ = writeln!(s, "assignment.pos_iou_threshold={}", c.assignment.pos_iou_threshold);
    let _ = writeln!(s, "assignment.neg_iou_threshold={}", c.assignment.neg_iou_threshold);
    let _ = writeln!(s, "proposal.pre_nms_top={}", c.proposal.pre_nms_top);
    let _ = writeln!(s, "proposal.nms_iou_threshold={}", c.proposal.nms_iou_threshold);
    let _ = writeln!(s, "proposal.post_nms_top={}", c.proposal.post_nms_top);
    let _ = writeln!(s, "proposal.min_box_size={}", c.proposal.min_box_size);
    let _ = writeln!(s, "ohem.batch_size={}", c.ohem.batch_size);
    let _ = writeln!(s, "ohem.reg_loss_weight={}", c.ohem.reg_loss_weight);
    let _ = writeln!(s, "ohem.max_cls_loss={}", c.ohem.max_cls_loss);
    let _ = writeln!(s, "eval.iou_threshold={}", c.eval.iou_threshold);
    let _ = writeln!(s, "pipeline.score_threshold={}", c.score_threshold);
    let _ = writeln!(s, "pipeline.final_nms_iou={}", c.final_nms_iou);
    let _ = writeln!(s, "pipeline.roi_bins={}", c.roi_bins);
    s
}
