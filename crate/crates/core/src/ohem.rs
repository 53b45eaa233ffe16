//! Online hard example mining.
//!
//! Every ROI is evaluated once through a read-only forward function, its
//! multi-task loss is recorded, and the `batch_size` highest-loss ROIs are
//! handed to the training pass. The weight update itself lives outside this
//! crate; [`ohem_round`] only needs shared (`Fn`) access to the model.

use std::cmp::Ordering;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::BoxDelta;

#[derive(Debug, Error)]
pub enum OhemError {
    #[error("class probabilities are invalid: {0}")]
    InvalidProbabilities(String),
    #[error("target class {target} out of range for {classes} classes")]
    BadTargetClass { target: usize, classes: usize },
    #[error("foreground ROIs need a regression target and background ROIs must not have one")]
    TargetDeltaMismatch,
    #[error("{rois} ROIs but {targets} targets")]
    LengthMismatch { rois: usize, targets: usize },
    #[error("invalid OHEM config: {0}")]
    BadConfig(String),
    #[error("forward pass failed on ROI {roi}: {message}")]
    Forward { roi: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhemConfig {
    pub batch_size: usize,
    pub reg_loss_weight: f64,
    /// Cap on `-ln p` so a zero probability still sorts.
    pub max_cls_loss: f64,
}

impl Default for OhemConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            reg_loss_weight: 1.0,
            max_cls_loss: 50.0,
        }
    }
}

impl OhemConfig {
    pub fn validate(&self) -> Result<(), OhemError> {
        if self.batch_size == 0 {
            return Err(OhemError::BadConfig("batch_size must be >= 1".into()));
        }
        if !(self.reg_loss_weight.is_finite() && self.reg_loss_weight >= 0.0) {
            return Err(OhemError::BadConfig("reg_loss_weight must be >= 0".into()));
        }
        if !(self.max_cls_loss.is_finite() && self.max_cls_loss > 0.0) {
            return Err(OhemError::BadConfig("max_cls_loss must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiLoss {
    pub roi_index: usize,
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub total: f64,
}

/// Per-ROI training target: class 0 is background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiTarget {
    pub class: usize,
    pub delta: Option<BoxDelta>,
}

impl RoiTarget {
    pub fn background() -> Self {
        Self {
            class: 0,
            delta: None,
        }
    }

    pub fn foreground(class: usize, delta: BoxDelta) -> Self {
        Self {
            class,
            delta: Some(delta),
        }
    }
}

fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

fn check_probabilities(p: &[f64]) -> Result<(), OhemError> {
    if p.is_empty() {
        return Err(OhemError::InvalidProbabilities("empty vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
        return Err(OhemError::InvalidProbabilities(format!("entry {v} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(OhemError::InvalidProbabilities(format!("sum {sum} != 1")));
    }
    Ok(())
}

/// Cross-entropy plus smooth-L1 box loss for one ROI. Background ROIs (class
/// 0) carry no regression term.
pub fn roi_loss(
    roi_index: usize,
    class_probs: &[f64],
    target_class: usize,
    pred_delta: &BoxDelta,
    target_delta: Option<&BoxDelta>,
    config: &OhemConfig,
) -> Result<RoiLoss, OhemError> {
    check_probabilities(class_probs)?;
    if target_class >= class_probs.len() {
        return Err(OhemError::BadTargetClass {
            target: target_class,
            classes: class_probs.len(),
        });
    }
    let reg_loss = match (target_class, target_delta) {
        (0, None) => 0.0,
        (c, Some(t)) if c > 0 => pred_delta
            .as_array()
            .iter()
            .zip(t.as_array())
            .map(|(p, t)| smooth_l1(p - t))
            .sum(),
        _ => return Err(OhemError::TargetDeltaMismatch),
    };
    let p = class_probs[target_class];
    let cls_loss = if p > 0.0 {
        (-p.ln()).clamp(0.0, config.max_cls_loss)
    } else {
        config.max_cls_loss
    };
    Ok(RoiLoss {
        roi_index,
        cls_loss,
        reg_loss,
        total: cls_loss + config.reg_loss_weight * reg_loss,
    })
}

fn hardness_order(a: &RoiLoss, b: &RoiLoss) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then(a.roi_index.cmp(&b.roi_index))
}

/// Indices of the `batch_size` largest total losses, hardest first.
pub fn select_hard(losses: &[RoiLoss], config: &OhemConfig) -> Vec<usize> {
    let mut sorted: Vec<&RoiLoss> = losses.iter().collect();
    sorted.sort_by(|a, b| hardness_order(a, b));
    sorted
        .into_iter()
        .take(config.batch_size)
        .map(|l| l.roi_index)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OhemSelection {
    /// Selected ROI indices, hardest first.
    pub selected: Vec<usize>,
    /// Loss record for every ROI, in ROI order.
    pub losses: Vec<RoiLoss>,
}

impl OhemSelection {
    pub fn selected_losses(&self) -> Vec<RoiLoss> {
        self.selected.iter().map(|&i| self.losses[i]).collect()
    }
}

/// One read-only mining pass: evaluates `forward` on every ROI, scores each
/// against its target and selects the hardest.
///
/// `forward` returns `(class_probs, predicted_delta)`; it receives the ROI
/// index and the ROI itself.
pub fn ohem_round<R, F, E>(
    rois: &[R],
    forward: F,
    targets: &[RoiTarget],
    config: &OhemConfig,
) -> Result<OhemSelection, OhemError>
where
    R: Sync,
    F: Fn(usize, &R) -> Result<(Vec<f64>, BoxDelta), E> + Sync,
    E: std::fmt::Display,
{
    config.validate()?;
    if rois.len() != targets.len() {
        return Err(OhemError::LengthMismatch {
            rois: rois.len(),
            targets: targets.len(),
        });
    }
    let losses = rois
        .par_iter()
        .zip(targets.par_iter())
        .enumerate()
        .map(|(i, (roi, target))| {
            let (probs, pred) = forward(i, roi).map_err(|e| OhemError::Forward {
                roi: i,
                message: e.to_string(),
            })?;
            roi_loss(i, &probs, target.class, &pred, target.delta.as_ref(), config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let selected = select_hard(&losses, config);
    Ok(OhemSelection { selected, losses })
}

/// Dumps loss records as CSV (`roi_index,cls_loss,reg_loss,total`).
pub fn write_loss_csv<W: Write>(mut out: W, losses: &[RoiLoss]) -> io::Result<()> {
    writeln!(out, "roi_index,cls_loss,reg_loss,total")?;
    for l in losses {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            l.roi_index, l.cls_loss, l.reg_loss, l.total
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    const E: f64 = std::f64::consts::E;

    fn loss(i: usize, total: f64) -> RoiLoss {
        RoiLoss {
            roi_index: i,
            cls_loss: total,
            reg_loss: 0.0,
            total,
        }
    }

    /// Stable full sort, the reference selection.
    fn sort_oracle(losses: &[RoiLoss], b: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..losses.len()).collect();
        // stable sort keeps lower index first among equal totals
        idx.sort_by(|&x, &y| losses[y].total.partial_cmp(&losses[x].total).unwrap());
        idx.into_iter().take(b).map(|i| losses[i].roi_index).collect()
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let l = roi_loss(
            0,
            &[0.0, 1.0, 0.0, 0.0, 0.0],
            1,
            &BoxDelta::ZERO,
            Some(&BoxDelta::ZERO),
            &OhemConfig::default(),
        )
        .unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn background_cross_entropy() {
        let p0 = 1.0 / E;
        let rest = (1.0 - p0) / 4.0;
        let l = roi_loss(3, &[p0, rest, rest, rest, rest], 0, &BoxDelta::ZERO, None, &OhemConfig::default())
            .unwrap();
        assert!((l.cls_loss - 1.0).abs() < 1e-12);
        assert_eq!(l.reg_loss, 0.0);
        assert!((l.total - 1.0).abs() < 1e-12);
        assert_eq!(l.roi_index, 3);
    }

    #[test]
    fn smooth_l1_quadratic_branch() {
        let l = roi_loss(
            0,
            &[0.0, 1.0, 0.0, 0.0, 0.0],
            1,
            &BoxDelta::new(0.5, 0.5, 0.5, 0.5),
            Some(&BoxDelta::ZERO),
            &OhemConfig::default(),
        )
        .unwrap();
        assert!((l.reg_loss - 0.5).abs() < 1e-12);
        assert!((l.total - 0.5).abs() < 1e-12);
        assert!((smooth_l1(3.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let l = roi_loss(0, &[1.0, 0.0], 1, &BoxDelta::ZERO, Some(&BoxDelta::ZERO), &OhemConfig::default())
            .unwrap();
        assert_eq!(l.cls_loss, 50.0);
    }

    #[test]
    fn invalid_inputs() {
        let cfg = OhemConfig::default();
        assert!(matches!(
            roi_loss(0, &[0.5, 0.4], 0, &BoxDelta::ZERO, None, &cfg),
            Err(OhemError::InvalidProbabilities(_))
        ));
        assert!(matches!(
            roi_loss(0, &[-0.5, 1.5], 0, &BoxDelta::ZERO, None, &cfg),
            Err(OhemError::InvalidProbabilities(_))
        ));
        assert!(matches!(
            roi_loss(0, &[0.5, 0.5], 2, &BoxDelta::ZERO, None, &cfg),
            Err(OhemError::BadTargetClass { .. })
        ));
        assert!(matches!(
            roi_loss(0, &[0.5, 0.5], 1, &BoxDelta::ZERO, None, &cfg),
            Err(OhemError::TargetDeltaMismatch)
        ));
        assert!(matches!(
            roi_loss(0, &[0.5, 0.5], 0, &BoxDelta::ZERO, Some(&BoxDelta::ZERO), &cfg),
            Err(OhemError::TargetDeltaMismatch)
        ));
    }

    #[test]
    fn select_examples() {
        let cfg = OhemConfig {
            batch_size: 2,
            ..OhemConfig::default()
        };
        let losses = [loss(0, 0.9), loss(1, 0.1), loss(2, 0.5)];
        assert_eq!(select_hard(&losses, &cfg), vec![0, 2]);

        let few: Vec<RoiLoss> = (0..100).map(|i| loss(i, (i % 7) as f64)).collect();
        let all = select_hard(&few, &OhemConfig::default());
        assert_eq!(all.len(), 100);
        assert_eq!(all, sort_oracle(&few, 256));
    }

    #[test]
    fn three_hundred_rois_yield_256() {
        let losses: Vec<RoiLoss> = (0..300).map(|i| loss(i, ((i * 37) % 101) as f64 / 10.0)).collect();
        let sel = select_hard(&losses, &OhemConfig::default());
        assert_eq!(sel.len(), 256);
        assert_eq!(sel, sort_oracle(&losses, 256));
    }

    fn uniform_forward(_: usize, _: &()) -> Result<(Vec<f64>, BoxDelta), String> {
        Ok((vec![0.2; 5], BoxDelta::ZERO))
    }

    #[test]
    fn perfect_oracle_selects_in_index_order() {
        let rois = vec![(); 10];
        let targets = vec![RoiTarget::foreground(2, BoxDelta::ZERO); 10];
        let perfect = |_: usize, _: &()| -> Result<_, String> {
            Ok((vec![0.0, 0.0, 1.0, 0.0, 0.0], BoxDelta::ZERO))
        };
        let out = ohem_round(&rois, perfect, &targets, &OhemConfig::default()).unwrap();
        assert!(out.losses.iter().all(|l| l.total == 0.0));
        assert_eq!(out.selected, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn corrupted_target_ranks_first() {
        let rois = vec![(); 40];
        let mut targets = vec![RoiTarget::background(); 40];
        // prediction says background with p = 0.2; one ROI claims class 3
        targets[17] = RoiTarget::foreground(3, BoxDelta::new(1.0, 0.0, 0.0, 0.0));
        let forward = |_: usize, _: &()| -> Result<_, String> {
            Ok((vec![0.6, 0.1, 0.1, 0.1, 0.1], BoxDelta::ZERO))
        };
        let out = ohem_round(&rois, forward, &targets, &OhemConfig::default()).unwrap();
        assert_eq!(out.selected[0], 17);
        assert_eq!(out.selected.len(), 40);
    }

    #[test]
    fn five_hundred_rois() {
        let rois: Vec<f64> = (0..500).map(|i| ((i * 7919) % 500) as f64 / 500.0).collect();
        let targets = vec![RoiTarget::background(); 500];
        let forward = |_: usize, r: &f64| -> Result<_, String> {
            let p0 = 0.05 + 0.9 * r;
            let rest = (1.0 - p0) / 4.0;
            Ok((vec![p0, rest, rest, rest, rest], BoxDelta::ZERO))
        };
        let out = ohem_round(&rois, forward, &targets, &OhemConfig::default()).unwrap();
        assert_eq!(out.selected.len(), 256);
        assert_eq!(out.selected, sort_oracle(&out.losses, 256));
    }

    #[test]
    fn forward_errors_propagate_and_repeat_calls_agree() {
        let rois = vec![(); 5];
        let targets = vec![RoiTarget::background(); 5];
        let failing = |i: usize, _: &()| -> Result<(Vec<f64>, BoxDelta), String> {
            if i == 3 {
                Err("boom".into())
            } else {
                uniform_forward(i, &())
            }
        };
        assert!(matches!(
            ohem_round(&rois, failing, &targets, &OhemConfig::default()),
            Err(OhemError::Forward { roi: 3, .. })
        ));
        let calls = AtomicUsize::new(0);
        let counting = |i: usize, r: &()| {
            calls.fetch_add(1, AtomicOrdering::Relaxed);
            uniform_forward(i, r)
        };
        let a = ohem_round(&rois, &counting, &targets, &OhemConfig::default()).unwrap();
        let b = ohem_round(&rois, &counting, &targets, &OhemConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(AtomicOrdering::Relaxed), 10);
    }

    #[test]
    fn loss_csv_layout() {
        let mut buf = Vec::new();
        write_loss_csv(&mut buf, &[loss(4, 1.25)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "roi_index,cls_loss,reg_loss,total\n4,1.250000,0.000000,1.250000\n"
        );
    }

    proptest! {
        #[test]
        fn selection_matches_sort_oracle(
            raw in prop::collection::vec(0u32..20, 0..400),
            b in 1usize..300,
            scale in 0.01..100.0f64,
        ) {
            let losses: Vec<RoiLoss> = raw.iter().enumerate().map(|(i, &v)| loss(i, v as f64 / 4.0)).collect();
            let cfg = OhemConfig { batch_size: b, ..OhemConfig::default() };
            let sel = select_hard(&losses, &cfg);
            prop_assert_eq!(&sel, &sort_oracle(&losses, b));
            let scaled: Vec<RoiLoss> = losses.iter().map(|l| loss(l.roi_index, l.total * scale)).collect();
            prop_assert_eq!(sel, select_hard(&scaled, &cfg));
        }
    }
}
