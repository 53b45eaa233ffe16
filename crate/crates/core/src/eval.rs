//! Single-operating-point precision/recall at a fixed IOU threshold.
//!
//! Within each class, detections are visited in descending score order and
//! greedily matched to the best still-unmatched ground truth whose IOU
//! exceeds the threshold. Precision is `TP / (TP + FP)` and recall is
//! `TP / (TP + FN)`; either is 1 when its denominator is 0.

use std::fmt::Write as _;

use thiserror::Error;

use crate::classes::FastenerClass;
use crate::geometry::{iou, BBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("iou threshold {0} must lie in (0, 1)")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class: FastenerClass,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub class: FastenerClass,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.75 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.iou_threshold > 0.0 && self.iou_threshold < 1.0 {
            Ok(())
        } else {
            Err(EvalError::BadThreshold(self.iou_threshold))
        }
    }
}

/// Outcome of matching one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Per detection, in input order: class and whether it is a true positive.
    pub detections: Vec<(FastenerClass, bool)>,
    /// Per ground truth, in input order: class and whether it was matched.
    pub ground_truth: Vec<(FastenerClass, bool)>,
}

pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthObject],
    config: &EvalConfig,
) -> Result<MatchResult, EvalError> {
    config.validate()?;
    let mut det_tp = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    for class in FastenerClass::ALL {
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class == class).collect();
        order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let class_gts: Vec<usize> = (0..gts.len()).filter(|&g| gts[g].class == class).collect();
        for d in order {
            let mut best: Option<(usize, f64)> = None;
            for &g in &class_gts {
                if gt_used[g] {
                    continue;
                }
                let v = iou(&dets[d].bbox, &gts[g].bbox);
                if v > config.iou_threshold && best.map_or(true, |(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                gt_used[g] = true;
                det_tp[d] = true;
            }
        }
    }
    Ok(MatchResult {
        detections: dets.iter().map(|d| d.class).zip(det_tp).collect(),
        ground_truth: gts.iter().map(|g| g.class).zip(gt_used).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ClassCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: FastenerClass,
    pub counts: ClassCounts,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// In report order: V, W300-1, WJ-7, WJ-8.
    pub rows: Vec<ClassRow>,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

impl EvalReport {
    pub fn row(&self, class: FastenerClass) -> &ClassRow {
        &self.rows[class.ordinal()]
    }

    pub fn from_counts(counts: [ClassCounts; 4]) -> Self {
        let rows: Vec<ClassRow> = FastenerClass::ALL
            .iter()
            .zip(counts)
            .map(|(&class, counts)| ClassRow {
                class,
                counts,
                precision: counts.precision(),
                recall: counts.recall(),
            })
            .collect();
        let n = rows.len() as f64;
        let mean_precision = rows.iter().map(|r| r.precision).sum::<f64>() / n;
        let mean_recall = rows.iter().map(|r| r.recall).sum::<f64>() / n;
        Self {
            rows,
            mean_precision,
            mean_recall,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10}{:>12}{:>12}\n", "Category", "Precision", "Recall");
        let pct = |v: f64| format!("{:.2}%", v * 100.0);
        for r in &self.rows {
            let _ = writeln!(s, "{:<10}{:>12}{:>12}", r.class.name(), pct(r.precision), pct(r.recall));
        }
        let _ = writeln!(
            s,
            "{:<10}{:>12}{:>12}",
            "mean",
            pct(self.mean_precision),
            pct(self.mean_recall)
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,true_positive,false_positive,false_negative,precision,recall\n");
        for r in &self.rows {
            let c = r.counts;
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                r.class.name(),
                c.true_positive,
                c.false_positive,
                c.false_negative,
                r.precision,
                r.recall
            );
        }
        let t = self.rows.iter().fold(ClassCounts::default(), |a, r| ClassCounts {
            true_positive: a.true_positive + r.counts.true_positive,
            false_positive: a.false_positive + r.counts.false_positive,
            false_negative: a.false_negative + r.counts.false_negative,
        });
        let _ = writeln!(
            s,
            "mean,{},{},{},{:.6},{:.6}",
            t.true_positive, t.false_positive, t.false_negative, self.mean_precision, self.mean_recall
        );
        s
    }
}

/// Aggregates per-image match results into the per-class report.
pub fn report(results: &[MatchResult]) -> EvalReport {
    let mut counts = [ClassCounts::default(); 4];
    for r in results {
        for &(class, tp) in &r.detections {
            let c = &mut counts[class.ordinal()];
            if tp {
                c.true_positive += 1;
            } else {
                c.false_positive += 1;
            }
        }
        for &(class, matched) in &r.ground_truth {
            if !matched {
                counts[class.ordinal()].false_negative += 1;
            }
        }
    }
    EvalReport::from_counts(counts)
}
