//! Classification/regression head applied to each pooled ROI.

use super::layers::{relu_in_place, softmax, Linear};
use super::ModelError;
use crate::classes::FastenerClass;
use crate::geometry::BoxDelta;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectHead {
    /// Flattened pooled input to hidden units, followed by ReLU.
    pub fc: Linear,
    /// Hidden units to background + four class logits.
    pub cls: Linear,
    /// Hidden units to four deltas per foreground class.
    pub reg: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// Indexed by [`FastenerClass::head_index`], 0 is background.
    pub class_probs: Vec<f64>,
    /// Indexed by [`FastenerClass::ordinal`].
    pub deltas: Vec<BoxDelta>,
}

impl HeadOutput {
    pub fn prob(&self, class: FastenerClass) -> f64 {
        self.class_probs[class.head_index()]
    }

    pub fn delta(&self, class: FastenerClass) -> BoxDelta {
        self.deltas[class.ordinal()]
    }
}

impl DetectHead {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            fc: Linear::zeros(in_dim, hidden),
            cls: Linear::zeros(hidden, FastenerClass::NUM_WITH_BACKGROUND),
            reg: Linear::zeros(hidden, 4 * FastenerClass::ALL.len()),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.fc.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.fc.out_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.fc.check()?;
        self.cls.check()?;
        self.reg.check()?;
        let h = self.hidden_dim();
        if self.cls.in_dim != h || self.reg.in_dim != h {
            return Err(ModelError::Dimension("detection head hidden width mismatch".into()));
        }
        if self.cls.out_dim != FastenerClass::NUM_WITH_BACKGROUND
            || self.reg.out_dim != 4 * FastenerClass::ALL.len()
        {
            return Err(ModelError::Dimension(format!(
                "detection head outputs {} classes and {} deltas",
                self.cls.out_dim, self.reg.out_dim
            )));
        }
        Ok(())
    }
}

pub fn detect_forward(pooled: &[f64], head: &DetectHead) -> Result<HeadOutput, ModelError> {
    head.validate()?;
    if pooled.len() != head.in_dim() {
        return Err(ModelError::Dimension(format!(
            "detection head expects {} pooled values, got {}",
            head.in_dim(),
            pooled.len()
        )));
    }
    let mut hidden = head.fc.forward(pooled);
    relu_in_place(&mut hidden);
    let class_probs = softmax(&head.cls.forward(&hidden));
    let raw = head.reg.forward(&hidden);
    let deltas = raw
        .chunks_exact(4)
        .map(|d| BoxDelta::new(d[0], d[1], d[2], d[3]))
        .collect();
    Ok(HeadOutput { class_probs, deltas })
}
