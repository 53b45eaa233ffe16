//! Folding inference-time batch normalisation (and its affine scale) into the
//! preceding convolution: `w' = w * g / sqrt(var + eps)`,
//! `b' = (b - mean) * g / sqrt(var + eps) + beta`.

use super::layers::Conv3x3;
use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub epsilon: f64,
}

impl BnParams {
    pub fn identity(channels: usize, epsilon: f64) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            variance: vec![1.0; channels],
            epsilon,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.channels();
        if self.beta.len() != n || self.mean.len() != n || self.variance.len() != n {
            return Err(ModelError::ChannelMismatch(format!(
                "batch-norm vectors have lengths {}/{}/{}/{}",
                n,
                self.beta.len(),
                self.mean.len(),
                self.variance.len()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(ModelError::Dimension("batch-norm epsilon must be > 0".into()));
        }
        if self.variance.iter().any(|v| *v < 0.0) {
            return Err(ModelError::Dimension("batch-norm variance must be >= 0".into()));
        }
        Ok(())
    }

    fn scale(&self, c: usize) -> f64 {
        self.gamma[c] / (self.variance[c] + self.epsilon).sqrt()
    }
}

/// Folds `bn` into a layer whose weights are laid out output-channel-major.
pub fn fold_batchnorm(
    weights: &[f64],
    bias: &[f64],
    bn: &BnParams,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    bn.validate()?;
    let out_ch = bias.len();
    if out_ch != bn.channels() || out_ch == 0 || weights.len() % out_ch != 0 {
        return Err(ModelError::ChannelMismatch(format!(
            "{} weights and {} biases cannot fold a {}-channel batch norm",
            weights.len(),
            out_ch,
            bn.channels()
        )));
    }
    let per = weights.len() / out_ch;
    let mut folded_w = Vec::with_capacity(weights.len());
    let mut folded_b = Vec::with_capacity(out_ch);
    for (o, chunk) in weights.chunks_exact(per).enumerate() {
        let s = bn.scale(o);
        folded_w.extend(chunk.iter().map(|w| w * s));
        folded_b.push((bias[o] - bn.mean[o]) * s + bn.beta[o]);
    }
    Ok((folded_w, folded_b))
}

/// Unfused normalisation of a CHW tensor, the reference for folding.
pub fn apply_batchnorm(x: &mut [f64], plane: usize, bn: &BnParams) {
    for (c, chunk) in x.chunks_exact_mut(plane).enumerate() {
        let inv = 1.0 / (bn.variance[c] + bn.epsilon).sqrt();
        for v in chunk {
            *v = (*v - bn.mean[c]) * inv * bn.gamma[c] + bn.beta[c];
        }
    }
}

impl Conv3x3 {
    pub fn fold_batchnorm(&self, bn: &BnParams) -> Result<Conv3x3, ModelError> {
        let (weight, bias) = fold_batchnorm(&self.weight, &self.bias, bn)?;
        Ok(Conv3x3 {
            weight,
            bias,
            ..*self
        })
    }
}
