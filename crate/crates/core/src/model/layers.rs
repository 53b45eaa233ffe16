//! Dense layers shared by the RPN and detection heads.

use super::ModelError;

/// 3x3 convolution, stride 1, zero padding. Weights are `[out][in][3][3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn weight_index(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + c) * 3 + ky) * 3 + kx
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.weight.len() != self.out_channels * self.in_channels * 9
            || self.bias.len() != self.out_channels
        {
            return Err(ModelError::Dimension(format!(
                "conv3x3 {}->{} has {} weights and {} biases",
                self.in_channels,
                self.out_channels,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    /// Applies the convolution to a CHW tensor, returning CHW output.
    pub fn forward(&self, input: &[f64], height: usize, width: usize) -> Result<Vec<f64>, ModelError> {
        self.check()?;
        let plane = height * width;
        if input.len() != self.in_channels * plane {
            return Err(ModelError::Dimension(format!(
                "conv3x3 expects {} input channels of {}x{}, got {} values",
                self.in_channels,
                width,
                height,
                input.len()
            )));
        }
        let mut out = vec![0.0; self.out_channels * plane];
        for o in 0..self.out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(self.bias[o]);
            for c in 0..self.in_channels {
                let src = &input[c * plane..(c + 1) * plane];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let w = self.weight[self.weight_index(o, c, ky, kx)];
                        accumulate_shifted(dst, src, height, width, ky as isize - 1, kx as isize - 1, w);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `dst[y][x] += w * src[y + dy][x + dx]`, treating out-of-range source as 0.
fn accumulate_shifted(
    dst: &mut [f64],
    src: &[f64],
    height: usize,
    width: usize,
    dy: isize,
    dx: isize,
    w: f64,
) {
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (width as isize - dx).min(width as isize).max(0) as usize;
    if x_lo >= x_hi {
        return;
    }
    for y in 0..height {
        let sy = y as isize + dy;
        if sy < 0 || sy >= height as isize {
            continue;
        }
        let srow = &src[sy as usize * width..(sy as usize + 1) * width];
        let drow = &mut dst[y * width..(y + 1) * width];
        let s_lo = (x_lo as isize + dx) as usize;
        let len = x_hi - x_lo;
        for (d, s) in drow[x_lo..x_hi].iter_mut().zip(&srow[s_lo..s_lo + len]) {
            *d += w * s;
        }
    }
}

/// Fully connected layer, weights `[out][in]`. Also serves as a 1x1 conv.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.weight.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(ModelError::Dimension(format!(
                "linear {}->{} has {} weights and {} biases",
                self.in_dim,
                self.out_dim,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Applies the layer at every location of a CHW tensor (a 1x1 conv).
    pub fn forward_pointwise(&self, input: &[f64], plane: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim * plane);
        let mut out = vec![0.0; self.out_dim * plane];
        for o in 0..self.out_dim {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(self.bias[o]);
            for i in 0..self.in_dim {
                let w = self.weight[o * self.in_dim + i];
                let src = &input[i * plane..(i + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
