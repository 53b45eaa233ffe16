//! A fixed, training-free stand-in for the convolutional backbone.
//!
//! A small per-pixel filter bank is computed on the luminance plane and
//! average-pooled over stride x stride blocks. Attaching the RPN at the fifth
//! stage adds a 3x3 smoothing pass and, unless downsampling is disabled, a
//! further 2x2 pooling (stride 32).

use super::{FeatureMap, ModelError};
use crate::data::RgbImage;

pub const INPUT_WIDTH: usize = 800;
pub const INPUT_HEIGHT: usize = 1000;

pub const BODY_THRESHOLD: f64 = 0.55;
pub const HIGHLIGHT_THRESHOLD: f64 = 0.88;
pub const DARK_THRESHOLD: f64 = 0.2;

const STAGE4_STRIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Filter {
    Luminance,
    /// Luminance above [`BODY_THRESHOLD`].
    BodyMask,
    /// Luminance above [`HIGHLIGHT_THRESHOLD`].
    HighlightMask,
    /// |Sobel x| / 4.
    GradientX,
    /// |Sobel y| / 4.
    GradientY,
    /// Luminance below [`DARK_THRESHOLD`].
    DarkMask,
}

/// Channel `c` of the feature map is `FILTER_BANK[c]`.
pub const FILTER_BANK: [Filter; 6] = [
    Filter::Luminance,
    Filter::BodyMask,
    Filter::HighlightMask,
    Filter::GradientX,
    Filter::GradientY,
    Filter::DarkMask,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachStage {
    Stage4,
    Stage5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneSpec {
    pub attach_stage: AttachStage,
    pub stage5_downsample: bool,
    /// Uses the first `channels` filters of [`FILTER_BANK`].
    pub channels: usize,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            attach_stage: AttachStage::Stage4,
            stage5_downsample: true,
            channels: FILTER_BANK.len(),
        }
    }
}

impl BackboneSpec {
    pub fn stride(&self) -> usize {
        match (self.attach_stage, self.stage5_downsample) {
            (AttachStage::Stage5, true) => STAGE4_STRIDE * 2,
            _ => STAGE4_STRIDE,
        }
    }

    /// Feature map (width, height) for the fixed 800x1000 input.
    pub fn feature_size(&self) -> (usize, usize) {
        let s = self.stride();
        (INPUT_WIDTH / s, INPUT_HEIGHT / s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.channels == 0 || self.channels > FILTER_BANK.len() {
            return Err(ModelError::BadSpec(format!(
                "channels must be in 1..={}, got {}",
                FILTER_BANK.len(),
                self.channels
            )));
        }
        Ok(())
    }
}

fn filter_value(f: Filter, lum: &[f64], width: usize, height: usize, x: usize, y: usize) -> f64 {
    let at = |xx: usize, yy: usize| lum[yy * width + xx];
    let l = at(x, y);
    match f {
        Filter::Luminance => l,
        Filter::BodyMask => (l > BODY_THRESHOLD) as u8 as f64,
        Filter::HighlightMask => (l > HIGHLIGHT_THRESHOLD) as u8 as f64,
        Filter::DarkMask => (l < DARK_THRESHOLD) as u8 as f64,
        Filter::GradientX | Filter::GradientY => {
            // replicate padding keeps flat images gradient-free at the border
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(width - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(height - 1);
            let g = if f == Filter::GradientX {
                (at(xp, ym) + 2.0 * at(xp, y) + at(xp, yp)) - (at(xm, ym) + 2.0 * at(xm, y) + at(xm, yp))
            } else {
                (at(xm, yp) + 2.0 * at(x, yp) + at(xp, yp)) - (at(xm, ym) + 2.0 * at(x, ym) + at(xp, ym))
            };
            g.abs() / 4.0
        }
    }
}

/// Average of each channel over `stride x stride` pixel blocks; the partial
/// block at the bottom edge is dropped.
fn pooled_filter_bank(img: &RgbImage, channels: usize, stride: usize) -> FeatureMap {
    let (w, h) = (img.width, img.height);
    let lum = img.luminance();
    let (fw, fh) = (w / stride, h / stride);
    let mut fm = FeatureMap::zeros(channels, fh, fw, stride);
    let plane = fw * fh;
    let bank = &FILTER_BANK[..channels];
    for y in 0..fh * stride {
        let row = (y / stride) * fw;
        for x in 0..fw * stride {
            let cell = row + x / stride;
            for (c, &f) in bank.iter().enumerate() {
                fm.data[c * plane + cell] += filter_value(f, &lum, w, h, x, y);
            }
        }
    }
    let norm = 1.0 / (stride * stride) as f64;
    fm.data.iter_mut().for_each(|v| *v *= norm);
    fm
}

/// 3x3 mean filter with replicate padding.
fn smooth3x3(fm: &FeatureMap) -> FeatureMap {
    let mut out = FeatureMap::zeros(fm.channels, fm.height, fm.width, fm.stride);
    for c in 0..fm.channels {
        for y in 0..fm.height {
            for x in 0..fm.width {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = (y as isize + dy).clamp(0, fm.height as isize - 1) as usize;
                        let xx = (x as isize + dx).clamp(0, fm.width as isize - 1) as usize;
                        acc += fm.at(c, yy, xx);
                    }
                }
                out.set(c, y, x, acc / 9.0);
            }
        }
    }
    out
}

fn avg_pool2(fm: &FeatureMap) -> FeatureMap {
    let (w, h) = (fm.width / 2, fm.height / 2);
    let mut out = FeatureMap::zeros(fm.channels, h, w, fm.stride * 2);
    for c in 0..fm.channels {
        for y in 0..h {
            for x in 0..w {
                let s = fm.at(c, 2 * y, 2 * x)
                    + fm.at(c, 2 * y, 2 * x + 1)
                    + fm.at(c, 2 * y + 1, 2 * x)
                    + fm.at(c, 2 * y + 1, 2 * x + 1);
                out.set(c, y, x, s / 4.0);
            }
        }
    }
    out
}

pub fn extract_features(img: &RgbImage, spec: &BackboneSpec) -> Result<FeatureMap, ModelError> {
    if img.width != INPUT_WIDTH || img.height != INPUT_HEIGHT {
        return Err(ModelError::InputSize {
            width: img.width,
            height: img.height,
        });
    }
    spec.validate()?;
    let stage4 = pooled_filter_bank(img, spec.channels, STAGE4_STRIDE);
    Ok(match spec.attach_stage {
        AttachStage::Stage4 => stage4,
        AttachStage::Stage5 => {
            let s5 = smooth3x3(&stage4);
            if spec.stage5_downsample {
                avg_pool2(&s5)
            } else {
                s5
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(stage: AttachStage, ds: bool) -> BackboneSpec {
        BackboneSpec {
            attach_stage: stage,
            stage5_downsample: ds,
            channels: 6,
        }
    }

    #[test]
    fn rejects_wrong_input_size() {
        let img = RgbImage::new(640, 480);
        assert_eq!(
            extract_features(&img, &BackboneSpec::default()),
            Err(ModelError::InputSize { width: 640, height: 480 })
        );
    }

    #[test]
    fn constant_image_gives_constant_channels() {
        let img = RgbImage::filled(800, 1000, [200, 200, 200]);
        for s in [
            spec(AttachStage::Stage4, true),
            spec(AttachStage::Stage5, false),
            spec(AttachStage::Stage5, true),
        ] {
            let fm = extract_features(&img, &s).unwrap();
            for c in 0..fm.channels {
                let ch = fm.channel(c);
                assert!(ch.iter().all(|v| (v - ch[0]).abs() < 1e-12), "channel {c}");
            }
            assert!((fm.at(0, 0, 0) - 200.0 / 255.0).abs() < 1e-9);
            assert_eq!(fm.at(1, 0, 0), 1.0);
            assert_eq!(fm.at(2, 0, 0), 0.0);
            assert_eq!(fm.at(3, 3, 3), 0.0);
        }
    }

    #[test]
    fn stage_strides_and_shapes() {
        let img = RgbImage::new(800, 1000);
        let s4 = extract_features(&img, &spec(AttachStage::Stage4, true)).unwrap();
        let s5 = extract_features(&img, &spec(AttachStage::Stage5, false)).unwrap();
        let s5d = extract_features(&img, &spec(AttachStage::Stage5, true)).unwrap();
        assert_eq!((s4.width, s4.height, s4.stride), (50, 62, 16));
        assert_eq!((s5.width, s5.height, s5.stride), (50, 62, 16));
        assert_eq!((s5d.width, s5d.height, s5d.stride), (25, 31, 32));
        assert_eq!(spec(AttachStage::Stage5, true).feature_size(), (25, 31));
    }

    #[test]
    fn channel_count_validated() {
        let img = RgbImage::new(800, 1000);
        let bad = BackboneSpec { channels: 7, ..BackboneSpec::default() };
        assert!(matches!(extract_features(&img, &bad), Err(ModelError::BadSpec(_))));
        let three = BackboneSpec { channels: 3, ..BackboneSpec::default() };
        assert_eq!(extract_features(&img, &three).unwrap().channels, 3);
    }

    #[test]
    fn bright_block_lights_up_one_cell() {
        let mut img = RgbImage::filled(800, 1000, [60, 60, 60]);
        for y in 32..48 {
            for x in 16..32 {
                img.put(x, y, [250, 250, 250]);
            }
        }
        let fm = extract_features(&img, &BackboneSpec::default()).unwrap();
        assert_eq!(fm.at(1, 2, 1), 1.0);
        assert_eq!(fm.at(2, 2, 1), 1.0);
        assert_eq!(fm.at(1, 2, 2), 0.0);
        // vertical edges show up in the x-gradient channel of neighbours
        assert!(fm.at(3, 2, 0) > 0.0);
        assert_eq!(fm.at(3, 5, 5), 0.0);
    }
}
