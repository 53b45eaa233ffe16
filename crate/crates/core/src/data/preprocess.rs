//! Height-normalizing resize to the fixed 800x1000 canvas.
//!
//! Images are scaled by `s = 1000 / H0` with bilinear sampling. The scaled
//! width `W1 = round(s * W0)` is then center-cropped to 800 columns, or
//! padded with black on both sides (left pad `floor((800 - W1) / 2)`).

use crate::eval::GroundTruthObject;
use crate::geometry::{clip, BBox};

use super::image::RgbImage;
use super::voc::Annotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub target_width: usize,
    pub target_height: usize,
    pub pad_value: u8,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_width: 800,
            target_height: 1000,
            pad_value: 0,
        }
    }
}

/// Geometry of the transform for a given source size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessPlan {
    pub scale: f64,
    pub scaled_width: usize,
    /// Scaled-image column shown at canvas column 0 (crop case).
    pub crop_left: usize,
    /// Canvas column where scaled column 0 lands (pad case).
    pub pad_left: usize,
}

impl PreprocessPlan {
    pub fn new(src_width: usize, src_height: usize, config: &PreprocessConfig) -> Self {
        assert!(src_width >= 1 && src_height >= 1, "empty source image");
        let scale = config.target_height as f64 / src_height as f64;
        let scaled_width = ((scale * src_width as f64).round() as usize).max(1);
        let tw = config.target_width;
        let (crop_left, pad_left) = if scaled_width > tw {
            ((scaled_width - tw) / 2, 0)
        } else {
            (0, (tw - scaled_width) / 2)
        };
        Self {
            scale,
            scaled_width,
            crop_left,
            pad_left,
        }
    }

    /// Canvas x for a source x coordinate.
    pub fn map_x(&self, x: f64) -> f64 {
        x * self.scale - self.crop_left as f64 + self.pad_left as f64
    }

    pub fn map_y(&self, y: f64) -> f64 {
        y * self.scale
    }
}

fn sample_axis(dst: usize, scale: f64, src_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) / scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

fn bilinear(img: &RgbImage, x: (usize, usize, f64), y: (usize, usize, f64)) -> [u8; 3] {
    let (x0, x1, fx) = x;
    let (y0, y1, fy) = y;
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
        let bot = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
        out[k] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn preprocess_image(img: &RgbImage, config: &PreprocessConfig) -> (RgbImage, PreprocessPlan) {
    let plan = PreprocessPlan::new(img.width, img.height, config);
    let (tw, th) = (config.target_width, config.target_height);
    let mut out = RgbImage::filled(tw, th, [config.pad_value; 3]);
    let visible = plan.scaled_width.min(tw);
    let xs: Vec<_> = (0..visible)
        .map(|cx| sample_axis(cx + plan.crop_left, plan.scale, img.width))
        .collect();
    for y in 0..th {
        let sy = sample_axis(y, plan.scale, img.height);
        for (cx, &sx) in xs.iter().enumerate() {
            out.put(cx + plan.pad_left, y, bilinear(img, sx, sy));
        }
    }
    (out, plan)
}

pub fn preprocess_annotation(ann: &Annotation, plan: &PreprocessPlan, config: &PreprocessConfig) -> Annotation {
    let (tw, th) = (config.target_width as f64, config.target_height as f64);
    let objects = ann
        .objects
        .iter()
        .filter_map(|o| {
            let b = o.bbox;
            let (x0, x1) = (plan.map_x(b.x_min), plan.map_x(b.x_max));
            if x1 <= 0.0 || x0 >= tw {
                return None;
            }
            let mapped = BBox {
                x_min: x0,
                y_min: plan.map_y(b.y_min),
                x_max: x1,
                y_max: plan.map_y(b.y_max),
            };
            Some(GroundTruthObject {
                class: o.class,
                bbox: clip(&mapped, tw, th),
            })
        })
        .collect();
    Annotation {
        filename: ann.filename.clone(),
        width: config.target_width,
        height: config.target_height,
        objects,
    }
}

pub fn preprocess(img: &RgbImage, ann: &Annotation, config: &PreprocessConfig) -> (RgbImage, Annotation) {
    let (out, plan) = preprocess_image(img, config);
    let ann = preprocess_annotation(ann, &plan, config);
    (out, ann)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::FastenerClass;

    fn checker(w: usize, h: usize) -> RgbImage {
        let mut img = RgbImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                img.put(x, y, [(x % 251) as u8, (y % 241) as u8, ((x + y) % 7 * 30) as u8]);
            }
        }
        img
    }

    #[test]
    fn plans_for_fixture_sizes() {
        let cfg = PreprocessConfig::default();
        let p = PreprocessPlan::new(1600, 2000, &cfg);
        assert_eq!((p.scale, p.scaled_width, p.crop_left, p.pad_left), (0.5, 800, 0, 0));
        let p = PreprocessPlan::new(2400, 2500, &cfg);
        assert_eq!((p.scaled_width, p.crop_left, p.pad_left), (960, 80, 0));
        let p = PreprocessPlan::new(1500, 2500, &cfg);
        assert_eq!((p.scaled_width, p.crop_left, p.pad_left), (600, 0, 100));
        assert_eq!(p.map_x(0.0), 100.0);
    }

    #[test]
    fn pad_columns_are_black() {
        let (out, _) = preprocess_image(&checker(150, 250), &PreprocessConfig::default());
        assert_eq!((out.width, out.height), (800, 1000));
        for y in [0, 500, 999] {
            for x in (0..100).chain(700..800) {
                assert_eq!(out.get(x, y), [0, 0, 0]);
            }
        }
    }

    #[test]
    fn identity_size_is_unchanged() {
        let img = checker(800, 1000);
        let (out, _) = preprocess_image(&img, &PreprocessConfig::default());
        assert_eq!(out, img);
    }

    #[test]
    fn tiny_input() {
        let mut img = RgbImage::new(1, 1);
        img.put(0, 0, [9, 8, 7]);
        let (out, plan) = preprocess_image(&img, &PreprocessConfig::default());
        assert_eq!(plan.scaled_width, 1000);
        assert_eq!(out.get(0, 0), [9, 8, 7]);
        assert_eq!(out.get(799, 999), [9, 8, 7]);
    }

    #[test]
    fn boxes_follow_the_image() {
        let cfg = PreprocessConfig::default();
        let mut ann = Annotation::new("x.ppm", 2400, 2500);
        for (x0, x1) in [(0.0, 100.0), (100.0, 300.0), (1000.0, 1400.0), (2300.0, 2400.0)] {
            ann.objects.push(GroundTruthObject {
                class: FastenerClass::V,
                bbox: BBox::new(x0, 10.0, x1, 2500.0).unwrap(),
            });
        }
        let plan = PreprocessPlan::new(2400, 2500, &cfg);
        let out = preprocess_annotation(&ann, &plan, &cfg);
        // first and last fall entirely inside the cropped margins
        assert_eq!(out.objects.len(), 2);
        assert_eq!(out.objects[0].bbox, BBox::new(0.0, 4.0, 40.0, 1000.0).unwrap());
        assert_eq!(out.objects[1].bbox, BBox::new(320.0, 4.0, 480.0, 1000.0).unwrap());
    }
}
