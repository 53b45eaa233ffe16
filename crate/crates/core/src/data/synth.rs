//! Synthetic rail scenes with one simple glyph per fastener class.
//!
//! Each glyph has a fixed size, a bright body and a small saturated "bolt"
//! disc at its center. Intensity bands are kept apart so that the body and
//! highlight masks of the toy backbone are unaffected by the pixel noise:
//! background stays at or below 126, bodies lie in 144..=206 and bolts at or
//! above 239.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classes::FastenerClass;
use crate::eval::GroundTruthObject;
use crate::geometry::BBox;

use super::image::RgbImage;
use super::voc::Annotation;

pub const BOLT_RADIUS: f64 = 7.0;
const PAD_RADIUS: f64 = 20.0;
const BOLT_LEVEL: i32 = 245;
const DROPOUT_LEVEL: i32 = 70;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Glyph centers sit at `grid * i + grid / 2`.
    pub placement_grid: usize,
    /// Minimum empty band between any two boxes, in pixels.
    pub min_gap: f64,
    /// Glyph centers keep at least this distance from every canvas edge.
    pub center_margin: f64,
    /// Uniform per-pixel noise amplitude.
    pub noise: i32,
    /// Per-class probability (report order) that a glyph pixel is knocked
    /// down to background level.
    pub class_dropout: [f64; 4],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 800,
            height: 1000,
            min_objects: 1,
            max_objects: 6,
            placement_grid: 16,
            min_gap: 32.0,
            center_margin: 128.0,
            noise: 6,
            class_dropout: [0.0; 4],
        }
    }
}

/// Glyph extent `(width, height)` in pixels.
pub fn glyph_size(class: FastenerClass) -> (usize, usize) {
    match class {
        FastenerClass::V => (160, 160),
        FastenerClass::W300_1 => (200, 128),
        FastenerClass::Wj7 => (128, 200),
        FastenerClass::Wj8 => (120, 120),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Texel {
    Empty,
    Body,
    Bolt,
}

/// Shape membership of the pixel whose center is `(u, v)` in glyph-local
/// coordinates.
fn texel(class: FastenerClass, u: f64, v: f64) -> Texel {
    let (w, h) = glyph_size(class);
    let (w, h) = (w as f64, h as f64);
    let (dx, dy) = (u - w / 2.0, v - h / 2.0);
    let r = (dx * dx + dy * dy).sqrt();
    if r <= BOLT_RADIUS {
        return Texel::Bolt;
    }
    let pad = r <= PAD_RADIUS;
    let shape = match class {
        FastenerClass::V => {
            let arm = 14.0;
            let left = w / 2.0 * (v / h);
            let right = w - left;
            (u - left).abs() <= arm || (u - right).abs() <= arm
        }
        FastenerClass::W300_1 => v <= 30.0 || u <= 34.0 || u >= w - 34.0,
        FastenerClass::Wj7 => {
            let q = ((dx / (w / 2.0)).powi(2) + (dy / (h / 2.0)).powi(2)).sqrt();
            (0.72..=1.0).contains(&q)
        }
        FastenerClass::Wj8 => dx.abs() / (w / 2.0) + dy.abs() / (h / 2.0) <= 1.0,
    };
    if shape || pad {
        Texel::Body
    } else {
        Texel::Empty
    }
}

/// Whether the glyph covers local pixel `(x, y)`.
pub fn glyph_covers(class: FastenerClass, x: usize, y: usize) -> bool {
    texel(class, x as f64 + 0.5, y as f64 + 0.5) != Texel::Empty
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub class: FastenerClass,
    /// Glyph center in canvas pixels.
    pub cx: f64,
    pub cy: f64,
}

impl Placement {
    pub fn bbox(&self) -> BBox {
        let (w, h) = glyph_size(self.class);
        BBox::from_center(self.cx, self.cy, w as f64, h as f64)
    }
}

fn separated(a: &BBox, b: &BBox, gap: f64) -> bool {
    a.x_min >= b.x_max + gap || b.x_min >= a.x_max + gap || a.y_min >= b.y_max + gap || b.y_min >= a.y_max + gap
}

/// Draws glyph placements for a scene; later glyphs that cannot be placed
/// after a bounded number of attempts are dropped.
pub fn sample_placements(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<Placement> {
    let target = rng.gen_range(config.min_objects..=config.max_objects);
    let g = config.placement_grid.max(1) as f64;
    let mut out: Vec<Placement> = Vec::with_capacity(target);
    for _ in 0..target {
        let class = FastenerClass::ALL[rng.gen_range(0..4)];
        let (w, h) = glyph_size(class);
        let (hw, hh) = (
            (w as f64 / 2.0).max(config.center_margin),
            (h as f64 / 2.0).max(config.center_margin),
        );
        // valid center indices keep the whole box on the canvas
        let i_lo = ((hw - g / 2.0) / g).ceil().max(0.0) as usize;
        let i_hi = ((config.width as f64 - hw - g / 2.0) / g).floor() as usize;
        let j_lo = ((hh - g / 2.0) / g).ceil().max(0.0) as usize;
        let j_hi = ((config.height as f64 - hh - g / 2.0) / g).floor() as usize;
        for _attempt in 0..200 {
            let i = rng.gen_range(i_lo..=i_hi);
            let j = rng.gen_range(j_lo..=j_hi);
            let p = Placement {
                class,
                cx: g * i as f64 + g / 2.0,
                cy: g * j as f64 + g / 2.0,
            };
            let b = p.bbox();
            if out.iter().all(|q| separated(&q.bbox(), &b, config.min_gap)) {
                out.push(p);
                break;
            }
        }
    }
    out
}

fn noisy(rng: &mut ChaCha8Rng, level: i32, noise: i32) -> u8 {
    let n = if noise > 0 { rng.gen_range(-noise..=noise) } else { 0 };
    (level + n).clamp(0, 255) as u8
}

fn background(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<i32> {
    let (w, h) = (config.width, config.height);
    let block = 8;
    let bw = w.div_ceil(block);
    let bh = h.div_ceil(block);
    let ballast: Vec<i32> = (0..bw * bh).map(|_| rng.gen_range(30..=90)).collect();
    let rail_x = rng.gen_range(0..w.saturating_sub(70).max(1));
    let sleeper_period = rng.gen_range(220..=320);
    let sleeper_phase = rng.gen_range(0..sleeper_period);
    let mut out = vec![0i32; w * h];
    for y in 0..h {
        let sleeper = (y + sleeper_phase) % sleeper_period < 90;
        for x in 0..w {
            out[y * w + x] = if (rail_x..rail_x + 70).contains(&x) {
                if x - rail_x < 12 {
                    120
                } else {
                    105
                }
            } else if sleeper {
                95
            } else {
                ballast[(y / block) * bw + x / block]
            };
        }
    }
    out
}

/// Renders the given placements over a fresh background.
pub fn render_scene(placements: &[Placement], seed: u64, config: &SynthConfig) -> (RgbImage, Annotation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ba11a57);
    let (w, h) = (config.width, config.height);
    let mut level = background(&mut rng, config);
    let mut ann = Annotation::new(format!("scene_{seed:06}.ppm"), w, h);

    for p in placements {
        let b = p.bbox();
        let body = rng.gen_range(150..=200);
        let dropout = config.class_dropout[p.class.ordinal()];
        let (gw, gh) = glyph_size(p.class);
        let (x0, y0) = (b.x_min.floor() as isize, b.y_min.floor() as isize);
        for ly in 0..gh + 1 {
            for lx in 0..gw + 1 {
                let (px, py) = (x0 + lx as isize, y0 + ly as isize);
                if px < 0 || py < 0 || px as usize >= w || py as usize >= h {
                    continue;
                }
                let u = px as f64 + 0.5 - b.x_min;
                let v = py as f64 + 0.5 - b.y_min;
                if u < 0.0 || v < 0.0 || u > gw as f64 || v > gh as f64 {
                    continue;
                }
                let t = texel(p.class, u, v);
                if t == Texel::Empty {
                    continue;
                }
                let idx = py as usize * w + px as usize;
                level[idx] = if dropout > 0.0 && rng.gen_bool(dropout.min(1.0)) {
                    DROPOUT_LEVEL
                } else if t == Texel::Bolt {
                    BOLT_LEVEL
                } else {
                    body
                };
            }
        }
        ann.objects.push(GroundTruthObject { class: p.class, bbox: b });
    }

    let mut img = RgbImage::new(w, h);
    for (i, &l) in level.iter().enumerate() {
        let v = noisy(&mut rng, l, config.noise);
        img.data[3 * i..3 * i + 3].copy_from_slice(&[v, v, v]);
    }
    (img, ann)
}

pub fn synthesize_scene(seed: u64, config: &SynthConfig) -> (RgbImage, Annotation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placements = sample_placements(&mut rng, config);
    render_scene(&placements, seed, config)
}
