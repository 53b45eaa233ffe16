//! Box overlays on RGB images.

use detpipe::classes::FastenerClass;
use detpipe::data::RgbImage;
use detpipe::eval::Detection;

pub fn class_color(class: FastenerClass) -> [u8; 3] {
    match class {
        FastenerClass::V => [255, 0, 0],
        FastenerClass::W300_1 => [0, 255, 0],
        FastenerClass::Wj7 => [0, 0, 255],
        FastenerClass::Wj8 => [255, 255, 0],
    }
}

/// Inclusive pixel span covered by a continuous interval.
fn span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let a = (lo.floor().max(0.0) as usize).min(n - 1);
    let b = ((hi.ceil() as usize).saturating_sub(1)).clamp(a, n - 1);
    (a, b)
}

/// Pixels on the one pixel wide outline of `det`.
pub fn outline_pixels(det: &Detection, width: usize, height: usize) -> Vec<(usize, usize)> {
    let (x0, x1) = span(det.bbox.x_min, det.bbox.x_max, width);
    let (y0, y1) = span(det.bbox.y_min, det.bbox.y_max, height);
    let mut px = Vec::new();
    for x in x0..=x1 {
        px.push((x, y0));
        if y1 != y0 {
            px.push((x, y1));
        }
    }
    for y in y0 + 1..y1 {
        px.push((x0, y));
        if x1 != x0 {
            px.push((x1, y));
        }
    }
    px
}

// 3x5 glyphs, one row per byte, high bit on the left
fn glyph(c: char) -> [u8; 5] {
    match c {
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b101, 0b111, 0b101],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '3' => [0b111, 0b001, 0b011, 0b001, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        _ => [0; 5],
    }
}

const LABEL_SCALE: usize = 2;

fn draw_label(img: &mut RgbImage, text: &str, x: usize, y: usize, color: [u8; 3]) {
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..LABEL_SCALE {
                    for dx in 0..LABEL_SCALE {
                        let px = x + (i * 4 + col) * LABEL_SCALE + dx;
                        let py = y + r * LABEL_SCALE + dy;
                        if px < img.width && py < img.height {
                            img.put(px, py, color);
                        }
                    }
                }
            }
        }
    }
}

pub fn draw_detections(img: &mut RgbImage, dets: &[Detection], labels: bool) {
    for d in dets {
        let color = class_color(d.class);
        for (x, y) in outline_pixels(d, img.width, img.height) {
            img.put(x, y, color);
        }
        if labels {
            let h = 5 * LABEL_SCALE;
            let x = (d.bbox.x_min.max(0.0) as usize).min(img.width - 1);
            let top = d.bbox.y_min.max(0.0) as usize;
            // above the box when there is room, inside it otherwise
            let y = if top >= h + 2 { top - h - 2 } else { top + 2 };
            draw_label(img, d.class.name(), x, y, color);
        }
    }
}
