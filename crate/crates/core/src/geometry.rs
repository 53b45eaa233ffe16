//! Axis-aligned box arithmetic shared by every stage of the detector.
//!
//! Coordinates are continuous pixel positions with the origin at the top-left
//! corner, x growing rightward and y downward. A box covers
//! `[x_min, x_max) x [y_min, y_max)`; there is no `+1` inclusive-width
//! convention anywhere in the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box ({0}, {1}, {2}, {3}): coordinates must be finite with min <= max")]
    InvalidBox(f64, f64, f64, f64),
    #[error("degenerate anchor")]
    DegenerateAnchor,
    #[error("degenerate target")]
    DegenerateTarget,
    #[error("non-finite box delta")]
    NonFiniteDelta,
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and inverted extents.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self {
            x_min: cx - width / 2.0,
            y_min: cy - height / 2.0,
            x_max: cx + width / 2.0,
            y_max: cy + height / 2.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Multiplies every coordinate by `s` (about the origin).
    pub fn scale(&self, s: f64) -> Self {
        Self {
            x_min: self.x_min * s,
            y_min: self.y_min * s,
            x_max: self.x_max * s,
            y_max: self.y_max * s,
        }
    }

    fn has_positive_extent(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0
    }
}

/// Regression offsets of a target box relative to a reference box.
///
/// `tx`, `ty` are center offsets in units of the reference width/height and
/// `tw`, `th` are natural-log size ratios.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl BoxDelta {
    pub const ZERO: BoxDelta = BoxDelta {
        tx: 0.0,
        ty: 0.0,
        tw: 0.0,
        th: 0.0,
    };

    pub fn new(tx: f64, ty: f64, tw: f64, th: f64) -> Self {
        Self { tx, ty, tw, th }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

pub fn area(b: &BBox) -> f64 {
    b.width().max(0.0) * b.height().max(0.0)
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn encode(anchor: &BBox, target: &BBox) -> Result<BoxDelta, GeometryError> {
    if !anchor.has_positive_extent() {
        return Err(GeometryError::DegenerateAnchor);
    }
    if !target.has_positive_extent() {
        return Err(GeometryError::DegenerateTarget);
    }
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Ok(BoxDelta {
        tx: (tcx - acx) / aw,
        ty: (tcy - acy) / ah,
        tw: (target.width() / aw).ln(),
        th: (target.height() / ah).ln(),
    })
}

pub fn decode(anchor: &BBox, delta: &BoxDelta) -> Result<BBox, GeometryError> {
    if !anchor.has_positive_extent() {
        return Err(GeometryError::DegenerateAnchor);
    }
    if !delta.is_finite() {
        return Err(GeometryError::NonFiniteDelta);
    }
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = acx + delta.tx * aw;
    let cy = acy + delta.ty * ah;
    let w = aw * delta.tw.exp();
    let h = ah * delta.th.exp();
    let b = BBox::from_center(cx, cy, w, h);
    if b.is_valid() {
        Ok(b)
    } else {
        Err(GeometryError::NonFiniteDelta)
    }
}

/// Clamps every coordinate into `[0, width] x [0, height]`.
pub fn clip(b: &BBox, width: f64, height: f64) -> BBox {
    BBox {
        x_min: b.x_min.clamp(0.0, width),
        y_min: b.y_min.clamp(0.0, height),
        x_max: b.x_max.clamp(0.0, width),
        y_max: b.y_max.clamp(0.0, height),
    }
}
