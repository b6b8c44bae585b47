//! Axis-aligned boxes in normalized image coordinates.
//!
//! The working representation is centroid form `[cx, cy, w, h]`; corner form
//! is used only for intersection arithmetic.

use serde::{Deserialize, Serialize};

/// A box in centroid form. Coordinates are fractions of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// A box in corner form, `xmin <= xmax` and `ymin <= ymax`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

/// Additive regression offsets `[dcx, dcy, dw, dh]` relative to a default box.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offsets(pub [f64; 4]);

/// Result of [`decode`]: the box plus whether a negative extent was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub bbox: BBox,
    pub clamped: bool,
}

impl BBox {
    /// Negative extents are clamped to zero.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            cx,
            cy,
            w: w.max(0.0),
            h: h.max(0.0),
        }
    }

    pub fn from_corners(c: CornerBox) -> Self {
        Self::new(
            0.5 * (c.xmin + c.xmax),
            0.5 * (c.ymin + c.ymax),
            c.xmax - c.xmin,
            c.ymax - c.ymin,
        )
    }

    pub fn to_corners(&self) -> CornerBox {
        CornerBox {
            xmin: self.cx - 0.5 * self.w,
            ymin: self.cy - 0.5 * self.h,
            xmax: self.cx + 0.5 * self.w,
            ymax: self.cy + 0.5 * self.h,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Clip the box to the unit square.
    pub fn clipped(&self) -> Self {
        let c = self.to_corners();
        Self::from_corners(CornerBox::new(
            c.xmin.clamp(0.0, 1.0),
            c.ymin.clamp(0.0, 1.0),
            c.xmax.clamp(0.0, 1.0),
            c.ymax.clamp(0.0, 1.0),
        ))
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl CornerBox {
    /// Orders each coordinate pair so the invariant `min <= max` holds.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            xmin: x0.min(x1),
            ymin: y0.min(y1),
            xmax: x0.max(x1),
            ymax: y0.max(y1),
        }
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    pub fn intersection_area(&self, other: &CornerBox) -> f64 {
        let iw = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let ih = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when `other` lies inside `self`.
    pub fn contains(&self, other: &CornerBox) -> bool {
        self.xmin <= other.xmin
            && self.ymin <= other.ymin
            && self.xmax >= other.xmax
            && self.ymax >= other.ymax
    }
}

/// Intersection over union, `|a ∩ b| / |a ∪ b|`. Pairs with zero union give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    corner_iou(&a.to_corners(), &b.to_corners())
}

pub fn corner_iou(a: &CornerBox, b: &CornerBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Location dissimilarity `1 - iou(a, b)`.
pub fn jaccard_distance(a: &BBox, b: &BBox) -> f64 {
    1.0 - iou(a, b)
}

/// Regression target of `gt` against `default`: the componentwise difference.
pub fn encode(gt: &BBox, default: &BBox) -> Offsets {
    Offsets([
        gt.cx - default.cx,
        gt.cy - default.cy,
        gt.w - default.w,
        gt.h - default.h,
    ])
}

/// Inverse of [`encode`]: `offsets + default` in centroid form.
pub fn decode(offsets: &Offsets, default: &BBox) -> Decoded {
    let [dx, dy, dw, dh] = offsets.0;
    let w = default.w + dw;
    let h = default.h + dh;
    Decoded {
        bbox: BBox::new(default.cx + dx, default.cy + dy, w, h),
        clamped: w < 0.0 || h < 0.0,
    }
}
