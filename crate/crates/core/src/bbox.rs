//! Half-open integer boxes and the box helpers used by propagation and re-identification.

use serde::{Deserialize, Serialize};

use crate::grid::ProbMap;

/// Axis-aligned box with inclusive top-left `(x0, y0)` and exclusive bottom-right `(x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    /// Returns `None` for empty boxes.
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Option<Self> {
        (x0 < x1 && y0 < y1).then_some(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }
}

/// Tightest box around the pixels strictly above `threshold`.
pub fn prob_box(map: &ProbMap, threshold: f32) -> Option<BBox> {
    let (w, h) = map.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        let row = &map.data()[y * w..(y + 1) * w];
        let Some(first) = row.iter().position(|&v| v > threshold) else {
            continue;
        };
        let last = row.iter().rposition(|&v| v > threshold).unwrap_or(first);
        x0 = x0.min(first);
        x1 = x1.max(last + 1);
        y0 = y0.min(y);
        y1 = y + 1;
    }
    BBox::new(x0, y0, x1, y1)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Scales `b` about its center by `factor`, rounds outward and clamps to the image.
pub fn enlarge_box(b: BBox, factor: f64, width: usize, height: usize) -> BBox {
    // Snap values that are integral up to rounding noise so factor 1 is exact.
    fn snap(v: f64) -> f64 {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            r
        } else {
            v
        }
    }
    let factor = factor.max(1.0);
    let cx = (b.x0 + b.x1) as f64 / 2.0;
    let cy = (b.y0 + b.y1) as f64 / 2.0;
    let hw = b.width() as f64 * factor / 2.0;
    let hh = b.height() as f64 * factor / 2.0;
    let x0 = snap(cx - hw).floor().max(0.0) as usize;
    let y0 = snap(cy - hh).floor().max(0.0) as usize;
    let x1 = (snap(cx + hw).ceil() as usize).min(width);
    let y1 = (snap(cy + hh).ceil() as usize).min(height);
    BBox {
        x0: x0.min(b.x0),
        y0: y0.min(b.y0),
        x1: x1.max(b.x1).min(width),
        y1: y1.max(b.y1).min(height),
    }
}
