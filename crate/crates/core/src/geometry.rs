//! Bounding-box arithmetic: areas, IoU, the containment relation used by
//! standout scoring, and pose offsets between region locations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        if x_min < 0.0 || y_min < 0.0 {
            return Err(invalid("coordinates must be non-negative"));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(invalid("box must have strictly positive area"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Full-frame box of a `width` x `height` image.
    pub fn full_frame(width: u32, height: u32) -> Result<Self> {
        Self::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Intersection over union; symmetric, in [0, 1], 1 exactly for identical boxes.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        inter / (self.area() + other.area() - inter)
    }

    /// Fraction of this box's area covered by `other`.
    pub fn overlap_fraction(&self, other: &BoundingBox) -> f64 {
        self.intersection_area(other) / self.area()
    }

    /// True iff this box lies fully inside `other`.
    pub fn inside(&self, other: &BoundingBox) -> bool {
        self.x_min >= other.x_min
            && self.y_min >= other.y_min
            && self.x_max <= other.x_max
            && self.y_max <= other.y_max
    }

    pub fn within_image(&self, width: u32, height: u32) -> bool {
        self.x_max <= width as f64 && self.y_max <= height as f64
    }

    /// Clamp to image bounds; `None` if the clamped box is degenerate.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x_min = self.x_min.clamp(0.0, width as f64);
        let y_min = self.y_min.clamp(0.0, height as f64);
        let x_max = self.x_max.clamp(0.0, width as f64);
        let y_max = self.y_max.clamp(0.0, height as f64);
        BoundingBox::new(x_min, y_min, x_max, y_max).ok()
    }

    pub fn location(&self) -> Location {
        Location {
            cx: 0.5 * (self.x_min + self.x_max),
            cy: 0.5 * (self.y_min + self.y_max),
            scale: self.area().sqrt(),
        }
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        b.corners()
    }
}

/// Region location: box center and scale (square root of box area).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub cx: f64,
    pub cy: f64,
    pub scale: f64,
}

/// Pose displacement between two locations: translation normalized by
/// sqrt(W*H) of the target image, plus log2 scale ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
    pub dscale: f64,
}

impl Offset {
    pub const ZERO: Offset = Offset {
        dx: 0.0,
        dy: 0.0,
        dscale: 0.0,
    };
}

pub fn offset_of(l: &Location, l_prime: &Location, target_dims: (u32, u32)) -> Offset {
    let norm = ((target_dims.0 as f64) * (target_dims.1 as f64)).sqrt();
    Offset {
        dx: (l_prime.cx - l.cx) / norm,
        dy: (l_prime.cy - l.cy) / norm,
        dscale: (l_prime.scale / l.scale).log2(),
    }
}

/// Thresholds of the inclusive relation r ⊊ r_b: the contained box must be
/// small relative to the container and mostly covered by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentRule {
    /// area(r) must be strictly less than this fraction of area(r_b).
    pub area_ratio: f64,
    /// At least this fraction of area(r) must overlap r_b.
    pub overlap: f64,
}

impl Default for ContainmentRule {
    fn default() -> Self {
        ContainmentRule {
            area_ratio: 0.5,
            overlap: 0.8,
        }
    }
}

/// The containment relation r ⊊ r_b used to collect potential backgrounds.
pub fn contained_in(r: &BoundingBox, r_b: &BoundingBox, rule: &ContainmentRule) -> bool {
    r.area() < rule.area_ratio * r_b.area() && r.overlap_fraction(r_b) >= rule.overlap
}
