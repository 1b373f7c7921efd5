use serde::{Deserialize, Serialize};

use crate::camera::{look_at, Pose};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Horizontal rectangle flown at `center.z + altitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub center: Vec3,
    pub half_x: f64,
    pub half_y: f64,
    pub altitude: f64,
}

impl RectSpec {
    pub fn perimeter(&self) -> f64 {
        4.0 * (self.half_x + self.half_y)
    }

    /// Point at arc length `s` along the perimeter, starting from the
    /// `(+half_x, +half_y)` corner and running counterclockwise.
    pub fn point_at(&self, s: f64) -> Vec3 {
        let (hx, hy) = (self.half_x, self.half_y);
        let s = s.rem_euclid(self.perimeter());
        let (x, y) = if s < 2.0 * hx {
            (hx - s, hy)
        } else if s < 2.0 * hx + 2.0 * hy {
            (-hx, hy - (s - 2.0 * hx))
        } else if s < 4.0 * hx + 2.0 * hy {
            (-hx + (s - 2.0 * hx - 2.0 * hy), -hy)
        } else {
            (hx, -hy + (s - 4.0 * hx - 2.0 * hy))
        };
        [self.center[0] + x, self.center[1] + y, self.center[2] + self.altitude]
    }
}

/// `n_frames` poses equally spaced by arc length, each facing `target`
/// with world +Z as up.
pub fn rectangular_trajectory(rect: &RectSpec, n_frames: usize, target: Vec3) -> Result<Vec<Pose>> {
    if !(rect.half_x > 0.0) {
        return Err(Error::validation("half_x", "rectangle half-width must be positive"));
    }
    if !(rect.half_y > 0.0) {
        return Err(Error::validation("half_y", "rectangle half-depth must be positive"));
    }
    if n_frames < 4 {
        return Err(Error::validation("n_frames", "need at least 4 frames"));
    }
    let step = rect.perimeter() / n_frames as f64;
    (0..n_frames)
        .map(|i| look_at(rect.point_at(i as f64 * step), target, [0.0, 0.0, 1.0]))
        .collect()
}
