use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::render::render_ground_truth;
use super::SceneSpec;
use crate::camera::{Intrinsics, Pose};
use crate::dataset::FrameRecord;
use crate::error::{Error, Result};
use crate::geometry::{self, Aabb, Vec3};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJitter {
    /// Standard deviation of each rotation-vector component, radians.
    pub rot: f64,
    /// Standard deviation of each translation component, meters.
    pub trans: f64,
}

/// Which capture positions a degradation applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Horizontal angular sector around `center` (x, y), `start_deg`
    /// inclusive to `end_deg` exclusive, measured counterclockwise from +X.
    /// Wraps through 360°.
    Sector {
        center: [f64; 2],
        start_deg: f64,
        end_deg: f64,
    },
    Box { bounds: Aabb },
}

impl Region {
    pub fn contains(&self, position: Vec3) -> bool {
        match self {
            Region::Sector {
                center,
                start_deg,
                end_deg,
            } => {
                let (dx, dy) = (position[0] - center[0], position[1] - center[1]);
                if dx == 0.0 && dy == 0.0 {
                    return false;
                }
                let a = dy.atan2(dx).to_degrees().rem_euclid(360.0);
                let s = start_deg.rem_euclid(360.0);
                let e = end_deg.rem_euclid(360.0);
                if (end_deg - start_deg).abs() >= 360.0 {
                    true
                } else if s <= e {
                    a >= s && a < e
                } else {
                    a >= s || a < e
                }
            }
            Region::Box { bounds } => bounds.contains(position),
        }
    }
}

/// Capture defects applied on top of the oracle render.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    #[serde(default)]
    pub blur_sigma: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Perturbs the recorded pose only; the image comes from the true pose.
    #[serde(default)]
    pub pose_jitter: PoseJitter,
    /// When set, poses outside the region are captured cleanly.
    #[serde(default)]
    pub region: Option<Region>,
}

impl DegradationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("blur_sigma", self.blur_sigma),
            ("noise_sigma", self.noise_sigma),
            ("pose_jitter.rot", self.pose_jitter.rot),
            ("pose_jitter.trans", self.pose_jitter.trans),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(name, format!("{v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    pub fn applies_to(&self, position: Vec3) -> bool {
        self.region.as_ref().is_none_or(|r| r.contains(position))
    }
}

/// Simulated photograph from `pose`: oracle render, then blur, additive
/// Gaussian noise clamped to `[0, 1]`, and a jittered recorded pose.
/// Every random draw comes from a stream keyed by `(seed, frame_id, …)`.
pub fn capture(
    scene: &SceneSpec,
    pose: &Pose,
    intr: &Intrinsics,
    deg: &DegradationSpec,
    n_samples: usize,
    seed: u64,
    frame_id: &str,
) -> Result<FrameRecord> {
    deg.validate()?;
    let mut image = render_ground_truth(scene, pose, intr, n_samples);
    let mut recorded = *pose;
    if deg.applies_to(pose.position()) {
        let frame_tag = rng::tag(frame_id);
        if deg.blur_sigma > 0.0 {
            image = image.gaussian_blur(deg.blur_sigma);
        }
        if deg.noise_sigma > 0.0 {
            let w = image.width();
            for (i, px) in image.data_mut().chunks_exact_mut(3).enumerate() {
                let mut r = rng::stream(seed, &[frame_tag, (i % w) as u64, (i / w) as u64]);
                for v in px {
                    let n: f64 = StandardNormal.sample(&mut r);
                    *v = (*v + deg.noise_sigma * n).clamp(0.0, 1.0);
                }
            }
        }
        let j = deg.pose_jitter;
        if j.rot > 0.0 || j.trans > 0.0 {
            let mut r = rng::stream(seed, &[frame_tag, u64::MAX]);
            let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
            let rotvec: Vec3 = [normal() * j.rot, normal() * j.rot, normal() * j.rot];
            let dt: Vec3 = [normal() * j.trans, normal() * j.trans, normal() * j.trans];
            let angle = geometry::norm(rotvec);
            let dr = match geometry::normalize(rotvec) {
                Some(axis) => geometry::axis_angle(axis, angle),
                None => geometry::IDENTITY3,
            };
            recorded = pose.perturbed(&dr, dt)?;
        }
    }
    Ok(FrameRecord {
        frame_id: frame_id.to_string(),
        pose: recorded,
        image,
    })
}
