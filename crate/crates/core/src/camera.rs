//! Pinhole camera model and rigid poses.
//!
//! Convention: right-handed world frame, +Z up. In its own frame a camera
//! looks down −Z with +Y up and +X right. Pixel `(px, py)` covers
//! `[px, px+1) × [py, py+1)` with `py` growing downward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Mat3, Vec3};

/// Horizontal-FOV pinhole intrinsics with square pixels and a centered
/// principal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics", into = "RawIntrinsics")]
pub struct Intrinsics {
    width: usize,
    height: usize,
    fov_x: f64,
    focal_px: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    width: usize,
    height: usize,
    fov_x: f64,
}

impl TryFrom<RawIntrinsics> for Intrinsics {
    type Error = Error;
    fn try_from(r: RawIntrinsics) -> Result<Self> {
        Intrinsics::new(r.width, r.height, r.fov_x)
    }
}

impl From<Intrinsics> for RawIntrinsics {
    fn from(i: Intrinsics) -> Self {
        RawIntrinsics {
            width: i.width,
            height: i.height,
            fov_x: i.fov_x,
        }
    }
}

impl Intrinsics {
    pub fn new(width: usize, height: usize, fov_x: f64) -> Result<Self> {
        if width < 1 {
            return Err(Error::validation("width", "must be at least 1 pixel"));
        }
        if height < 1 {
            return Err(Error::validation("height", "must be at least 1 pixel"));
        }
        if !(fov_x > 0.0 && fov_x < std::f64::consts::PI) {
            return Err(Error::validation("fov_x", format!("{fov_x} is outside (0, π)")));
        }
        let focal_px = (width as f64 / 2.0) / (fov_x / 2.0).tan();
        Ok(Self {
            width,
            height,
            fov_x,
            focal_px,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fov_x(&self) -> f64 {
        self.fov_x
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Same field of view at a different resolution.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, self.fov_x)
    }
}

/// World-from-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl Pose {
    /// Validates that `rotation` is a proper rotation (orthonormal,
    /// determinant +1) to within 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("translation", "non-finite component"));
        }
        let rtr = geometry::mat_mul(&geometry::transpose(&rotation), &rotation);
        for (r, row) in rtr.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let expected = if r == c { 1.0 } else { 0.0 };
                if !((v - expected).abs() <= ORTHONORMAL_TOL) {
                    return Err(Error::validation(
                        "rotation",
                        format!("not orthonormal: (RᵀR)[{r}][{c}] = {v}"),
                    ));
                }
            }
        }
        let det = geometry::determinant(&rotation);
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::validation("rotation", format!("determinant {det} is not +1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: geometry::IDENTITY3,
            translation: [0.0; 3],
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vec3 {
        self.translation
    }

    /// Unit viewing direction (camera −Z) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        let r = &self.rotation;
        [-r[0][2], -r[1][2], -r[2][2]]
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4]) -> Result<Self> {
        let bottom = m[3];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::validation("transform_matrix", "last row must be [0, 0, 0, 1]"));
        }
        let rotation = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        Self::new(rotation, [m[0][3], m[1][3], m[2][3]])
    }

    /// `self` perturbed by a left-multiplied rotation and a translation
    /// offset. The perturbation rotation must itself be proper.
    pub fn perturbed(&self, delta_rotation: &Mat3, delta_translation: Vec3) -> Result<Self> {
        Self::new(
            geometry::mat_mul(delta_rotation, &self.rotation),
            geometry::add(self.translation, delta_translation),
        )
    }
}

/// Half-line `origin + t·direction`, `t ≥ 0`, with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        geometry::add(self.origin, geometry::scale(self.direction, t))
    }
}

/// Pose at `position` whose forward axis points at `target`, with camera
/// +Y as close to `up` as possible.
pub fn look_at(position: Vec3, target: Vec3, up: Vec3) -> Result<Pose> {
    let forward = geometry::normalize(geometry::sub(target, position))
        .ok_or_else(|| Error::Geometry(format!("position {position:?} coincides with target")))?;
    let right = geometry::cross(forward, up);
    let right_norm = geometry::norm(right);
    let up_norm = geometry::norm(up);
    if !(up_norm > 0.0) || right_norm <= 1e-9 * up_norm {
        return Err(Error::Geometry(format!(
            "up vector {up:?} is parallel to the viewing direction {forward:?}"
        )));
    }
    let right = geometry::scale(right, 1.0 / right_norm);
    let cam_up = geometry::cross(right, forward);
    let back = geometry::scale(forward, -1.0);
    // Columns are the camera axes expressed in world coordinates.
    let rotation = [
        [right[0], cam_up[0], back[0]],
        [right[1], cam_up[1], back[1]],
        [right[2], cam_up[2], back[2]],
    ];
    Pose::new(rotation, position)
}

/// Camera-frame direction through the continuous image point `(u, v)`.
#[inline]
fn camera_direction(intr: &Intrinsics, u: f64, v: f64) -> Vec3 {
    let f = intr.focal_px;
    [
        (u - intr.width as f64 / 2.0) / f,
        -(v - intr.height as f64 / 2.0) / f,
        -1.0,
    ]
}

/// Ray through the center of pixel `(px, py)`.
pub fn pixel_ray(intr: &Intrinsics, pose: &Pose, px: usize, py: usize) -> Result<Ray> {
    if px >= intr.width {
        return Err(Error::validation("px", format!("{px} ≥ width {}", intr.width)));
    }
    if py >= intr.height {
        return Err(Error::validation("py", format!("{py} ≥ height {}", intr.height)));
    }
    Ok(pixel_ray_unchecked(intr, pose, px, py))
}

#[inline]
pub(crate) fn pixel_ray_unchecked(intr: &Intrinsics, pose: &Pose, px: usize, py: usize) -> Ray {
    let d_cam = camera_direction(intr, px as f64 + 0.5, py as f64 + 0.5);
    let d_world = geometry::mat_vec(&pose.rotation, d_cam);
    Ray {
        origin: pose.translation,
        direction: geometry::normalize(d_world).expect("pinhole direction has z = -1"),
    }
}

/// Continuous image coordinates of a world point, `None` when it is not
/// strictly in front of the camera.
pub fn project(intr: &Intrinsics, pose: &Pose, point: Vec3) -> Option<(f64, f64)> {
    let rel = geometry::sub(point, pose.translation);
    let p = geometry::mat_vec(&geometry::transpose(&pose.rotation), rel);
    if p[2] >= 0.0 {
        return None;
    }
    let depth = -p[2];
    let f = intr.focal_px;
    Some((
        intr.width as f64 / 2.0 + f * p[0] / depth,
        intr.height as f64 / 2.0 - f * p[1] / depth,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn focal_from_fov() {
        assert!((Intrinsics::new(2, 2, FRAC_PI_2).unwrap().focal_px() - 1.0).abs() < 1e-12);
        let hd = Intrinsics::new(1920, 1080, FRAC_PI_2).unwrap();
        assert!((hd.focal_px() - 960.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_intrinsics_name_the_field() {
        let err = Intrinsics::new(0, 4, 1.0).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
        let err = Intrinsics::new(4, 0, 1.0).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
        for bad in [0.0, PI, -1.0, f64::NAN] {
            let err = Intrinsics::new(4, 4, bad).unwrap_err().to_string();
            assert!(err.contains("fov_x"), "{err}");
        }
    }

    #[test]
    fn look_at_down_the_z_axis() {
        let pose = look_at([0.0, 0.0, 1.0], [0.0; 3], [0.0, 1.0, 0.0]).unwrap();
        let f = pose.forward();
        assert!(geometry::distance(f, [0.0, 0.0, -1.0]) < 1e-15);
    }

    #[test]
    fn look_at_along_x() {
        let pose = look_at([1.0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert!(geometry::distance(pose.forward(), [-1.0, 0.0, 0.0]) < 1e-15);
        let r = pose.rotation();
        let rrt = geometry::mat_mul(r, &geometry::transpose(r));
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((rrt[i][j] - e).abs() < 1e-12);
            }
        }
        // camera up stays with world up
        assert!(geometry::distance([r[0][1], r[1][1], r[2][1]], [0.0, 0.0, 1.0]) < 1e-15);
    }

    #[test]
    fn look_at_degenerate() {
        assert!(matches!(look_at([1.0; 3], [1.0; 3], [0.0, 0.0, 1.0]), Err(Error::Geometry(_))));
        assert!(matches!(
            look_at([0.0, 0.0, 2.0], [0.0; 3], [0.0, 0.0, 1.0]),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn center_pixel_is_optical_axis() {
        let intr = Intrinsics::new(5, 3, 1.2).unwrap();
        let ray = pixel_ray(&intr, &Pose::identity(), 2, 1).unwrap();
        assert!(geometry::distance(ray.direction, [0.0, 0.0, -1.0]) < 1e-15);
    }

    #[test]
    fn corner_pixel_of_two_by_two() {
        let intr = Intrinsics::new(2, 2, FRAC_PI_2).unwrap();
        let ray = pixel_ray(&intr, &Pose::identity(), 0, 0).unwrap();
        // Hand geometry: focal 1, pixel center offset (-0.5, -0.5) in image
        // coordinates, image v grows downward so camera y is +0.5.
        let expected = geometry::normalize([-0.5, 0.5, -1.0]).unwrap();
        assert!(geometry::distance(ray.direction, expected) < 1e-15);
        let (u, v) = project(&intr, &Pose::identity(), ray.at(3.0)).unwrap();
        assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_pixel() {
        let intr = Intrinsics::new(4, 3, 1.0).unwrap();
        assert!(pixel_ray(&intr, &Pose::identity(), 4, 0).is_err());
        assert!(pixel_ray(&intr, &Pose::identity(), 0, 3).is_err());
    }

    #[test]
    fn rejects_improper_rotation() {
        let mirror = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(Pose::new(mirror, [0.0; 3]).is_err());
        let sheared = [[1.0, 1e-6, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Pose::new(sheared, [0.0; 3]).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let pose = look_at([1.0, 2.0, 3.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(Pose::from_matrix(&pose.to_matrix()).unwrap(), pose);
    }
}
