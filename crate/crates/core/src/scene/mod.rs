//! Synthetic ground-truth environment.
//!
//! The scene is an emission–absorption volume built from soft-edged
//! spheres and boxes. Rendering it uses the same quadrature as the learned
//! field, so the field's target is exactly representable.

mod capture;
mod render;
mod trajectory;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::geometry::{self, Aabb, Vec3};

pub use capture::{capture, DegradationSpec, PoseJitter, Region};
pub use render::{render_ground_truth, render_ground_truth_ray};
pub use trajectory::{rectangular_trajectory, RectSpec};

/// One volumetric primitive. Density is constant inside the shape and falls
/// linearly to zero over `edge_softness` meters outside its surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere {
        center: Vec3,
        radius: f64,
        density: f64,
        albedo: [f64; 3],
        #[serde(default)]
        edge_softness: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
        density: f64,
        albedo: [f64; 3],
        #[serde(default)]
        edge_softness: f64,
    },
}

impl Primitive {
    pub fn density(&self) -> f64 {
        match self {
            Primitive::Sphere { density, .. } | Primitive::Box { density, .. } => *density,
        }
    }

    pub fn albedo(&self) -> [f64; 3] {
        match self {
            Primitive::Sphere { albedo, .. } | Primitive::Box { albedo, .. } => *albedo,
        }
    }

    pub fn edge_softness(&self) -> f64 {
        match self {
            Primitive::Sphere { edge_softness, .. } | Primitive::Box { edge_softness, .. } => *edge_softness,
        }
    }

    /// Euclidean signed distance to the surface, negative inside.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius, .. } => geometry::distance(p, *center) - radius,
            Primitive::Box {
                center, half_extents, ..
            } => {
                let q: Vec3 = std::array::from_fn(|i| (p[i] - center[i]).abs() - half_extents[i]);
                let outside = geometry::norm(std::array::from_fn(|i| q[i].max(0.0)));
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
        }
    }

    pub fn sigma_at(&self, p: Vec3) -> f64 {
        let d = self.signed_distance(p);
        let soft = self.edge_softness();
        if d <= 0.0 {
            self.density()
        } else if d < soft {
            self.density() * (1.0 - d / soft)
        } else {
            0.0
        }
    }

    /// Bounds of the shape itself, without the soft shell.
    pub fn core_bounds(&self) -> Aabb {
        match self {
            Primitive::Sphere { center, radius, .. } => Aabb::new(
                geometry::sub(*center, [*radius; 3]),
                geometry::add(*center, [*radius; 3]),
            ),
            Primitive::Box {
                center, half_extents, ..
            } => Aabb::new(geometry::sub(*center, *half_extents), geometry::add(*center, *half_extents)),
        }
    }

    /// Region where `sigma_at` can be nonzero.
    pub fn support(&self) -> Aabb {
        self.core_bounds().grown(self.edge_softness())
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let field = |name: &str| format!("primitives[{idx}].{name}");
        let d = self.density();
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::validation(field("density"), format!("{d} must be finite and ≥ 0")));
        }
        if !self.albedo().iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::validation(field("albedo"), "channels must lie in [0, 1]"));
        }
        let s = self.edge_softness();
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::validation(field("edge_softness"), "must be finite and ≥ 0"));
        }
        match self {
            Primitive::Sphere { radius, .. } if !(*radius > 0.0) => {
                Err(Error::validation(field("radius"), "must be positive"))
            }
            Primitive::Box { half_extents, .. } if !half_extents.iter().all(|h| *h > 0.0) => {
                Err(Error::validation(field("half_extents"), "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub background: [f64; 3],
    pub bounds: Aabb,
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn new(background: [f64; 3], bounds: Aabb, primitives: Vec<Primitive>) -> Result<Self> {
        let scene = Self {
            background,
            bounds,
            primitives,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::validation("background", "channels must lie in [0, 1]"));
        }
        if !self.bounds.is_valid() {
            return Err(Error::validation("bounds", "min must not exceed max"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate(i)?;
            if !self.bounds.contains_box(&p.core_bounds()) {
                return Err(Error::validation(
                    format!("primitives[{i}]"),
                    "shape extends outside the scene bounds",
                ));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(LoadError::MissingManifest(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Density and albedo at `point`. Overlaps resolve to the primitive with
    /// the largest density there (earliest on ties). Empty space yields
    /// `(0, [0, 0, 0])`.
    pub fn density_color_at(&self, point: Vec3) -> (f64, [f64; 3]) {
        density_color_among(self.primitives.iter(), point)
    }
}

pub(crate) fn density_color_among<'a>(prims: impl Iterator<Item = &'a Primitive>, point: Vec3) -> (f64, [f64; 3]) {
    let mut best = (0.0, [0.0; 3]);
    for p in prims {
        let s = p.sigma_at(point);
        if s > best.0 {
            best = (s, p.albedo());
        }
    }
    best
}
