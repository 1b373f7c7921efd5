use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::error::{Error, LoadError, Result};
use crate::evaluator::{EvaluatorShape, EvaluatorTrainConfig};
use crate::geometry::Vec3;
use crate::nerf::TrainConfig;
use crate::planner::GridSpec;
use crate::scene::{DegradationSpec, RectSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub rect: RectSpec,
    pub frames: usize,
    /// Point every first-pass camera, candidate and evaluation pose faces.
    pub target: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondPassConfig {
    /// Apply the first-pass degradation (where its region matches) to the
    /// second pass too. Off by default: re-captures are clean.
    #[serde(default)]
    pub reuse_degradation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorDataConfig {
    /// Lattice of render poses; denser than the planner grid.
    pub lattice: GridSpec,
    /// Extra poses per lattice point, offset by isotropic Gaussian noise.
    pub jitter_copies: usize,
    pub jitter_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorConfig {
    pub shape: EvaluatorShape,
    pub train: EvaluatorTrainConfig,
    pub test_fraction: f64,
    pub dataset: EvaluatorDataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub grid: GridSpec,
    pub tau: f64,
    pub jump_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub count: usize,
    /// Horizontal distance from the target, meters.
    pub radius: (f64, f64),
    /// Absolute height, meters.
    pub height: (f64, f64),
    /// Minimum distance to any trajectory, evaluator-data or candidate
    /// position.
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub point_cloud_resolution: usize,
    pub sigma_threshold: f64,
}

/// Full mission description. Field and evaluator seeds are mixed with the
/// top-level `seed`, so changing `seed` alone reseeds every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    /// Scene file; relative paths resolve against the config file's folder.
    pub scene: PathBuf,
    pub camera: CameraConfig,
    /// Samples per ray for oracle renders.
    pub oracle_samples: usize,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub degradation: DegradationSpec,
    #[serde(default)]
    pub second_pass: SecondPassConfig,
    pub field_1: TrainConfig,
    pub field_2: TrainConfig,
    /// Samples per ray when rendering the learned fields.
    pub render_samples: usize,
    pub evaluator: EvaluatorConfig,
    pub planner: PlannerConfig,
    pub evaluation: EvaluationConfig,
    pub report: ReportConfig,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl MissionConfig {
    /// Parses and validates `path`, resolving relative file references.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(LoadError::MissingManifest(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: MissionConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.scene.is_relative() {
            cfg.scene = base.join(&cfg.scene);
        }
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base.join(out));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scene.is_file() {
            return Err(Error::validation(
                "scene",
                format!("file {} does not exist", self.scene.display()),
            ));
        }
        self.intrinsics()?;
        if self.oracle_samples < 2 {
            return Err(Error::validation("oracle_samples", "must be at least 2"));
        }
        if self.render_samples == 0 {
            return Err(Error::validation("render_samples", "must be at least 1"));
        }
        if self.trajectory.frames < 4 {
            return Err(Error::validation("trajectory.frames", "must be at least 4"));
        }
        self.degradation.validate()?;
        self.field_1.validate()?;
        self.field_2.validate()?;
        self.evaluator.shape.validate()?;
        if !(0.0 < self.evaluator.test_fraction && self.evaluator.test_fraction < 1.0) {
            return Err(Error::validation("evaluator.test_fraction", "must be in (0, 1)"));
        }
        self.evaluator.dataset.lattice.validate()?;
        if !(self.evaluator.dataset.jitter_sigma >= 0.0) {
            return Err(Error::validation("evaluator.dataset.jitter_sigma", "must be ≥ 0"));
        }
        self.planner.grid.validate()?;
        if !(self.planner.tau > 0.0 && self.planner.tau < 1.0) {
            return Err(Error::validation("planner.tau", "must be in (0, 1)"));
        }
        if !(self.planner.jump_threshold >= 0.0) {
            return Err(Error::validation("planner.jump_threshold", "must be ≥ 0"));
        }
        let ev = &self.evaluation;
        if ev.count == 0 {
            return Err(Error::validation("evaluation.count", "must be at least 1"));
        }
        if !(0.0 <= ev.radius.0 && ev.radius.0 <= ev.radius.1) || !(ev.height.0 <= ev.height.1) {
            return Err(Error::validation("evaluation", "ranges must be ordered (min ≤ max)"));
        }
        if self.report.point_cloud_resolution < 2 {
            return Err(Error::validation("report.point_cloud_resolution", "must be at least 2"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::new(self.camera.width, self.camera.height, self.camera.fov_x_deg.to_radians())
    }
}
