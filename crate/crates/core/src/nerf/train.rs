use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::{FieldArch, RadianceField};
use super::render::{batch_loss_and_grad, SampledRay};
use crate::camera::pixel_ray_unchecked;
use crate::dataset::CaptureDataset;
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::optim::Adam;
use crate::rng;

/// Iterations averaged into each loss-history entry.
pub const LOSS_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: FieldArch,
    pub iterations: usize,
    pub rays_per_batch: usize,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
    pub learning_rate: f64,
    /// Learning rate at the last iteration as a fraction of the initial one
    /// (exponential decay); 1 keeps it constant.
    #[serde(default = "one")]
    pub final_lr_fraction: f64,
    pub adam_betas: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: FieldArch::default(),
            iterations: 2000,
            rays_per_batch: 256,
            samples_per_ray: 32,
            near: 0.05,
            far: 20.0,
            learning_rate: 5e-4,
            final_lr_fraction: 1.0,
            adam_betas: (0.9, 0.999),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_batch == 0 {
            return Err(Error::validation("rays_per_batch", "must be at least 1"));
        }
        if self.samples_per_ray == 0 {
            return Err(Error::validation("samples_per_ray", "must be at least 1"));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::validation("near/far", "need 0 < near < far"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be positive"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::validation("final_lr_fraction", "must be in (0, 1]"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::validation("adam_betas", "each must be in [0, 1)"));
        }
        Ok(())
    }

    fn lr_at(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.learning_rate;
        }
        let frac = iteration as f64 / (self.iterations - 1) as f64;
        self.learning_rate * self.final_lr_fraction.powf(frac)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: RadianceField,
    /// Mean batch loss of each consecutive block of [`LOSS_WINDOW`]
    /// iterations (the last block may be shorter).
    pub loss_history: Vec<f64>,
}

/// Seed of the ray batch drawn at `iteration`.
pub fn batch_seed(seed: u64, iteration: usize) -> u64 {
    rng::derive(seed, &[rng::tag("nerf-batch"), iteration as u64])
}

/// Draws one training batch: pixels uniform over every dataset pixel,
/// stratified depths within the field bounds.
pub fn sample_batch(
    dataset: &CaptureDataset,
    bounds: &Aabb,
    cfg: &TrainConfig,
    batch_seed: u64,
) -> (Vec<SampledRay>, Vec<[f64; 3]>) {
    let intr = dataset.intrinsics();
    let per_frame = intr.pixel_count();
    let total = per_frame * dataset.len();
    let mut r = rng::stream(batch_seed, &[]);
    let mut rays = Vec::with_capacity(cfg.rays_per_batch);
    let mut targets = Vec::with_capacity(cfg.rays_per_batch);
    for _ in 0..cfg.rays_per_batch {
        let k = r.random_range(0..total);
        let frame = &dataset.frames()[k / per_frame];
        let pix = k % per_frame;
        let (px, py) = (pix % intr.width(), pix / intr.width());
        let ray = pixel_ray_unchecked(intr, &frame.pose, px, py);
        rays.push(SampledRay::new(bounds, ray, cfg.near, cfg.far, cfg.samples_per_ray, Some(&mut r)));
        targets.push(frame.image.pixel(px, py));
    }
    (rays, targets)
}

/// Fits a field to `dataset` by Adam on the mean squared photometric error.
/// Deterministic given `cfg.seed`, independent of the worker count.
pub fn train(dataset: &CaptureDataset, bounds: Aabb, background: [f64; 3], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("dataset", "no frames to train on"));
    }
    let init_seed = rng::derive(cfg.seed, &[rng::tag("nerf-init")]);
    let mut field = RadianceField::init(cfg.arch, bounds, background, init_seed)?;
    let mut adam = Adam::new(field.param_count(), cfg.adam_betas.0, cfg.adam_betas.1, 1e-8);
    let mut history = Vec::with_capacity(cfg.iterations.div_ceil(LOSS_WINDOW));
    let mut window_sum = 0.0;
    let mut window_len = 0;
    for it in 0..cfg.iterations {
        let bs = batch_seed(cfg.seed, it);
        let (rays, targets) = sample_batch(dataset, &bounds, cfg, bs);
        let (loss, grad) = batch_loss_and_grad(&field, &rays, &targets);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                batch_seed: bs,
            });
        }
        adam.update(field.params_mut(), &grad, cfg.lr_at(it));
        window_sum += loss;
        window_len += 1;
        if window_len == LOSS_WINDOW {
            history.push(window_sum / window_len as f64);
            window_sum = 0.0;
            window_len = 0;
        }
    }
    if window_len > 0 {
        history.push(window_sum / window_len as f64);
    }
    Ok(TrainOutcome {
        field,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_endpoints() {
        let cfg = TrainConfig {
            iterations: 11,
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert!((cfg.lr_at(10) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at(5) - 1e-3 * 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = TrainConfig::default();
        cfg.near = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
        cfg = TrainConfig {
            rays_per_batch: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
