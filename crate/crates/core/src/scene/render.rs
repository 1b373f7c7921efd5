use rayon::prelude::*;

use super::{density_color_among, Primitive, SceneSpec};
use crate::camera::{pixel_ray_unchecked, Intrinsics, Pose, Ray};
use crate::image::RgbImage;
use crate::nerf::quadrature::{composite_color, deltas_into, stratified_t_into};

/// Ground-truth color of one ray: `n_samples` stratum midpoints over the
/// ray's passage through the scene bounds, composited onto the background.
pub fn render_ground_truth_ray(scene: &SceneSpec, ray: &Ray, n_samples: usize) -> [f64; 3] {
    let Some((near, far)) = scene.bounds.ray_interval(ray.origin, ray.direction, 0.0, f64::INFINITY) else {
        return scene.background;
    };
    // Only primitives whose support the ray passes through can contribute.
    let hits: Vec<&Primitive> = scene
        .primitives
        .iter()
        .filter(|p| p.support().ray_interval(ray.origin, ray.direction, near, far).is_some())
        .collect();
    if hits.is_empty() {
        return scene.background;
    }
    let mut t = Vec::with_capacity(n_samples);
    stratified_t_into::<rand_chacha::ChaCha8Rng>(near, far, n_samples, None, &mut t);
    let mut deltas = Vec::with_capacity(n_samples);
    deltas_into(&t, far, &mut deltas);
    let mut sigmas = Vec::with_capacity(n_samples);
    let mut colors = Vec::with_capacity(n_samples);
    for &ti in &t {
        let (s, c) = density_color_among(hits.iter().copied(), ray.at(ti));
        sigmas.push(s);
        colors.push(c);
    }
    composite_color(&sigmas, &colors, &deltas, scene.background)
}

/// Renders the oracle view from `pose`. Pure function of its inputs; rows
/// are evaluated in parallel.
pub fn render_ground_truth(scene: &SceneSpec, pose: &Pose, intr: &Intrinsics, n_samples: usize) -> RgbImage {
    assert!(n_samples >= 2, "ground truth needs at least 2 samples per ray");
    let (w, h) = (intr.width(), intr.height());
    let mut data = vec![0.0; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(py, row)| {
        for px in 0..w {
            let ray = pixel_ray_unchecked(intr, pose, px, py);
            row[px * 3..px * 3 + 3].copy_from_slice(&render_ground_truth_ray(scene, &ray, n_samples));
        }
    });
    RgbImage::from_raw(w, h, data).expect("buffer sized from intrinsics")
}
