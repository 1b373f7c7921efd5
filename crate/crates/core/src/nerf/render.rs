use rand::Rng;
use rayon::prelude::*;

use super::field::{Activations, BackwardScratch, RadianceField};
use super::quadrature::{composite, composite_backward, composite_color, deltas_into, stratified_t_into};
use crate::camera::{pixel_ray_unchecked, Intrinsics, Pose, Ray};
use crate::geometry::{Aabb, Vec3};
use crate::image::RgbImage;
use crate::rng;

/// How depths are placed inside each stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Stratum midpoints; fully deterministic without a seed.
    Midpoint,
    /// One uniform draw per stratum from a per-pixel stream of `seed`.
    Stratified { seed: u64 },
}

/// Depth range of `ray` inside `bounds`, clipped to `[near, far]`.
pub fn ray_span(bounds: &Aabb, ray: &Ray, near: f64, far: f64) -> Option<(f64, f64)> {
    bounds
        .ray_interval(ray.origin, ray.direction, near, far)
        .filter(|(a, b)| b > a)
}

/// One ray and its sample depths. Empty `t` means the ray misses the
/// field's bounds and sees only the background.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRay {
    pub ray: Ray,
    pub t: Vec<f64>,
    pub far: f64,
}

impl SampledRay {
    pub fn new<R: Rng + ?Sized>(
        bounds: &Aabb,
        ray: Ray,
        near: f64,
        far: f64,
        n_samples: usize,
        rng: Option<&mut R>,
    ) -> Self {
        match ray_span(bounds, &ray, near, far) {
            Some((a, b)) => {
                let mut t = Vec::with_capacity(n_samples);
                stratified_t_into(a, b, n_samples, rng, &mut t);
                Self { ray, t, far: b }
            }
            None => Self { ray, t: Vec::new(), far },
        }
    }
}

/// Flattened sample points of a group of rays plus the reused buffers for
/// one forward (and optionally reverse) pass.
#[derive(Default)]
pub(crate) struct RayWorkspace {
    points: Vec<Vec3>,
    deltas: Vec<f64>,
    sigmas: Vec<f64>,
    colors: Vec<[f64; 3]>,
    d_sigma: Vec<f64>,
    d_color: Vec<[f64; 3]>,
    act: Activations,
    scratch: BackwardScratch,
}

impl RayWorkspace {
    fn load(&mut self, field: &RadianceField, rays: &[SampledRay]) {
        self.points.clear();
        self.deltas.clear();
        for r in rays {
            for &t in &r.t {
                self.points.push(r.ray.at(t));
            }
            deltas_into(&r.t, r.far, &mut self.deltas);
        }
        field.forward(&self.points, &mut self.act);
        let n = self.points.len();
        self.sigmas.clear();
        self.colors.clear();
        for i in 0..n {
            self.sigmas.push(self.act.sigma(i));
            self.colors.push(self.act.color(i));
        }
    }

    /// Rendered colors of `rays`.
    pub(crate) fn render(&mut self, field: &RadianceField, rays: &[SampledRay], out: &mut Vec<[f64; 3]>) {
        self.load(field, rays);
        let bg = field.background();
        let mut off = 0;
        for r in rays {
            let n = r.t.len();
            let s = off..off + n;
            out.push(composite_color(&self.sigmas[s.clone()], &self.colors[s.clone()], &self.deltas[s], bg));
            off += n;
        }
    }

    /// Adds `Σ_r |C_r − target_r|²` to the return value and its parameter
    /// gradient, multiplied by `scale`, to `grad`.
    pub(crate) fn loss_and_grad(
        &mut self,
        field: &RadianceField,
        rays: &[SampledRay],
        targets: &[[f64; 3]],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        self.load(field, rays);
        let bg = field.background();
        let total = self.points.len();
        self.d_sigma.clear();
        self.d_sigma.resize(total, 0.0);
        self.d_color.clear();
        self.d_color.resize(total, [0.0; 3]);
        let mut loss = 0.0;
        let mut off = 0;
        for (r, target) in rays.iter().zip(targets) {
            let n = r.t.len();
            let s = off..off + n;
            let comp = composite(&self.sigmas[s.clone()], &self.colors[s.clone()], &self.deltas[s.clone()], bg);
            let mut g = [0.0; 3];
            for c in 0..3 {
                let e = comp.color[c] - target[c];
                loss += e * e;
                g[c] = 2.0 * e * scale;
            }
            composite_backward(
                &self.colors[s.clone()],
                &self.deltas[s.clone()],
                &comp,
                bg,
                g,
                &mut self.d_sigma[s.clone()],
                &mut self.d_color[s],
            );
            off += n;
        }
        field.backward(&self.act, &self.d_sigma, &self.d_color, grad, &mut self.scratch);
        loss * scale
    }
}

/// Mean squared color error `1/(3R) Σ_r |C_r − target_r|²` over a batch.
pub fn batch_loss(field: &RadianceField, rays: &[SampledRay], targets: &[[f64; 3]]) -> f64 {
    assert_eq!(rays.len(), targets.len());
    let mut ws = RayWorkspace::default();
    let mut colors = Vec::with_capacity(rays.len());
    ws.render(field, rays, &mut colors);
    let sum: f64 = colors
        .iter()
        .zip(targets)
        .map(|(c, t)| (0..3).map(|k| (c[k] - t[k]).powi(2)).sum::<f64>())
        .sum();
    sum / (3 * rays.len()) as f64
}

/// Rays per gradient work unit. Partial gradients are summed in chunk order,
/// so the result does not depend on the worker count.
pub(crate) const GRAD_CHUNK: usize = 64;

/// [`batch_loss`] and its gradient with respect to every field parameter.
pub fn batch_loss_and_grad(field: &RadianceField, rays: &[SampledRay], targets: &[[f64; 3]]) -> (f64, Vec<f64>) {
    assert_eq!(rays.len(), targets.len());
    let scale = 1.0 / (3 * rays.len().max(1)) as f64;
    let p = field.param_count();
    let partials: Vec<(f64, Vec<f64>)> = rays
        .par_chunks(GRAD_CHUNK)
        .zip(targets.par_chunks(GRAD_CHUNK))
        .map_init(RayWorkspace::default, |ws, (r, t)| {
            let mut g = vec![0.0; p];
            let l = ws.loss_and_grad(field, r, t, scale, &mut g);
            (l, g)
        })
        .collect();
    let mut grad = vec![0.0; p];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss, grad)
}

/// Renders `field` from `pose`. Pure function of its arguments.
pub fn render_view(
    field: &RadianceField,
    pose: &Pose,
    intr: &Intrinsics,
    samples_per_ray: usize,
    near: f64,
    far: f64,
    sampling: Sampling,
) -> RgbImage {
    let (w, h) = (intr.width(), intr.height());
    let bounds = *field.bounds();
    let mut data = vec![0.0; w * h * 3];
    data.par_chunks_mut(w * 3)
        .enumerate()
        .for_each_init(RayWorkspace::default, |ws, (py, row)| {
            let rays: Vec<SampledRay> = (0..w)
                .map(|px| {
                    let ray = pixel_ray_unchecked(intr, pose, px, py);
                    match sampling {
                        Sampling::Midpoint => {
                            SampledRay::new::<rand_chacha::ChaCha8Rng>(&bounds, ray, near, far, samples_per_ray, None)
                        }
                        Sampling::Stratified { seed } => {
                            let mut r = rng::stream(seed, &[px as u64, py as u64]);
                            SampledRay::new(&bounds, ray, near, far, samples_per_ray, Some(&mut r))
                        }
                    }
                })
                .collect();
            let mut colors = Vec::with_capacity(w);
            ws.render(field, &rays, &mut colors);
            for (px, c) in colors.iter().enumerate() {
                row[px * 3..px * 3 + 3].copy_from_slice(c);
            }
        });
    RgbImage::from_raw(w, h, data).expect("buffer sized from intrinsics")
}
