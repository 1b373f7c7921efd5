//! Emission–absorption quadrature along a ray.
//!
//! This is the single compositing routine used by both the synthetic oracle
//! and the learned field, so identical `(σ, c, δ)` inputs give identical
//! colors regardless of who produced them.

use rand::Rng;

use crate::camera::Ray;
use crate::geometry::Vec3;

/// Samples along one ray. `deltas[i] = t[i+1] - t[i]`, and the last delta
/// runs to the far bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySampleSet {
    pub t_values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub points: Vec<Vec3>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl RaySampleSet {
    fn from_t(ray: &Ray, t_values: Vec<f64>, far: f64) -> Self {
        let n = t_values.len();
        let mut deltas = Vec::with_capacity(n);
        for i in 0..n {
            let next = if i + 1 < n { t_values[i + 1] } else { far };
            deltas.push(next - t_values[i]);
        }
        let points = t_values.iter().map(|&t| ray.at(t)).collect();
        Self {
            t_values,
            deltas,
            points,
            sigmas: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }
}

/// One uniformly jittered sample in each of `n` equal strata of `[near, far]`.
pub fn sample_stratified<R: Rng + ?Sized>(ray: &Ray, near: f64, far: f64, n: usize, rng: &mut R) -> RaySampleSet {
    let mut t = Vec::with_capacity(n);
    stratified_t_into(near, far, n, Some(rng), &mut t);
    RaySampleSet::from_t(ray, t, far)
}

/// Stratum midpoints (no jitter): the deterministic member of the
/// stratified family.
pub fn sample_midpoints(ray: &Ray, near: f64, far: f64, n: usize) -> RaySampleSet {
    let mut t = Vec::with_capacity(n);
    stratified_t_into::<rand_chacha::ChaCha8Rng>(near, far, n, None, &mut t);
    RaySampleSet::from_t(ray, t, far)
}

/// Appends `n` stratified depths to `out`; midpoints when `rng` is `None`.
pub(crate) fn stratified_t_into<R: Rng + ?Sized>(
    near: f64,
    far: f64,
    n: usize,
    rng: Option<&mut R>,
    out: &mut Vec<f64>,
) {
    let step = (far - near) / n as f64;
    match rng {
        Some(rng) => {
            for i in 0..n {
                let u: f64 = rng.random();
                out.push(near + (i as f64 + u) * step);
            }
        }
        None => {
            for i in 0..n {
                out.push(near + (i as f64 + 0.5) * step);
            }
        }
    }
}

/// Writes `deltas` for depths `t` whose last interval ends at `far`.
pub(crate) fn deltas_into(t: &[f64], far: f64, out: &mut Vec<f64>) {
    for i in 0..t.len() {
        let next = if i + 1 < t.len() { t[i + 1] } else { far };
        out.push(next - t[i]);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    pub weights: Vec<f64>,
    /// `T_i` before each sample; `transmittance[0] = 1`.
    pub transmittance: Vec<f64>,
    pub transmittance_final: f64,
}

/// `α_i = 1 − exp(−σ_i δ_i)`, `T_{i+1} = T_i (1 − α_i)`, `w_i = T_i α_i`,
/// `color = Σ w_i c_i + T_final · background`.
pub fn composite(sigmas: &[f64], colors: &[[f64; 3]], deltas: &[f64], background: [f64; 3]) -> Composite {
    let n = sigmas.len();
    debug_assert_eq!(colors.len(), n);
    debug_assert_eq!(deltas.len(), n);
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut t = 1.0f64;
    let mut color = [0.0; 3];
    for i in 0..n {
        let optical = sigmas[i] * deltas[i];
        let alpha = -(-optical).exp_m1();
        let w = t * alpha;
        transmittance.push(t);
        weights.push(w);
        for c in 0..3 {
            color[c] += w * colors[i][c];
        }
        t *= (-optical).exp();
    }
    for c in 0..3 {
        color[c] += t * background[c];
    }
    Composite {
        color,
        weights,
        transmittance,
        transmittance_final: t,
    }
}

/// Colour only, with no allocation; same arithmetic as [`composite`].
#[inline]
pub(crate) fn composite_color(sigmas: &[f64], colors: &[[f64; 3]], deltas: &[f64], background: [f64; 3]) -> [f64; 3] {
    let mut t = 1.0f64;
    let mut color = [0.0; 3];
    for i in 0..sigmas.len() {
        let optical = sigmas[i] * deltas[i];
        let w = t * -(-optical).exp_m1();
        for c in 0..3 {
            color[c] += w * colors[i][c];
        }
        t *= (-optical).exp();
    }
    for c in 0..3 {
        color[c] += t * background[c];
    }
    color
}

pub fn volume_render(samples: &RaySampleSet, background: [f64; 3]) -> Composite {
    composite(&samples.sigmas, &samples.colors, &samples.deltas, background)
}

/// Reverse pass of [`composite`]: given `∂L/∂color`, writes `∂L/∂σ_i` and
/// `∂L/∂c_i`. Background is a constant.
pub fn composite_backward(
    colors: &[[f64; 3]],
    deltas: &[f64],
    forward: &Composite,
    background: [f64; 3],
    grad_color: [f64; 3],
    grad_sigma: &mut [f64],
    grad_colors: &mut [[f64; 3]],
) {
    let n = colors.len();
    let proj = |c: &[f64; 3]| c[0] * grad_color[0] + c[1] * grad_color[1] + c[2] * grad_color[2];
    // suffix = Σ_{j>i} w_j (c_j·g) + T_final (bg·g)
    let mut suffix = forward.transmittance_final * proj(&background);
    for i in (0..n).rev() {
        let w = forward.weights[i];
        let ci = proj(&colors[i]);
        let t_next = forward.transmittance[i] - w;
        grad_sigma[i] = deltas[i] * (t_next * ci - suffix);
        for c in 0..3 {
            grad_colors[i][c] = w * grad_color[c];
        }
        suffix += w * ci;
    }
}
