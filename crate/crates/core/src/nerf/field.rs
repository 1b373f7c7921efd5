//! Positional-encoded MLP radiance field with a hand-written reverse pass.
//!
//! Parameter layout (flat `Vec<f64>`): for each layer in order — the
//! `hidden_layers` ReLU layers, then the 4-wide head — the weight matrix
//! stored row-major as `fan_in × fan_out` followed by the `fan_out` biases.
//! Head column 0 is the raw density (softplus), columns 1..4 the raw color
//! (sigmoid).

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoding::{encode_into, encoded_dim};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::linalg::{accumulate_column_sums, add_row_bias, gemm};
use crate::rng;

pub const HEAD_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldArch {
    pub encoding_levels: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
}

impl Default for FieldArch {
    fn default() -> Self {
        Self {
            encoding_levels: 6,
            hidden_width: 64,
            hidden_layers: 3,
        }
    }
}

impl FieldArch {
    pub fn input_dim(&self) -> usize {
        encoded_dim(self.encoding_levels)
    }

    /// `(fan_in, fan_out)` of every layer, head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, HEAD_WIDTH));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::validation("hidden_width", "must be positive"));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    arch: FieldArch,
    bounds: Aabb,
    background: [f64; 3],
    params: Vec<f64>,
}

/// Forward state for a batch of points, kept for the reverse pass.
#[derive(Debug, Default, Clone)]
pub struct Activations {
    n: usize,
    /// `layers[0]` is the encoded input; `layers[l + 1]` the output of hidden
    /// layer `l`.
    layers: Vec<Vec<f64>>,
    head: Vec<f64>,
}

impl Activations {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn sigma(&self, i: usize) -> f64 {
        softplus(self.head[i * HEAD_WIDTH])
    }

    #[inline]
    pub fn color(&self, i: usize) -> [f64; 3] {
        let h = &self.head[i * HEAD_WIDTH + 1..i * HEAD_WIDTH + 4];
        [sigmoid(h[0]), sigmoid(h[1]), sigmoid(h[2])]
    }
}

/// Scratch buffers for [`RadianceField::backward`].
#[derive(Debug, Default, Clone)]
pub struct BackwardScratch {
    d_head: Vec<f64>,
    d_a: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldMeta {
    arch: FieldArch,
    bounds: Aabb,
    background: [f64; 3],
}

const CHECKPOINT_KIND: &str = "radiance_field";

impl RadianceField {
    /// Field with every parameter zero: `σ = ln 2`, `c = (½, ½, ½)` everywhere.
    pub fn zeros(arch: FieldArch, bounds: Aabb, background: [f64; 3]) -> Result<Self> {
        arch.validate()?;
        if !bounds.is_valid() {
            return Err(Error::validation("bounds", "min must not exceed max"));
        }
        Ok(Self {
            arch,
            bounds,
            background,
            params: vec![0.0; arch.param_count()],
        })
    }

    /// He-normal hidden weights, variance-1/fan_in head weights, zero biases.
    pub fn init(arch: FieldArch, bounds: Aabb, background: [f64; 3], seed: u64) -> Result<Self> {
        let mut field = Self::zeros(arch, bounds, background)?;
        let mut r = rng::stream(seed, &[rng::tag("field-init")]);
        let shapes = arch.layer_shapes();
        let last = shapes.len() - 1;
        let mut off = 0;
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let gain = if l == last { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
            for w in &mut field.params[off..off + fan_in * fan_out] {
                *w = normal.sample(&mut r);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(field)
    }

    pub fn arch(&self) -> &FieldArch {
        &self.arch
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn background(&self) -> [f64; 3] {
        self.background
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Density and color at one point (clamped into the bounds).
    pub fn query(&self, point: Vec3) -> (f64, [f64; 3]) {
        let mut act = Activations::default();
        self.forward(&[point], &mut act);
        (act.sigma(0), act.color(0))
    }

    /// Evaluates the network on `points`, leaving everything the reverse
    /// pass needs in `act`. Buffers are reused across calls.
    pub fn forward(&self, points: &[Vec3], act: &mut Activations) {
        let n = points.len();
        let shapes = self.arch.layer_shapes();
        act.n = n;
        act.layers.resize_with(shapes.len(), Vec::new);
        let e = self.arch.input_dim();
        let input = &mut act.layers[0];
        input.clear();
        input.resize(n * e, 0.0);
        for (p, row) in points.iter().zip(input.chunks_exact_mut(e)) {
            encode_into(self.bounds.normalize_point(*p), self.arch.encoding_levels, row);
        }
        let mut off = 0;
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let is_head = l + 1 == shapes.len();
            let mut out = if is_head {
                std::mem::take(&mut act.head)
            } else {
                std::mem::take(&mut act.layers[l + 1])
            };
            out.clear();
            out.resize(n * fan_out, 0.0);
            gemm(n, fan_in, fan_out, &act.layers[l], false, w, false, 0.0, &mut out);
            add_row_bias(&mut out, b);
            if is_head {
                act.head = out;
            } else {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                act.layers[l + 1] = out;
            }
        }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂σ_i` and `∂L/∂c_i` for the
    /// batch held in `act`.
    pub fn backward(
        &self,
        act: &Activations,
        d_sigma: &[f64],
        d_color: &[[f64; 3]],
        grad: &mut [f64],
        scratch: &mut BackwardScratch,
    ) {
        let n = act.n;
        assert_eq!(d_sigma.len(), n);
        assert_eq!(d_color.len(), n);
        assert_eq!(grad.len(), self.params.len());
        let shapes = self.arch.layer_shapes();

        let d_head = &mut scratch.d_head;
        d_head.clear();
        d_head.resize(n * HEAD_WIDTH, 0.0);
        for i in 0..n {
            let h = &act.head[i * HEAD_WIDTH..(i + 1) * HEAD_WIDTH];
            let d = &mut d_head[i * HEAD_WIDTH..(i + 1) * HEAD_WIDTH];
            d[0] = d_sigma[i] * sigmoid(h[0]);
            for c in 0..3 {
                let s = sigmoid(h[1 + c]);
                d[1 + c] = d_color[i][c] * s * (1.0 - s);
            }
        }

        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(fi, fo) in &shapes {
            offsets.push(off);
            off += fi * fo + fo;
        }

        // `upstream` holds ∂L/∂(pre-activation) of the current layer.
        let mut upstream = std::mem::take(d_head);
        let mut spare = std::mem::take(&mut scratch.d_a);
        for l in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[l];
            let off = offsets[l];
            let input = &act.layers[l];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                gemm(fan_in, n, fan_out, input, true, &upstream, false, 1.0, gw);
                accumulate_column_sums(&upstream, gb);
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            spare.clear();
            spare.resize(n * fan_in, 0.0);
            gemm(n, fan_out, fan_in, &upstream, false, w, true, 0.0, &mut spare);
            // ReLU mask from the stored activation of the layer below.
            for (d, a) in spare.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            std::mem::swap(&mut upstream, &mut spare);
        }
        scratch.d_head = upstream;
        scratch.d_a = spare;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = FieldMeta {
            arch: self.arch,
            bounds: self.bounds,
            background: self.background,
        };
        checkpoint::save(path, CHECKPOINT_KIND, &meta, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, params): (FieldMeta, Vec<f64>) = checkpoint::load(path, CHECKPOINT_KIND)?;
        let mut field = Self::zeros(meta.arch, meta.bounds, meta.background)?;
        if params.len() != field.params.len() {
            return Err(crate::error::LoadError::CorruptCheckpoint {
                path: path.to_path_buf(),
                reason: format!("{} parameters for an architecture needing {}", params.len(), field.params.len()),
            }
            .into());
        }
        field.params = params;
        Ok(field)
    }
}
