//! Convolutional render-quality classifier with a hand-written reverse pass.
//!
//! Images are HWC row-major (the [`RgbImage`] layout). Parameters form one
//! flat vector, layer by layer: three 3×3 convolutions stored as
//! `(9·c_in) × c_out` matrices whose rows are ordered `(ky, kx, c_in)`,
//! followed by three fully connected layers stored `fan_in × fan_out`. Each
//! weight block is followed by its bias vector.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, LoadError, Result};
use crate::image::RgbImage;
use crate::linalg::{accumulate_column_sums, add_row_bias, gemm};
use crate::nerf::field::{sigmoid, softplus};
use crate::rng;

pub const CHANNELS: [usize; 4] = [3, 32, 64, 128];
pub const DROPOUT_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorShape {
    pub height: usize,
    pub width: usize,
    pub fc1: usize,
    pub fc2: usize,
}

impl EvaluatorShape {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("height", self.height), ("width", self.width)] {
            if v == 0 || v % 8 != 0 {
                return Err(Error::validation(
                    format!("input {name}"),
                    format!("{v} must be a positive multiple of 8"),
                ));
            }
        }
        if self.fc1 == 0 || self.fc2 == 0 {
            return Err(Error::validation("fc widths", "must be positive"));
        }
        Ok(())
    }

    pub fn flatten_dim(&self) -> usize {
        (self.height / 8) * (self.width / 8) * CHANNELS[3]
    }

    fn fc_dims(&self) -> [usize; 4] {
        [self.flatten_dim(), self.fc1, self.fc2, 1]
    }

    /// `(weights, biases)` offsets of the six layers.
    fn offsets(&self) -> [(usize, usize); 6] {
        let mut out = [(0, 0); 6];
        let mut off = 0;
        for l in 0..3 {
            let w = 9 * CHANNELS[l] * CHANNELS[l + 1];
            out[l] = (off, off + w);
            off += w + CHANNELS[l + 1];
        }
        let d = self.fc_dims();
        for l in 0..3 {
            let w = d[l] * d[l + 1];
            out[3 + l] = (off, off + w);
            off += w + d[l + 1];
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let d = self.fc_dims();
        (0..3)
            .map(|l| 9 * CHANNELS[l] * CHANNELS[l + 1] + CHANNELS[l + 1] + d[l] * d[l + 1] + d[l + 1])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorModel {
    shape: EvaluatorShape,
    params: Vec<f64>,
}

/// Inverted-dropout masks for one batch: each entry is 0 or `1/(1−rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub fc1: Vec<f64>,
    pub fc2: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(shape: &EvaluatorShape, batch: usize, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - DROPOUT_RATE);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random::<f64>() < DROPOUT_RATE { 0.0 } else { keep })
                .collect()
        };
        let fc1 = draw(batch * shape.fc1);
        let fc2 = draw(batch * shape.fc2);
        Self { fc1, fc2 }
    }
}

struct ConvTape {
    cols: Vec<f64>,
    /// Post-ReLU output, `B × h × w × c_out`.
    out: Vec<f64>,
    /// For each pooled value, the flat index into `out` it was taken from.
    argmax: Vec<usize>,
}

struct Tape {
    batch: usize,
    conv: Vec<ConvTape>,
    flat: Vec<f64>,
    /// Post-ReLU activations of fc1/fc2 before dropout.
    h1: Vec<f64>,
    h2: Vec<f64>,
    /// Dropout outputs fed into the next layer.
    d1: Vec<f64>,
    d2: Vec<f64>,
    logits: Vec<f64>,
}

/// Stable `−[y log σ(z) + (1−y) log(1−σ(z))]`.
#[inline]
fn bce_with_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

fn im2col(input: &[f64], b: usize, h: usize, w: usize, c: usize, cols: &mut Vec<f64>) {
    let k = 9 * c;
    cols.clear();
    cols.resize(b * h * w * k, 0.0);
    for n in 0..b {
        let img = &input[n * h * w * c..(n + 1) * h * w * c];
        for y in 0..h {
            for x in 0..w {
                let row = &mut cols[((n * h + y) * w + x) * k..((n * h + y) * w + x + 1) * k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (sy as usize * w + sx as usize) * c;
                        let dst = (ky * 3 + kx) * c;
                        row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], b: usize, h: usize, w: usize, c: usize, out: &mut Vec<f64>) {
    let k = 9 * c;
    out.clear();
    out.resize(b * h * w * c, 0.0);
    for n in 0..b {
        let img = &mut out[n * h * w * c..(n + 1) * h * w * c];
        for y in 0..h {
            for x in 0..w {
                let row = &cols[((n * h + y) * w + x) * k..((n * h + y) * w + x + 1) * k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (sy as usize * w + sx as usize) * c;
                        let src = (ky * 3 + kx) * c;
                        for ci in 0..c {
                            img[dst + ci] += row[src + ci];
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max pool; ties go to the first element in raster order.
fn max_pool(input: &[f64], b: usize, h: usize, w: usize, c: usize, out: &mut Vec<f64>, argmax: &mut Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    out.clear();
    argmax.clear();
    out.reserve(b * ph * pw * c);
    argmax.reserve(b * ph * pw * c);
    for n in 0..b {
        for y in 0..ph {
            for x in 0..pw {
                for ci in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((n * h + 2 * y + dy) * w + 2 * x + dx) * c + ci;
                        if input[idx] > best_v {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
    }
}

const CHECKPOINT_KIND: &str = "quality_evaluator";

impl EvaluatorModel {
    /// Every parameter zero: the output is `σ(0) = ½` for any input.
    pub fn zeros(shape: EvaluatorShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            params: vec![0.0; shape.param_count()],
        })
    }

    /// He-normal weights (`std = √(2/fan_in)`), zero biases.
    pub fn init(shape: EvaluatorShape, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        let mut r = rng::stream(seed, &[rng::tag("evaluator-init")]);
        let offsets = shape.offsets();
        let d = shape.fc_dims();
        for (l, &(w_off, b_off)) in offsets.iter().enumerate() {
            let fan_in = if l < 3 { 9 * CHANNELS[l] } else { d[l - 3] };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            for w in &mut model.params[w_off..b_off] {
                *w = normal.sample(&mut r);
            }
        }
        Ok(model)
    }

    pub fn shape(&self) -> &EvaluatorShape {
        &self.shape
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

    fn check_input(&self, image: &RgbImage) -> Result<()> {
        if image.width() != self.shape.width || image.height() != self.shape.height {
            return Err(Error::validation(
                "image",
                format!(
                    "{}×{} does not match the model input {}×{}",
                    image.width(),
                    image.height(),
                    self.shape.width,
                    self.shape.height
                ),
            ));
        }
        Ok(())
    }

    fn forward(&self, images: &[&RgbImage], masks: Option<&DropoutMasks>) -> Result<Tape> {
        let b = images.len();
        for im in images {
            self.check_input(im)?;
        }
        if let Some(m) = masks {
            if m.fc1.len() != b * self.shape.fc1 || m.fc2.len() != b * self.shape.fc2 {
                return Err(Error::validation("dropout masks", "sized for a different batch"));
            }
        }
        let offsets = self.shape.offsets();
        let (mut h, mut w) = (self.shape.height, self.shape.width);
        let mut input: Vec<f64> = Vec::with_capacity(b * h * w * 3);
        for im in images {
            input.extend_from_slice(im.data());
        }
        let mut conv = Vec::with_capacity(3);
        for l in 0..3 {
            let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
            let (w_off, b_off) = offsets[l];
            let mut cols = Vec::new();
            im2col(&input, b, h, w, cin, &mut cols);
            let mut out = vec![0.0; b * h * w * cout];
            gemm(b * h * w, 9 * cin, cout, &cols, false, &self.params[w_off..b_off], false, 0.0, &mut out);
            add_row_bias(&mut out, &self.params[b_off..b_off + cout]);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            let mut pooled = Vec::new();
            let mut argmax = Vec::new();
            max_pool(&out, b, h, w, cout, &mut pooled, &mut argmax);
            conv.push(ConvTape { cols, out, argmax });
            input = pooled;
            h /= 2;
            w /= 2;
        }
        let flat = input;
        let d = self.shape.fc_dims();
        let dense = |x: &[f64], l: usize| -> Vec<f64> {
            let (w_off, b_off) = offsets[3 + l];
            let mut y = vec![0.0; b * d[l + 1]];
            gemm(b, d[l], d[l + 1], x, false, &self.params[w_off..b_off], false, 0.0, &mut y);
            add_row_bias(&mut y, &self.params[b_off..b_off + d[l + 1]]);
            y
        };
        let dropout = |h: &[f64], mask: Option<&Vec<f64>>| -> Vec<f64> {
            match mask {
                Some(m) => h.iter().zip(m).map(|(a, k)| a * k).collect(),
                None => h.to_vec(),
            }
        };
        let mut h1 = dense(&flat, 0);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        let d1 = dropout(&h1, masks.map(|m| &m.fc1));
        let mut h2 = dense(&d1, 1);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        let d2 = dropout(&h2, masks.map(|m| &m.fc2));
        let logits = dense(&d2, 2);
        Ok(Tape {
            batch: b,
            conv,
            flat,
            h1,
            h2,
            d1,
            d2,
            logits,
        })
    }

    /// Inference-mode probability that `image` is a high-quality render.
    pub fn predict(&self, image: &RgbImage) -> Result<f64> {
        Ok(sigmoid(self.forward(&[image], None)?.logits[0]))
    }

    pub fn predict_batch(&self, images: &[&RgbImage]) -> Result<Vec<f64>> {
        Ok(self.forward(images, None)?.logits.into_iter().map(sigmoid).collect())
    }

    /// Training-mode probability with dropout masks drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(&self, image: &RgbImage, rng: &mut R) -> Result<f64> {
        let masks = DropoutMasks::sample(&self.shape, 1, rng);
        Ok(sigmoid(self.forward(&[image], Some(&masks))?.logits[0]))
    }

    /// Mean binary cross-entropy; `masks = None` evaluates in inference mode.
    pub fn loss(&self, images: &[&RgbImage], labels: &[f64], masks: Option<&DropoutMasks>) -> Result<f64> {
        check_labels(images.len(), labels)?;
        let tape = self.forward(images, masks)?;
        Ok(tape.logits.iter().zip(labels).map(|(&z, &y)| bce_with_logit(z, y)).sum::<f64>() / labels.len() as f64)
    }

    /// Mean binary cross-entropy and its gradient for every parameter.
    pub fn loss_and_grad(
        &self,
        images: &[&RgbImage],
        labels: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> Result<(f64, Vec<f64>)> {
        check_labels(images.len(), labels)?;
        let tape = self.forward(images, masks)?;
        let b = tape.batch;
        let inv_b = 1.0 / b as f64;
        let loss = tape.logits.iter().zip(labels).map(|(&z, &y)| bce_with_logit(z, y)).sum::<f64>() * inv_b;
        let mut grad = vec![0.0; self.params.len()];
        let offsets = self.shape.offsets();
        let d = self.shape.fc_dims();

        // Dense stack, output layer first. `up` is ∂L/∂(pre-activation).
        let mut up: Vec<f64> = tape.logits.iter().zip(labels).map(|(&z, &y)| (sigmoid(z) - y) * inv_b).collect();
        let fc_inputs = [&tape.flat, &tape.d1, &tape.d2];
        let relu_outs = [&tape.h1, &tape.h2];
        let mask_of = |l: usize| masks.map(|m| if l == 0 { &m.fc1 } else { &m.fc2 });
        for l in (0..3).rev() {
            let (w_off, b_off) = offsets[3 + l];
            {
                let (gw, gb) = grad[w_off..b_off + d[l + 1]].split_at_mut(b_off - w_off);
                gemm(d[l], b, d[l + 1], fc_inputs[l], true, &up, false, 1.0, gw);
                accumulate_column_sums(&up, gb);
            }
            let mut down = vec![0.0; b * d[l]];
            gemm(b, d[l + 1], d[l], &up, false, &self.params[w_off..b_off], true, 0.0, &mut down);
            if l > 0 {
                let relu = relu_outs[l - 1];
                let mask = mask_of(l - 1);
                for (i, g) in down.iter_mut().enumerate() {
                    let keep = mask.map_or(1.0, |m| m[i]);
                    *g = if relu[i] > 0.0 { *g * keep } else { 0.0 };
                }
            }
            up = down;
        }

        // `up` is now ∂L/∂(pooled conv3 output), shape B × h/8 × w/8 × 128.
        let (h0, w0) = (self.shape.height, self.shape.width);
        for l in (0..3).rev() {
            let (cin, cout) = (CHANNELS[l], CHANNELS[l + 1]);
            let (h, w) = (h0 >> l, w0 >> l);
            let t = &tape.conv[l];
            let mut d_out = vec![0.0; b * h * w * cout];
            for (g, &idx) in up.iter().zip(&t.argmax) {
                d_out[idx] += g;
            }
            for (g, &a) in d_out.iter_mut().zip(&t.out) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let (w_off, b_off) = offsets[l];
            {
                let (gw, gb) = grad[w_off..b_off + cout].split_at_mut(b_off - w_off);
                gemm(9 * cin, b * h * w, cout, &t.cols, true, &d_out, false, 1.0, gw);
                accumulate_column_sums(&d_out, gb);
            }
            if l == 0 {
                break;
            }
            let mut d_cols = vec![0.0; b * h * w * 9 * cin];
            gemm(b * h * w, cout, 9 * cin, &d_out, false, &self.params[w_off..b_off], true, 0.0, &mut d_cols);
            col2im(&d_cols, b, h, w, cin, &mut up);
        }
        Ok((loss, grad))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, CHECKPOINT_KIND, &self.shape, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (shape, params): (EvaluatorShape, Vec<f64>) = checkpoint::load(path, CHECKPOINT_KIND)?;
        let mut model = Self::zeros(shape)?;
        if params.len() != model.params.len() {
            return Err(LoadError::CorruptCheckpoint {
                path: path.to_path_buf(),
                reason: format!("{} parameters for a shape needing {}", params.len(), model.params.len()),
            }
            .into());
        }
        model.params = params;
        Ok(model)
    }
}

fn check_labels(n: usize, labels: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::validation("batch", "must not be empty"));
    }
    if labels.len() != n {
        return Err(Error::validation("labels", format!("{} labels for {n} images", labels.len())));
    }
    Ok(())
}
