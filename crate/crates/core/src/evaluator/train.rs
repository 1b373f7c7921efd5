use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{LabeledRenderSet, QualityLabel};
use super::model::{DropoutMasks, EvaluatorModel};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::optim::Adam;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EvaluatorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean training-mode BCE over the epoch's batches.
    pub loss: f64,
    /// Inference-mode accuracy on the training set after the epoch.
    pub accuracy: f64,
}

/// Resamples `image` to the model input size when they differ.
pub fn fit_to_model(model: &EvaluatorModel, image: &RgbImage) -> RgbImage {
    let s = model.shape();
    if image.width() == s.width && image.height() == s.height {
        image.clone()
    } else {
        image.resize_bilinear(s.width, s.height)
    }
}

/// Mini-batch Adam on binary cross-entropy. Shuffling and dropout come from
/// streams of `cfg.seed`.
pub fn evaluator_train(
    mut model: EvaluatorModel,
    data: &LabeledRenderSet,
    cfg: &EvaluatorTrainConfig,
) -> Result<(EvaluatorModel, Vec<EpochStats>)> {
    if cfg.batch_size == 0 {
        return Err(Error::validation("batch_size", "must be at least 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::validation("learning_rate", "must be positive"));
    }
    if data.is_empty() {
        return Err(Error::validation("data", "no labeled renders"));
    }
    data.require_both_classes()?;
    let images: Vec<RgbImage> = data.items.iter().map(|i| fit_to_model(&model, &i.image)).collect();
    let labels: Vec<f64> = data.items.iter().map(|i| i.label.as_f64()).collect();
    let mut adam = Adam::new(model.param_count(), 0.9, 0.999, 1e-8);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(cfg.seed, &[rng::tag("evaluator-epoch"), epoch as u64]);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let imgs: Vec<&RgbImage> = batch.iter().map(|&i| &images[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
            let masks = DropoutMasks::sample(model.shape(), batch.len(), &mut r);
            let (loss, grad) = model.loss_and_grad(&imgs, &ys, Some(&masks))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    iteration: step as usize,
                    batch_seed: rng::derive(cfg.seed, &[epoch as u64, step]),
                });
            }
            adam.update(model.params_mut(), &grad, cfg.learning_rate);
            loss_sum += loss * batch.len() as f64;
            step += 1;
        }
        let probs = predict_all(&model, &images)?;
        let correct = probs.iter().zip(&labels).filter(|(p, y)| classify(**p).as_f64() == **y).count();
        history.push(EpochStats {
            loss: loss_sum / images.len() as f64,
            accuracy: correct as f64 / images.len() as f64,
        });
    }
    Ok((model, history))
}

fn predict_all(model: &EvaluatorModel, images: &[RgbImage]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        let refs: Vec<&RgbImage> = chunk.iter().collect();
        out.extend(model.predict_batch(&refs)?);
    }
    Ok(out)
}

/// Threshold at ½; exactly ½ counts as high quality.
pub fn classify(p: f64) -> QualityLabel {
    if p >= 0.5 {
        QualityLabel::High
    } else {
        QualityLabel::Low
    }
}

/// Rank-statistic ROC AUC: the probability that a random positive scores
/// above a random negative, ties counting ½.
pub fn roc_auc(scores: &[f64], labels: &[QualityLabel]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::validation("scores", "one score per label required"));
    }
    let n_pos = labels.iter().filter(|l| **l == QualityLabel::High).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation("labels", "ROC AUC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive ranks with tied groups sharing their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == QualityLabel::High {
                rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorMetrics {
    pub accuracy: f64,
    pub roc_auc: f64,
}

pub fn evaluator_metrics(model: &EvaluatorModel, test: &LabeledRenderSet) -> Result<EvaluatorMetrics> {
    test.require_both_classes()
        .map_err(|_| Error::validation("test set", "ROC AUC needs both classes"))?;
    let images: Vec<RgbImage> = test.items.iter().map(|i| fit_to_model(model, &i.image)).collect();
    let scores = predict_all(model, &images)?;
    let labels: Vec<QualityLabel> = test.items.iter().map(|i| i.label).collect();
    metrics_from_scores(&scores, &labels)
}

pub fn metrics_from_scores(scores: &[f64], labels: &[QualityLabel]) -> Result<EvaluatorMetrics> {
    let correct = scores.iter().zip(labels).filter(|(s, l)| classify(**s) == **l).count();
    Ok(EvaluatorMetrics {
        accuracy: correct as f64 / labels.len() as f64,
        roc_auc: roc_auc(scores, labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use QualityLabel::{High, Low};

    #[test]
    fn perfect_classifier() {
        let m = metrics_from_scores(&[1.0, 0.0, 1.0, 0.0], &[High, Low, High, Low]).unwrap();
        assert_eq!((m.accuracy, m.roc_auc), (1.0, 1.0));
    }

    #[test]
    fn constant_classifier() {
        let m = metrics_from_scores(&[0.5; 5], &[High, Low, High, Low, Low]).unwrap();
        assert_eq!(m.accuracy, 0.4);
        assert_eq!(m.roc_auc, 0.5);
    }

    #[test]
    fn auc_needs_both_classes() {
        assert!(roc_auc(&[0.2, 0.3], &[Low, Low]).is_err());
    }
}
