//! Render-quality labeling and the convolutional classifier that learns it.

mod data;
mod model;
mod train;

pub use data::{
    balance, build_training_set, label_render, label_renders, read_labeled_set, write_labeled_set, LabeledRender, LabeledRenderSet,
    QualityLabel, LABELS_CSV, PSNR_THRESHOLD_DB, SSIM_THRESHOLD,
};
pub use model::{DropoutMasks, EvaluatorModel, EvaluatorShape, CHANNELS, DROPOUT_RATE};
pub use train::{
    classify, evaluator_metrics, evaluator_train, fit_to_model, metrics_from_scores, roc_auc, EpochStats,
    EvaluatorMetrics, EvaluatorTrainConfig,
};
