//! End-to-end two-pass mission: stages, their on-disk artifacts, and the report.

mod config;
mod report;
mod stages;

pub use config::{
    CameraConfig, EvaluationConfig, EvaluatorConfig, EvaluatorDataConfig, MissionConfig, PlannerConfig, ReportConfig,
    SecondPassConfig, TrajectoryConfig,
};
pub use report::{
    cdf_svg, check_thresholds, emit_report, load_report, IterationSummary, MissionReport, QuantileRow,
    ThresholdCheck, REPORT_QUANTILES,
};
pub use stages::{
    artifacts, evaluation_poses, evaluator_data_poses, ingest_external_dataset, install_first_pass, read_metrics_csv,
    run_mission, run_stage, write_metrics_csv, EvaluatorDataSummary, EvaluatorReport, MetricRow, PlanSummary, Stage,
    StageOutput, METRICS_HEADER,
};
