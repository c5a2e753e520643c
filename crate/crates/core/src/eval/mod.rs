//! Training loop, model selection, clip- and piece-wise evaluation, reports.

mod metrics;
mod report;
mod train;

pub use metrics::{
    aggregate_pieces, clip_report, evaluate_clips, evaluate_pieces, piece_report, predict_proba, EvalReport,
    Granularity,
};
pub use report::{emit_report, render_report};
pub use train::{train, EpochRecord, TrainLog, TrainOutcome, TrainRunConfig};
