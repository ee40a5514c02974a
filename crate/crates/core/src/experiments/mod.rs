//! Intra-subject evaluation, placement ablation, train-size curves, transfer
//! with standing calibration, and gaitogram export.

mod ablation;
mod gaitogram;
mod metrics;
mod pipeline;
pub mod report;
mod trainsize;
mod transfer;

pub use ablation::{run_ablation, AblationEntry, AblationResult, Extremes};
pub use gaitogram::{export_gaitogram, GaitogramFiles};
pub use metrics::{mean_squared_error, pooled_total, rms_error, RmsReport};
pub use pipeline::{
    fit_and_evaluate, fit_matrices, prepare, run_intra_subject, EvalConfig, Evaluation, Fitted, ModelKind,
};
pub use trainsize::{run_train_size_curve, TrainSizeCurve, TrainSizePoint};
pub use transfer::{run_transfer, run_transfer_all, TransferConfig, TransferResult};
