//! Softmax regression with an L2 regularizer: prediction, per-sample loss and
//! gradient, SGD training with a replayable trace, F1 metrics and
//! select-after-training early stopping.

mod metrics;
mod softmax;
mod trace_io;
mod train;

pub use metrics::{
    f1_from_counts, f1_from_predictions, f1_score, select_early_stop, EarlyStop, MetricReport, POSITIVE_CLASS,
};
pub use softmax::{
    argmax, argmin, grad_sample, log_softmax, loss_sample, mean_grad, mean_loss, objective, objective_grad, predict_proba,
    softmax, ModelParams,
};
pub use trace_io::{read_trace, write_trace, TRACE_MAGIC};
pub use train::{
    batch_gradient, replay, sgd_step, train_sgd, BatchRef, BatchSchedule, TrainConfig, TrainingTrace,
};
