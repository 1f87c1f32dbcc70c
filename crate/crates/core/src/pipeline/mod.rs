//! The cleaning loop: train the initial model, then repeatedly select the
//! top-b samples, resolve their labels, apply them and refresh the model
//! until the budget is spent or a validation target is reached.

mod config;
mod labels;
mod report;
mod session;

pub use config::{AnnotatorConfig, PipelineConfig, Selector, Strategy, Updater};
pub use labels::{aggregate_majority, resolve_labels, Resolved};
pub use report::{
    AppliedReport, GradEvals, InitialReport, Report, RoundReport, SelectedReport, Status, Timings,
};
pub use session::{run_pipeline, run_round, MetricPoint, PendingRound, Session};
