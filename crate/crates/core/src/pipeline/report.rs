use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;

/// A selected sample as reported; classes are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedReport {
    pub id: usize,
    pub suggested: Option<usize>,
    pub score: f64,
}

/// Outcome for one selected sample; `class` is `None` on a tie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedReport {
    pub id: usize,
    pub class: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradEvals {
    /// Per-sample gradient evaluations spent on scoring.
    pub influence: u64,
    /// Samples scored exactly this round.
    pub candidates: usize,
    /// Uncleaned, not yet selected samples at selection time.
    pub uncleaned: usize,
    /// Full mini-batch gradient evaluations of the model update.
    pub update_exact: usize,
    pub update_fallback: usize,
    /// Per-sample gradient evaluations of the model update.
    pub update_samples: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub select: f64,
    pub update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub k: usize,
    pub selected: Vec<SelectedReport>,
    pub applied: Vec<AppliedReport>,
    pub f1_val: f64,
    pub f1_test: Option<f64>,
    pub grad_evals: GradEvals,
    pub warnings: Vec<String>,
    pub ms: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialReport {
    pub f1_val: f64,
    pub f1_test: Option<f64>,
    /// Epoch picked by early stopping.
    pub epoch: usize,
    pub iterations: usize,
    pub ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    BudgetExhausted,
    TargetReached,
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub config_echo: PipelineConfig,
    pub initial: InitialReport,
    pub rounds: Vec<RoundReport>,
    pub cleaned: usize,
    pub spent: usize,
    pub final_f1_val: f64,
    pub final_f1_test: Option<f64>,
    pub status: Status,
}

fn strip_timings(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("ms");
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

impl Report {
    pub fn to_json(&self, with_timings: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        if !with_timings {
            strip_timings(&mut v);
        }
        serde_json::to_string_pretty(&v).expect("report is serializable")
    }
}
