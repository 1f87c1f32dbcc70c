use serde::{Deserialize, Serialize};

use crate::deltagrad::DeltaGradConfig;
use crate::error::{ChefError, Result};
use crate::influence::BaselineKind;
use crate::model::TrainConfig;
use crate::numerics::SolverConfig;

/// Where cleaned labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Majority vote of three annotators.
    One,
    /// The suggested label as is.
    Two,
    /// Majority vote of the suggested label and two annotators.
    Three,
}

impl Strategy {
    /// Annotator labels needed per selected sample.
    pub fn required_annotations(self) -> usize {
        match self {
            Strategy::One => 3,
            Strategy::Two => 0,
            Strategy::Three => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Updater {
    Retrain,
    Deltagrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Infl,
    InflD,
    InflY,
    /// Least-confidence sampling.
    ActiveOne,
    /// Entropy sampling.
    ActiveTwo,
}

impl Selector {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Selector::Infl => None,
            Selector::InflD => Some(BaselineKind::InflD),
            Selector::InflY => Some(BaselineKind::InflY),
            Selector::ActiveOne => Some(BaselineKind::ActiveLeastConf),
            Selector::ActiveTwo => Some(BaselineKind::ActiveEntropy),
        }
    }

    pub fn suggests_labels(self) -> bool {
        matches!(self, Selector::Infl | Selector::InflY)
    }

    pub fn needs_v(self) -> bool {
        matches!(self, Selector::Infl | Selector::InflD | Selector::InflY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnnotatorConfig {
    Simulated { k: usize, error_rate: f64 },
    Service,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub budget: usize,
    pub batch_b: usize,
    pub strategy: Strategy,
    pub updater: Updater,
    pub selector: Selector,
    pub use_increm: bool,
    /// Weight of uncleaned samples; overrides `train.gamma`.
    pub gamma: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub delta: DeltaGradConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub annotators: AnnotatorConfig,
    #[serde(default)]
    pub early_stop_f1: Option<f64>,
    /// Whether a majority-vote tie still spends budget.
    #[serde(default = "default_true")]
    pub tie_consumes_budget: bool,
    /// Root seed; overrides `train.seed` and seeds the simulated annotators.
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            budget: 100,
            batch_b: 10,
            strategy: Strategy::Two,
            updater: Updater::Deltagrad,
            selector: Selector::Infl,
            use_increm: true,
            gamma: 0.8,
            train: TrainConfig::default(),
            delta: DeltaGradConfig::default(),
            solver: SolverConfig::default(),
            annotators: AnnotatorConfig::Simulated { k: 3, error_rate: 0.05 },
            early_stop_f1: None,
            tie_consumes_budget: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.batch_b == 0 || self.batch_b > self.budget {
            return Err(ChefError::Argument("need 1 <= batch_b <= budget".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ChefError::Argument("gamma must lie in [0, 1]".into()));
        }
        if self.strategy != Strategy::One && !self.selector.suggests_labels() {
            return Err(ChefError::Argument(format!(
                "selector {:?} suggests no labels, so only strategy one applies",
                self.selector
            )));
        }
        if let AnnotatorConfig::Simulated { k, error_rate } = self.annotators {
            if k < self.strategy.required_annotations() {
                return Err(ChefError::Argument(format!(
                    "strategy {:?} needs {} annotators, {k} configured",
                    self.strategy,
                    self.strategy.required_annotations()
                )));
            }
            if !(0.0..1.0).contains(&error_rate) {
                return Err(ChefError::Argument("error_rate must lie in [0, 1)".into()));
            }
        }
        if self.use_increm && self.selector != Selector::Infl {
            return Err(ChefError::Argument("incremental pruning only applies to selector infl".into()));
        }
        self.train_config().validate()?;
        self.delta.validate()?;
        self.solver.validate()
    }

    /// `train` with the pipeline's gamma and seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bogus"] = 1.into();
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
    }

    #[test]
    fn baselines_need_strategy_one() {
        let cfg = PipelineConfig {
            selector: Selector::ActiveOne,
            use_increm: false,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        let ok = PipelineConfig {
            strategy: Strategy::One,
            ..cfg
        };
        ok.validate().unwrap();
    }
}
