use serde::{Deserialize, Serialize};

use super::softmax::ModelParams;
use super::train::TrainingTrace;
use crate::dataio::{Dataset, Split};
use crate::error::{ChefError, Result};

/// Class treated as positive for binary F1 (0-based; class "2" in files).
pub const POSITIVE_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// `(f1, precision, recall)` from confusion counts; all zero when undefined.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (f1, precision, recall)
}

/// F1 of `predicted` against `actual`: binary on [`POSITIVE_CLASS`] for two
/// classes, macro-averaged otherwise.
pub fn f1_from_predictions(predicted: &[usize], actual: &[usize], num_classes: usize) -> MetricReport {
    let counts = |c: usize| {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (p, a) in predicted.iter().zip(actual) {
            match (*p == c, *a == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        f1_from_counts(tp, fp, fn_)
    };
    let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    let accuracy = correct as f64 / predicted.len().max(1) as f64;
    let (f1, precision, recall) = if num_classes == 2 {
        counts(POSITIVE_CLASS)
    } else {
        let per: Vec<_> = (0..num_classes).map(counts).collect();
        let k = num_classes as f64;
        (
            per.iter().map(|c| c.0).sum::<f64>() / k,
            per.iter().map(|c| c.1).sum::<f64>() / k,
            per.iter().map(|c| c.2).sum::<f64>() / k,
        )
    };
    MetricReport {
        f1,
        precision,
        recall,
        accuracy,
    }
}

pub fn f1_score(params: &ModelParams, dataset: &Dataset, split: Split) -> Result<MetricReport> {
    let ids = dataset.ids(split);
    if ids.is_empty() {
        return Err(ChefError::Argument(format!("{split:?} split is empty")));
    }
    let mut predicted = Vec::with_capacity(ids.len());
    let mut actual = Vec::with_capacity(ids.len());
    for &i in ids {
        let truth = dataset
            .label(i)
            .class()
            .ok_or_else(|| ChefError::Argument(format!("sample {i} has no deterministic label")))?;
        actual.push(truth);
        predicted.push(params.predict(dataset.x(i)));
    }
    Ok(f1_from_predictions(&predicted, &actual, dataset.num_classes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStop {
    pub params: ModelParams,
    /// 0-based epoch whose end-of-epoch parameters were chosen.
    pub epoch: usize,
    pub f1: f64,
}

/// Picks the end-of-epoch parameters with the best validation F1, earliest
/// epoch on ties.
pub fn select_early_stop(trace: &TrainingTrace, dataset: &Dataset) -> Result<EarlyStop> {
    let boundaries = trace.epoch_boundaries();
    if boundaries.is_empty() || trace.params.len() <= *boundaries.last().unwrap() {
        return Err(ChefError::Argument("trace has no complete epoch".into()));
    }
    let mut best: Option<EarlyStop> = None;
    for (epoch, &t) in boundaries.iter().enumerate() {
        let params = trace.params_at(t);
        let f1 = f1_score(&params, dataset, Split::Validation)?.f1;
        if best.as_ref().is_none_or(|b| f1 > b.f1) {
            best = Some(EarlyStop { params, epoch, f1 });
        }
    }
    Ok(best.unwrap())
}
