//! Incremental model refresh after label edits: the previous SGD trace is
//! replayed over the same mini-batches, computing batch gradients exactly
//! only during burn-in and periodically afterwards, and otherwise
//! extrapolating the cached gradients with an L-BFGS quasi-Hessian plus an
//! explicit correction for the edited samples.

mod lbfgs;

pub use lbfgs::{lbfgs_product, LbfgsHistory, CURVATURE_EPS};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, LabelState};
use crate::error::{ChefError, Result};
use crate::linalg::sub;
use crate::model::{batch_gradient, sgd_step, ModelParams, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeltaGradConfig {
    /// History size.
    pub m0: usize,
    /// Burn-in iterations.
    pub j0: usize,
    /// Period of exact evaluations after burn-in.
    pub t0: usize,
}

impl Default for DeltaGradConfig {
    fn default() -> Self {
        DeltaGradConfig { m0: 2, j0: 10, t0: 20 }
    }
}

impl DeltaGradConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 || self.j0 == 0 || self.t0 == 0 {
            return Err(ChefError::Argument("m0, j0 and t0 must all be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_exact(&self, t: usize) -> bool {
        t <= self.j0 || (t - self.j0).is_multiple_of(self.t0)
    }

    /// Scheduled exact evaluations over `iterations` steps.
    pub fn exact_count(&self, iterations: usize) -> usize {
        (0..iterations).filter(|&t| self.is_exact(t)).count()
    }
}

/// One label edit: the state before and after this round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEdit {
    pub old: LabelState,
    pub new: LabelState,
}

pub type CleanedSet = BTreeMap<usize, LabelEdit>;

/// `(1/|B|) sum_{z in B and R} [w_new grad F(w, z_new) - w_old grad F(w, z_old)]`,
/// or `None` when the batch contains no edited sample. Also returns the
/// number of per-sample gradients evaluated.
fn edit_correction(
    params: &ModelParams,
    dataset: &Dataset,
    batch: &[usize],
    cleaned: &CleanedSet,
    gamma: f64,
) -> (Option<Vec<f64>>, usize) {
    let mut out: Option<Vec<f64>> = None;
    let mut evals = 0;
    let n = batch.len() as f64;
    for id in batch {
        if let Some(edit) = cleaned.get(id) {
            let acc = out.get_or_insert_with(|| vec![0.0; params.len()]);
            let x = dataset.x(*id);
            params.add_grad_sample(x, &edit.new, edit.new.weight(gamma) / n, acc);
            params.add_grad_sample(x, &edit.old, -edit.old.weight(gamma) / n, acc);
            evals += 2;
        }
    }
    (out, evals)
}

/// Batch gradient under the edited labels, obtained from the gradient under
/// the previous labels by touching only the edited samples in the batch.
pub fn updated_batch_gradient(
    params: &ModelParams,
    dataset: &Dataset,
    cached_grad: &[f64],
    batch: &[usize],
    cleaned: &CleanedSet,
    gamma: f64,
) -> Vec<f64> {
    match edit_correction(params, dataset, batch, cleaned, gamma).0 {
        Some(c) => cached_grad.iter().zip(&c).map(|(g, d)| g + d).collect(),
        None => cached_grad.to_vec(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaGradCounters {
    /// Iterations whose batch gradient was evaluated over the whole batch.
    pub exact_evals: usize,
    /// Exact evaluations forced by an empty history outside the schedule.
    pub fallback_evals: usize,
    pub approx_iterations: usize,
    /// Per-sample gradients evaluated in total.
    pub sample_grad_evals: u64,
    pub curvature_pushes: usize,
    pub curvature_rejected: usize,
}

#[derive(Debug, Clone)]
pub struct DeltaGradOutput {
    pub params: ModelParams,
    pub trace: TrainingTrace,
    pub counters: DeltaGradCounters,
    pub warning: Option<String>,
}

/// Replays `prev` under the edited labels of `dataset` (which already carries
/// the new label states listed in `cleaned`).
pub fn deltagrad_update(
    prev: &TrainingTrace,
    dataset: &Dataset,
    cleaned: &CleanedSet,
    config: &DeltaGradConfig,
    gamma: f64,
) -> Result<DeltaGradOutput> {
    config.validate()?;
    for (id, edit) in cleaned {
        if dataset.label(*id) != &edit.new {
            return Err(ChefError::Consistency(format!(
                "sample {id} does not carry its edited label"
            )));
        }
    }
    let batches = prev.schedule.expand();
    let (lr, lambda) = (prev.learning_rate, prev.lambda);
    let mut history = LbfgsHistory::new(config.m0);
    let mut counters = DeltaGradCounters::default();
    let mut params = prev.params_at(0);
    let mut trace = TrainingTrace {
        params: Vec::with_capacity(prev.params.len()),
        batch_grads: Vec::with_capacity(batches.len()),
        exact: Vec::with_capacity(batches.len()),
        schedule: prev.schedule.clone(),
        num_classes: prev.num_classes,
        dim: prev.dim,
        lambda,
        learning_rate: lr,
    };
    trace.params.push(params.weights.clone());
    for (t, batch) in batches.iter().enumerate() {
        let cached = &prev.batch_grads[t];
        let dw = sub(&params.weights, &prev.params[t]);
        let moved = dw.iter().any(|v| *v != 0.0);
        let scheduled = config.is_exact(t);
        let (g, exact) = if scheduled || (moved && history.is_empty()) {
            if scheduled {
                counters.exact_evals += 1;
            } else {
                counters.fallback_evals += 1;
            }
            let g = batch_gradient(&params, dataset, batch, gamma);
            counters.sample_grad_evals += batch.len() as u64;
            if moved {
                let (corr, evals) = edit_correction(&params, dataset, batch, cleaned, gamma);
                counters.sample_grad_evals += evals as u64;
                let old = match corr {
                    Some(c) => sub(&g, &c),
                    None => g.clone(),
                };
                counters.curvature_pushes += 1;
                if !history.push(dw, sub(&old, cached)) {
                    counters.curvature_rejected += 1;
                }
            }
            (g, true)
        } else {
            counters.approx_iterations += 1;
            let mut g = cached.clone();
            if moved {
                let bv = lbfgs_product(&history, &dw)?;
                g.iter_mut().zip(&bv).for_each(|(a, b)| *a += b);
            }
            let (corr, evals) = edit_correction(&params, dataset, batch, cleaned, gamma);
            counters.sample_grad_evals += evals as u64;
            if let Some(c) = corr {
                g.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
            }
            (g, false)
        };
        params.weights = sgd_step(&params.weights, &g, lr, lambda);
        if !params.is_finite() {
            return Err(ChefError::Divergence { iteration: t });
        }
        trace.batch_grads.push(g);
        trace.exact.push(exact);
        trace.params.push(params.weights.clone());
    }
    let warning = (history.pushes > 0 && history.rejection_rate() > 0.5).then(|| {
        format!(
            "ill-conditioned update: {} of {} curvature pairs rejected",
            history.rejected, history.pushes
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(DeltaGradOutput {
        params,
        trace,
        counters,
        warning,
    })
}
