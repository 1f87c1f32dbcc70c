//! Incremental influence: per-sample gradients and Hessian norms cached at
//! the initial model, perturbation bounds on later-round scores, and the
//! pruning rule that limits exact scoring to samples that could still make
//! the top-b.

mod sidecar;

pub use sidecar::{load_or_build, provenance_key, read_provenance, write_provenance, PROVENANCE_MAGIC};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::influence::{classwise_grad, delta_y, Contractions, ValGradProduct};
use crate::linalg::{dot, norm, sub};
use crate::model::ModelParams;
use crate::numerics::{hessian_norm_power, HvpOperator, SolverConfig};

/// Quantities of one uncleaned sample evaluated at `w0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceEntry {
    /// Spectral norm of the sample Hessian `H(w0, z)`.
    pub sample_hessian_norm: f64,
    /// Spectral norms of `-hess log p_j(w0, x)`, one per class.
    pub classlog_norms: Vec<f64>,
    pub classwise_grad0: Vec<Vec<f64>>,
    pub sample_grad0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceCache {
    pub w0: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
    pub entries: BTreeMap<usize, ProvenanceEntry>,
}

impl ProvenanceCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn get(&self, id: usize) -> Result<&ProvenanceEntry> {
        self.entries.get(&id).ok_or(ChefError::CacheMiss(id))
    }

    /// Drops cleaned samples.
    pub fn evict(&mut self, ids: &[usize]) {
        for id in ids {
            self.entries.remove(id);
        }
    }
}

/// Pre-computes the cache for every uncleaned training sample at `params0`.
pub fn build_provenance(params0: &ModelParams, dataset: &Dataset, solver: &SolverConfig) -> Result<ProvenanceCache> {
    let ids = dataset.uncleaned_ids();
    let c = dataset.num_classes();
    let entries = crate::par::map(&ids, |&id| {
        let x = dataset.x(id);
        let label = dataset.label(id);
        let sample_op = HvpOperator::sample(params0, x, label.to_vector(c));
        let classlog_norms = (0..c)
            .map(|j| hessian_norm_power(&HvpOperator::class_log(params0, x, j), solver))
            .collect();
        let entry = ProvenanceEntry {
            sample_hessian_norm: hessian_norm_power(&sample_op, solver),
            classlog_norms,
            classwise_grad0: classwise_grad(params0, x),
            sample_grad0: params0.grad_sample(x, label),
        };
        (id, entry)
    });
    Ok(ProvenanceCache {
        w0: params0.weights.clone(),
        num_classes: params0.num_classes,
        dim: params0.dim,
        entries: entries.into_iter().collect(),
    })
}

/// Drift terms shared by every bound of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// `v^T (w_k - w0)`
    pub e1: f64,
    /// `|v| |w_k - w0|`
    pub e2: f64,
}

impl Drift {
    pub fn new(cache: &ProvenanceCache, v: &ValGradProduct, params_k: &ModelParams) -> Self {
        let dw = sub(&params_k.weights, &cache.w0);
        let e1 = dot(&v.v, &dw);
        let e2 = norm(&v.v) * norm(&dw);
        debug_assert!(e1.abs() <= e2 * (1.0 + 1e-12) + 1e-300);
        Drift { e1, e2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub id: usize,
    pub class: usize,
    pub i0: f64,
    pub offset: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BoundRecord {
    pub fn contains(&self, score: f64) -> bool {
        self.lower <= score && score <= self.upper
    }
}

fn records_for(
    entry: &ProvenanceEntry,
    v: &ValGradProduct,
    drift: Drift,
    id: usize,
    label: &[f64],
    gamma: f64,
) -> Vec<BoundRecord> {
    let k = Contractions::from_vectors(&v.v, &entry.classwise_grad0, &entry.sample_grad0);
    let mu = entry.sample_hessian_norm;
    let half = (1.0 - gamma) / 2.0;
    (0..label.len())
        .map(|class| {
            let d = delta_y(label, class);
            let i0 = k.score(label, class, gamma);
            let signed: f64 = d.iter().zip(&entry.classlog_norms).map(|(dj, h)| dj * h).sum();
            let absolute: f64 = d.iter().zip(&entry.classlog_norms).map(|(dj, h)| dj.abs() * h).sum();
            let offset = half * drift.e1 * mu + drift.e1 * signed;
            let radius = drift.e2 * absolute + half * drift.e2 * mu;
            BoundRecord {
                id,
                class,
                i0,
                offset,
                lower: i0 + offset - radius,
                upper: i0 + offset + radius,
            }
        })
        .collect()
}

/// Bounds on the round-k score of cleaning `id` to `class`.
pub fn bound_record(
    cache: &ProvenanceCache,
    v: &ValGradProduct,
    params_k: &ModelParams,
    dataset: &Dataset,
    id: usize,
    class: usize,
    gamma: f64,
) -> Result<BoundRecord> {
    let entry = cache.get(id)?;
    if class >= cache.num_classes {
        return Err(ChefError::Argument(format!("class {class} out of range")));
    }
    let label = dataset.label(id).to_vector(cache.num_classes);
    let drift = Drift::new(cache, v, params_k);
    Ok(records_for(entry, v, drift, id, &label, gamma)[class])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Samples that still need exact scoring, sorted by id.
    pub candidates: Vec<usize>,
    /// Every bound computed this round, grouped by sample in id order.
    pub records: Vec<BoundRecord>,
    /// Largest upper bound among the top-b samples by `i0`.
    pub threshold: f64,
    pub drift: Drift,
}

/// Keeps the `b` samples with the smallest `i0` plus every sample whose
/// lower bound for some class falls below their largest upper bound.
pub fn prune(
    cache: &ProvenanceCache,
    v: &ValGradProduct,
    params_k: &ModelParams,
    dataset: &Dataset,
    gamma: f64,
    b: usize,
) -> Result<PruneResult> {
    if b == 0 {
        return Err(ChefError::Argument("b must be at least 1".into()));
    }
    let drift = Drift::new(cache, v, params_k);
    let c = cache.num_classes;
    let per_sample: Vec<Vec<BoundRecord>> = cache
        .entries
        .iter()
        .map(|(&id, entry)| records_for(entry, v, drift, id, &dataset.label(id).to_vector(c), gamma))
        .collect();
    // best entry of each sample by i0, lowest class on ties
    let mut best: Vec<&BoundRecord> = per_sample
        .iter()
        .map(|recs| recs.iter().fold(&recs[0], |a, r| if r.i0 < a.i0 { r } else { a }))
        .collect();
    best.sort_by(|a, b| a.i0.total_cmp(&b.i0).then(a.id.cmp(&b.id)));
    let top = &best[..b.min(best.len())];
    let threshold = top.iter().map(|r| r.upper).fold(f64::NEG_INFINITY, f64::max);
    let mut candidates: Vec<usize> = top.iter().map(|r| r.id).collect();
    for recs in &per_sample {
        if recs.iter().any(|r| r.lower < threshold) {
            candidates.push(recs[0].id);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    Ok(PruneResult {
        candidates,
        records: per_sample.into_iter().flatten().collect(),
        threshold,
        drift,
    })
}
