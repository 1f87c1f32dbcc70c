//! Label-aware influence scores for uncleaned samples, the suggested cleaned
//! label that falls out of them, top-b selection and the baseline rankers.

mod baselines;
mod export;

pub use baselines::{baseline_scores, entropy, least_confidence, BaselineKind, BaselineScores};
pub use export::write_influence_csv;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, LabelState, Split};
use crate::error::{ChefError, Result};
use crate::linalg::dot;
use crate::model::{mean_grad, ModelParams};
use crate::numerics::{cg_solve, HvpOperator, SolverConfig};

/// Monotone tally of per-sample gradient evaluations. Shared across threads.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// `v = -H(w)^{-1} grad F(w, Z_val)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValGradProduct {
    pub v: Vec<f64>,
    pub at_params: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ValGradProduct {
    pub fn scaled(&self, factor: f64) -> Self {
        ValGradProduct {
            v: self.v.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }
}

/// Columns `-grad_w log p_j(w, x)` for `j = 0..C`; class block `r` of column
/// `j` is `(p_r - [r == j]) x`.
pub fn classwise_grad(params: &ModelParams, x: &[f64]) -> Vec<Vec<f64>> {
    let p = params.predict_proba(x);
    let (c, d) = (params.num_classes, params.dim);
    (0..c)
        .map(|j| {
            let mut col = vec![0.0; c * d];
            for r in 0..c {
                let coef = p[r] - if r == j { 1.0 } else { 0.0 };
                for (o, xi) in col[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *o = coef * xi;
                }
            }
            col
        })
        .collect()
}

/// Label perturbation that turns `label` into `onehot(class)`.
pub fn delta_y(label: &[f64], class: usize) -> Vec<f64> {
    label
        .iter()
        .enumerate()
        .map(|(j, y)| if j == class { 1.0 - y } else { -y })
        .collect()
}

/// Validation gradient pulled back through the inverse objective Hessian.
pub fn val_grad_product(
    params: &ModelParams,
    dataset: &Dataset,
    gamma: f64,
    solver: &SolverConfig,
) -> Result<ValGradProduct> {
    let val = dataset.ids(Split::Validation);
    if val.is_empty() {
        return Err(ChefError::Argument("validation split is empty".into()));
    }
    let g = mean_grad(params, dataset, val);
    let op = HvpOperator::objective(params, dataset, gamma);
    let sol = cg_solve(&op, &g, solver)?;
    if !sol.converged {
        log::warn!(
            "CG stopped after {} iterations at residual ratio {:e}",
            sol.iterations,
            sol.residual_ratio
        );
    }
    Ok(ValGradProduct {
        v: sol.solution.iter().map(|x| -x).collect(),
        at_params: params.weights.clone(),
        residual: sol.residual_ratio,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// `v` contracted with each class-wise gradient column and with the sample
/// gradient; every class score of a sample is a combination of these.
#[derive(Debug, Clone, PartialEq)]
pub struct Contractions {
    pub columns: Vec<f64>,
    pub sample: f64,
}

impl Contractions {
    pub fn from_vectors(v: &[f64], columns: &[Vec<f64>], sample_grad: &[f64]) -> Self {
        Contractions {
            columns: columns.iter().map(|col| dot(v, col)).collect(),
            sample: dot(v, sample_grad),
        }
    }

    /// Label term `v^T J delta_y`.
    pub fn label_term(&self, label: &[f64], class: usize) -> f64 {
        delta_y(label, class).iter().zip(&self.columns).map(|(d, c)| d * c).sum()
    }

    pub fn score(&self, label: &[f64], class: usize, gamma: f64) -> f64 {
        self.label_term(label, class) + (1.0 - gamma) * self.sample
    }
}

fn probabilistic_label(dataset: &Dataset, id: usize) -> Result<&[f64]> {
    match dataset.label(id) {
        LabelState::Probabilistic(p) => Ok(p),
        other => Err(ChefError::Argument(format!(
            "sample {id} is not uncleaned (label {other:?})"
        ))),
    }
}

fn contractions(v: &ValGradProduct, params: &ModelParams, dataset: &Dataset, id: usize) -> Contractions {
    let x = dataset.x(id);
    let cols = classwise_grad(params, x);
    let g = params.grad_sample(x, dataset.label(id));
    Contractions::from_vectors(&v.v, &cols, &g)
}

/// Estimated `N * (F(w_U, Z_val) - F(w, Z_val))` for cleaning sample `id` to
/// `class`; negative means the edit is predicted to help.
pub fn infl_score(
    v: &ValGradProduct,
    params: &ModelParams,
    dataset: &Dataset,
    id: usize,
    class: usize,
    gamma: f64,
) -> Result<f64> {
    let label = probabilistic_label(dataset, id)?;
    if class >= dataset.num_classes() {
        return Err(ChefError::Argument(format!("class {class} out of range")));
    }
    Ok(contractions(v, params, dataset, id).score(label, class, gamma))
}

/// Scores of one sample for every candidate class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: usize,
    pub scores: Vec<f64>,
    pub best_class: usize,
    pub best_score: f64,
}

impl SampleScores {
    pub fn new(id: usize, scores: Vec<f64>) -> Self {
        let (best_class, best_score) = scores
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (c, s)| if s < acc.1 { (c, s) } else { acc });
        SampleScores {
            id,
            scores,
            best_class,
            best_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceTable {
    /// Sorted by sample id.
    pub rows: Vec<SampleScores>,
    pub warning: Option<String>,
}

impl InfluenceTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&SampleScores> {
        self.rows
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Scores every `(sample, class)` pair for the candidate samples (all
/// uncleaned training samples by default). One gradient evaluation per
/// sample is charged to `counter`.
pub fn score_all(
    v: &ValGradProduct,
    params: &ModelParams,
    dataset: &Dataset,
    gamma: f64,
    candidates: Option<&[usize]>,
    counter: &EvalCounter,
) -> Result<InfluenceTable> {
    let mut ids = match candidates {
        Some(ids) => ids.to_vec(),
        None => dataset.uncleaned_ids(),
    };
    ids.sort_unstable();
    ids.dedup();
    for &id in &ids {
        if id >= dataset.len() {
            return Err(ChefError::Argument(format!("candidate {id} out of range")));
        }
        probabilistic_label(dataset, id)?;
    }
    let c = dataset.num_classes();
    let rows = crate::par::map(&ids, |&id| {
        counter.add(1);
        let label = dataset.label(id).to_vector(c);
        let k = contractions(v, params, dataset, id);
        SampleScores::new(id, (0..c).map(|class| k.score(&label, class, gamma)).collect())
    });
    let warning = (!v.converged).then(|| {
        format!(
            "validation-gradient solve did not converge (residual ratio {:e})",
            v.residual
        )
    });
    Ok(InfluenceTable { rows, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub id: usize,
    /// Suggested cleaned class, when the ranker proposes one.
    pub class: Option<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub items: Vec<Selected>,
    /// Fewer candidates than requested were available.
    pub short: bool,
}

impl Selection {
    pub fn ids(&self) -> Vec<usize> {
        self.items.iter().map(|s| s.id).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Orders by `(key, id)` ascending and keeps the first `b`.
pub(crate) fn take_smallest(mut items: Vec<(f64, Selected)>, b: usize) -> Result<Selection> {
    if b == 0 {
        return Err(ChefError::Argument("selection size must be at least 1".into()));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    let short = items.len() < b;
    items.truncate(b);
    Ok(Selection {
        items: items.into_iter().map(|(_, s)| s).collect(),
        short,
    })
}

/// The `b` samples with the smallest best score, each with its argmin class.
pub fn select_top_b(table: &InfluenceTable, b: usize) -> Result<Selection> {
    let items = table
        .rows
        .iter()
        .map(|r| {
            let item = Selected {
                id: r.id,
                class: Some(r.best_class),
                score: r.best_score,
            };
            (r.best_score, item)
        })
        .collect();
    take_smallest(items, b)
}
