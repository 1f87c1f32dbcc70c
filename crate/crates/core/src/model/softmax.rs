use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, LabelState};
use crate::error::{ChefError, Result};

/// Weights of a C-class softmax regression over augmented features,
/// stored row-major as `C x (d + 1)` and flattened to length `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
    pub lambda: f64,
}

impl ModelParams {
    pub fn zeros(num_classes: usize, dim: usize, lambda: f64) -> Self {
        ModelParams {
            weights: vec![0.0; num_classes * dim],
            num_classes,
            dim,
            lambda,
        }
    }

    pub fn for_dataset(dataset: &Dataset, lambda: f64) -> Self {
        Self::zeros(dataset.num_classes(), dataset.dim(), lambda)
    }

    pub fn from_weights(weights: Vec<f64>, num_classes: usize, dim: usize, lambda: f64) -> Result<Self> {
        if weights.len() != num_classes * dim {
            return Err(ChefError::Argument(format!(
                "{} weights for a {num_classes}x{dim} model",
                weights.len()
            )));
        }
        if !(lambda > 0.0) {
            return Err(ChefError::Argument(format!("lambda must be positive, got {lambda}")));
        }
        Ok(ModelParams {
            weights,
            num_classes,
            dim,
            lambda,
        })
    }

    /// Flattened parameter dimension.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| self.row(c).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Class probabilities via max-shifted softmax.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    /// Cross-entropy `-sum_k y_k log p_k` of one sample, regularizer excluded.
    pub fn loss_sample(&self, x: &[f64], label: &LabelState) -> f64 {
        let lp = log_softmax(&self.scores(x));
        -(0..self.num_classes)
            .map(|k| {
                let y = label.mass(k);
                if y == 0.0 {
                    0.0
                } else {
                    y * lp[k]
                }
            })
            .sum::<f64>()
    }

    /// Per-sample gradient, regularizer excluded: class block `r` is
    /// `(p_r - y_r) x`.
    pub fn grad_sample(&self, x: &[f64], label: &LabelState) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.add_grad_sample(x, label, 1.0, &mut out);
        out
    }

    /// `out += weight * grad_sample(x, label)`
    pub fn add_grad_sample(&self, x: &[f64], label: &LabelState, weight: f64, out: &mut [f64]) {
        let p = self.predict_proba(x);
        for r in 0..self.num_classes {
            let coef = weight * (p[r] - label.mass(r));
            if coef == 0.0 {
                continue;
            }
            let block = &mut out[r * self.dim..(r + 1) * self.dim];
            for (o, v) in block.iter_mut().zip(x) {
                *o += coef * v;
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

pub fn predict_proba(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    params.predict_proba(x)
}

pub fn loss_sample(params: &ModelParams, x: &[f64], label: &LabelState) -> f64 {
    params.loss_sample(x, label)
}

pub fn grad_sample(params: &ModelParams, x: &[f64], label: &LabelState) -> Vec<f64> {
    params.grad_sample(x, label)
}

/// Training objective: `(1/N) * sum_i weight_i * F(w, z_i) + (lambda/2) ||W||^2`
/// over the training split, with probabilistic samples weighted by `gamma`.
pub fn objective(params: &ModelParams, dataset: &Dataset, gamma: f64) -> f64 {
    let ids = dataset.train_ids();
    let data: f64 = ids
        .iter()
        .map(|&i| {
            let l = dataset.label(i);
            let w = l.weight(gamma);
            if w == 0.0 {
                0.0
            } else {
                w * params.loss_sample(dataset.x(i), l)
            }
        })
        .sum();
    data / ids.len().max(1) as f64 + 0.5 * params.lambda * params.frobenius_sq()
}

/// Gradient of [`objective`].
pub fn objective_grad(params: &ModelParams, dataset: &Dataset, gamma: f64) -> Vec<f64> {
    let ids = dataset.train_ids();
    let mut g = crate::par::sum_vectors(ids, params.len(), |&i, out| {
        let l = dataset.label(i);
        params.add_grad_sample(dataset.x(i), l, l.weight(gamma), out)
    });
    let n = ids.len().max(1) as f64;
    for (gi, w) in g.iter_mut().zip(&params.weights) {
        *gi = *gi / n + params.lambda * w;
    }
    g
}

/// Unweighted mean cross-entropy over a split (no regularizer).
pub fn mean_loss(params: &ModelParams, dataset: &Dataset, ids: &[usize]) -> f64 {
    let total: f64 = ids.iter().map(|&i| params.loss_sample(dataset.x(i), dataset.label(i))).sum();
    total / ids.len().max(1) as f64
}

/// Unweighted mean gradient over a split (no regularizer).
pub fn mean_grad(params: &ModelParams, dataset: &Dataset, ids: &[usize]) -> Vec<f64> {
    let mut g = crate::par::sum_vectors(ids, params.len(), |&i, out| {
        params.add_grad_sample(dataset.x(i), dataset.label(i), 1.0, out)
    });
    let n = ids.len().max(1) as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}
