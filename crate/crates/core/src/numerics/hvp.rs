use crate::dataio::Dataset;
use crate::model::ModelParams;

/// A symmetric linear map over the flattened parameter space.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

/// Hessian of `-sum_k y_k log p_k(w, x)` applied to `v`, accumulated into
/// `out` with factor `weight`.
///
/// For softmax regression this is `(sum_k y_k) * [(diag(p) - p p^T) (V x)] (x) x`
/// where `V` is the `C x dim` reshape of `v`.
pub fn loss_hvp(params: &ModelParams, p: &[f64], x: &[f64], y_sum: f64, v: &[f64], weight: f64, out: &mut [f64]) {
    let c = params.num_classes;
    let d = params.dim;
    let vx: Vec<f64> = (0..c)
        .map(|r| v[r * d..(r + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let pvx: f64 = p.iter().zip(&vx).map(|(a, b)| a * b).sum();
    for r in 0..c {
        let coef = weight * y_sum * p[r] * (vx[r] - pvx);
        if coef == 0.0 {
            continue;
        }
        for (o, xi) in out[r * d..(r + 1) * d].iter_mut().zip(x) {
            *o += coef * xi;
        }
    }
}

/// Which Hessian an [`HvpOperator`] applies.
#[derive(Debug, Clone)]
pub enum HvpSource<'a> {
    /// Hessian of the training objective: weighted average of per-sample
    /// Hessians plus `lambda * I`.
    Objective { dataset: &'a Dataset, gamma: f64 },
    /// `H(w, z)` of one sample with label vector `label`.
    Sample { x: &'a [f64], label: Vec<f64> },
    /// `-grad^2 log p^(class)(w, x)`.
    ClassLog { x: &'a [f64], class: usize },
}

/// Analytic Hessian-vector product operator at fixed parameters.
pub struct HvpOperator<'a> {
    params: &'a ModelParams,
    source: HvpSource<'a>,
    /// Cached `(sample id, weight, probabilities)` for the objective source.
    samples: Vec<(usize, f64, Vec<f64>)>,
}

impl<'a> HvpOperator<'a> {
    pub fn new(params: &'a ModelParams, source: HvpSource<'a>) -> Self {
        let samples = match &source {
            HvpSource::Objective { dataset, gamma } => crate::par::map(dataset.train_ids(), |&i| {
                (i, dataset.label(i).weight(*gamma), params.predict_proba(dataset.x(i)))
            }),
            _ => Vec::new(),
        };
        HvpOperator { params, source, samples }
    }

    pub fn objective(params: &'a ModelParams, dataset: &'a Dataset, gamma: f64) -> Self {
        Self::new(params, HvpSource::Objective { dataset, gamma })
    }

    pub fn sample(params: &'a ModelParams, x: &'a [f64], label: Vec<f64>) -> Self {
        Self::new(params, HvpSource::Sample { x, label })
    }

    pub fn class_log(params: &'a ModelParams, x: &'a [f64], class: usize) -> Self {
        Self::new(params, HvpSource::ClassLog { x, class })
    }

    pub fn source(&self) -> &HvpSource<'a> {
        &self.source
    }
}

impl LinearOperator for HvpOperator<'_> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let params = self.params;
        match &self.source {
            HvpSource::Objective { dataset, .. } => {
                let mut out = crate::par::sum_vectors(&self.samples, v.len(), |(i, w, p), acc| {
                    if *w != 0.0 {
                        loss_hvp(params, p, dataset.x(*i), 1.0, v, *w, acc)
                    }
                });
                let n = self.samples.len().max(1) as f64;
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = *o / n + params.lambda * vi;
                }
                out
            }
            HvpSource::Sample { x, label } => {
                let p = params.predict_proba(x);
                let mut out = vec![0.0; v.len()];
                loss_hvp(params, &p, x, label.iter().sum(), v, 1.0, &mut out);
                out
            }
            HvpSource::ClassLog { x, class } => {
                let p = params.predict_proba(x);
                let mut y = vec![0.0; params.num_classes];
                y[*class] = 1.0;
                let mut out = vec![0.0; v.len()];
                loss_hvp(params, &p, x, y.iter().sum(), v, 1.0, &mut out);
                out
            }
        }
    }
}

/// `diag(values)`; used for tests and benchmarks.
pub struct DiagonalOperator(pub Vec<f64>);

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().zip(v).map(|(a, b)| a * b).collect()
    }
}
