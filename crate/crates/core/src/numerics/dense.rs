use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::model::ModelParams;

/// Largest parameter dimension [`dense_hessian`] will assemble.
pub const MAX_DENSE_DIM: usize = 4096;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| crate::linalg::dot(self.row(i), v)).collect()
    }

    /// `max |A_ij - A_ji|`
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub enum DenseTarget<'a> {
    Objective { dataset: &'a Dataset, gamma: f64 },
    Sample { x: &'a [f64], label: Vec<f64> },
    ClassLog { x: &'a [f64], class: usize },
}

/// Adds `coef * (diag(p) - p p^T) (x) x x^T` entry by entry.
fn add_block(h: &mut DenseMatrix, c: usize, d: usize, p: &[f64], x: &[f64], coef: f64) {
    for r in 0..c {
        for q in 0..c {
            let s = if r == q { p[r] - p[r] * p[q] } else { -p[r] * p[q] };
            let s = coef * s;
            for a in 0..d {
                let base = (r * d + a) * h.n + q * d;
                for b in 0..d {
                    h.data[base + b] += s * x[a] * x[b];
                }
            }
        }
    }
}

/// Explicit `m x m` Hessian, for testing the matrix-free operators.
pub fn dense_hessian(params: &ModelParams, target: &DenseTarget<'_>) -> Result<DenseMatrix> {
    let m = params.len();
    if m > MAX_DENSE_DIM {
        return Err(ChefError::Argument(format!(
            "dense Hessian of dimension {m} exceeds the {MAX_DENSE_DIM} guard"
        )));
    }
    let (c, d) = (params.num_classes, params.dim);
    let mut h = DenseMatrix::zeros(m);
    match target {
        DenseTarget::Objective { dataset, gamma } => {
            let ids = dataset.train_ids();
            let n = ids.len().max(1) as f64;
            for &i in ids {
                let w = dataset.label(i).weight(*gamma);
                if w != 0.0 {
                    let p = params.predict_proba(dataset.x(i));
                    add_block(&mut h, c, d, &p, dataset.x(i), w / n);
                }
            }
            for k in 0..m {
                h.data[k * m + k] += params.lambda;
            }
        }
        DenseTarget::Sample { x, label } => {
            let p = params.predict_proba(x);
            add_block(&mut h, c, d, &p, x, label.iter().sum());
        }
        DenseTarget::ClassLog { x, .. } => {
            let p = params.predict_proba(x);
            add_block(&mut h, c, d, &p, x, 1.0);
        }
    }
    Ok(h)
}
