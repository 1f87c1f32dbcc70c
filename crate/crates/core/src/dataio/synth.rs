use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, LabelState, Split, Splits};
use crate::error::{ChefError, Result};
use crate::rng::{stream_rng, Stream};

/// Gaussian-blob dataset description.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    pub num_classes: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Relative class frequencies; uniform when empty.
    pub class_weights: Vec<f64>,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(n: usize, dim: usize, num_classes: usize, seed: u64) -> Self {
        BlobSpec {
            n,
            dim,
            num_classes,
            separation: 1.0,
            class_weights: Vec::new(),
            validation_fraction: 0.15,
            test_fraction: 0.15,
            seed,
        }
    }
}

/// Generates a fully deterministic, ground-truth-labelled dataset: each class
/// is an isotropic unit Gaussian around a random mean at distance
/// `separation` from the origin. Classes are assigned round-robin (or in
/// proportion to `class_weights`) and the split is a seeded permutation.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.num_classes < 2 || spec.dim == 0 || spec.n < spec.num_classes {
        return Err(ChefError::Argument(format!("degenerate blob spec {spec:?}")));
    }
    let mut rng = stream_rng(spec.seed, Stream::Synth, 0);
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x * spec.separation / norm).collect()
        })
        .collect();
    let weights = if spec.class_weights.is_empty() {
        vec![1.0; spec.num_classes]
    } else if spec.class_weights.len() == spec.num_classes && spec.class_weights.iter().all(|w| *w > 0.0) {
        spec.class_weights.clone()
    } else {
        return Err(ChefError::Argument("class_weights must be C positive reals".into()));
    };
    let total: f64 = weights.iter().sum();
    // deterministic interleaving: class c gets the i-th sample when its
    // running share falls furthest behind its target
    let mut taken = vec![0usize; spec.num_classes];
    let mut features = Vec::with_capacity(spec.n * spec.dim);
    let mut classes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = (0..spec.num_classes)
            .max_by(|&a, &b| {
                let da = weights[a] / total * (i + 1) as f64 - taken[a] as f64;
                let db = weights[b] / total * (i + 1) as f64 - taken[b] as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        taken[c] += 1;
        for mean in &means[c] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(mean + noise);
        }
        classes.push(c);
    }
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(&mut stream_rng(spec.seed, Stream::Split, 0));
    let n_val = (spec.validation_fraction * spec.n as f64).round() as usize;
    let n_test = (spec.test_fraction * spec.n as f64).round() as usize;
    if n_val + n_test >= spec.n {
        return Err(ChefError::Argument("validation and test fractions leave no training data".into()));
    }
    let mut validation = order[..n_val].to_vec();
    let mut test = order[n_val..n_val + n_test].to_vec();
    let mut train = order[n_val + n_test..].to_vec();
    validation.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    let labels = classes.iter().map(|&c| LabelState::Deterministic(c)).collect();
    Dataset::new(
        features,
        spec.dim,
        labels,
        Some(classes),
        spec.num_classes,
        Splits { train, validation, test },
    )
}

/// Normalizes non-negative draws into a probability vector.
pub fn normalize_draws(draws: &[f64]) -> Vec<f64> {
    let sum: f64 = draws.iter().sum();
    draws.iter().map(|v| v / sum).collect()
}

/// Replaces the labels of `round(fraction * N_train)` uniformly chosen
/// training samples by random probability vectors (normalized iid
/// uniform(0,1) draws). Ground truth is kept; validation and test samples are
/// never touched.
pub fn synth_probabilistic_labels(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ChefError::Argument(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut out = dataset.clone();
    let train = dataset.ids(Split::Train);
    for &id in train {
        if out.ground_truth(id).is_none() {
            match dataset.label(id).class() {
                Some(c) => out.set_ground_truth(id, Some(c)),
                None => {
                    return Err(ChefError::Argument(format!("training sample {id} has no ground truth")))
                }
            }
        }
    }
    let count = (fraction * train.len() as f64).round() as usize;
    let mut rng = stream_rng(seed, Stream::ProbLabels, 0);
    let mut ids = train.to_vec();
    ids.sort_unstable();
    let (chosen, _) = ids.partial_shuffle(&mut rng, count);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    let c = dataset.num_classes();
    for id in chosen {
        // (0, 1] keeps the normalizer positive
        let draws: Vec<f64> = (0..c).map(|_| 1.0 - rng.random::<f64>()).collect();
        out.set_label(id, LabelState::Probabilistic(normalize_draws(&draws)));
    }
    out.validate()?;
    Ok(out)
}
