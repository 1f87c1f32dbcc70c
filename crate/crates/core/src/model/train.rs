use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::softmax::ModelParams;
use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            lambda: 0.01,
            epochs: 150,
            batch_size: 2000,
            gamma: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(ChefError::Argument("learning_rate must be positive".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(ChefError::Argument("lambda must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ChefError::Argument("epochs and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ChefError::Argument("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Where one mini-batch came from: the shuffle seed of its epoch and its
/// position in that epoch's permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRef {
    pub epoch_seed: u64,
    pub offset: u32,
    pub len: u32,
}

/// Replayable mini-batch sequence: every epoch shuffles the sorted training
/// ids with its own derived seed and cuts the permutation into batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_ids: Vec<usize>,
    pub batches: Vec<BatchRef>,
}

impl BatchSchedule {
    pub fn new(train_ids: &[usize], epochs: usize, batch_size: usize, seed: u64) -> Self {
        let mut ids = train_ids.to_vec();
        ids.sort_unstable();
        let n = ids.len();
        let mut batches = Vec::new();
        for epoch in 0..epochs {
            let epoch_seed = derive_seed(seed, Stream::EpochShuffle, epoch as u64);
            let mut offset = 0;
            while offset < n {
                let len = batch_size.min(n - offset);
                batches.push(BatchRef {
                    epoch_seed,
                    offset: offset as u32,
                    len: len as u32,
                });
                offset += len;
            }
        }
        BatchSchedule {
            seed,
            epochs,
            batch_size,
            train_ids: ids,
            batches,
        }
    }

    pub fn iterations(&self) -> usize {
        self.batches.len()
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.train_ids.len().div_ceil(self.batch_size)
    }

    pub fn permutation(&self, epoch_seed: u64) -> Vec<usize> {
        let mut ids = self.train_ids.clone();
        ids.shuffle(&mut rng_from_seed(epoch_seed));
        ids
    }

    /// Sample ids of batch `t`.
    pub fn batch_ids(&self, t: usize) -> Vec<usize> {
        let b = self.batches[t];
        let perm = self.permutation(b.epoch_seed);
        perm[b.offset as usize..(b.offset + b.len) as usize].to_vec()
    }

    /// All batches in order; each epoch's permutation is expanded once.
    pub fn expand(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.batches.len());
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for b in &self.batches {
            if cached.as_ref().map(|(s, _)| *s) != Some(b.epoch_seed) {
                cached = Some((b.epoch_seed, self.permutation(b.epoch_seed)));
            }
            let perm = &cached.as_ref().unwrap().1;
            out.push(perm[b.offset as usize..(b.offset + b.len) as usize].to_vec());
        }
        out
    }

    /// Iteration indices that end each epoch, as indices into the params list.
    pub fn epoch_boundaries(&self) -> Vec<usize> {
        let per = self.iterations_per_epoch();
        (1..=self.epochs).map(|e| e * per).collect()
    }

    /// SHA-256 of the expanded id sequence.
    pub fn fingerprint(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for batch in self.expand() {
            h.update((batch.len() as u64).to_le_bytes());
            for id in batch {
                h.update((id as u64).to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Everything cached while training: parameters before every iteration, the
/// data part of every mini-batch gradient and the batch provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// `w_0 .. w_T`
    pub params: Vec<Vec<f64>>,
    /// `grad F(w_t, B_t)` without the regularizer, `t = 0 .. T-1`
    pub batch_grads: Vec<Vec<f64>>,
    /// Whether `batch_grads[t]` was evaluated explicitly (as opposed to a
    /// quasi-Newton estimate).
    pub exact: Vec<bool>,
    pub schedule: BatchSchedule,
    pub num_classes: usize,
    pub dim: usize,
    pub lambda: f64,
    pub learning_rate: f64,
}

impl TrainingTrace {
    pub fn iterations(&self) -> usize {
        self.batch_grads.len()
    }

    pub fn epoch_boundaries(&self) -> Vec<usize> {
        self.schedule.epoch_boundaries()
    }

    pub fn params_at(&self, t: usize) -> ModelParams {
        ModelParams {
            weights: self.params[t].clone(),
            num_classes: self.num_classes,
            dim: self.dim,
            lambda: self.lambda,
        }
    }

    pub fn final_params(&self) -> ModelParams {
        self.params_at(self.params.len() - 1)
    }
}

/// Weighted mini-batch gradient `(1/|B|) sum_z gamma_z grad F(w, z)`, regularizer
/// excluded. The reduction order is fixed, so the result does not depend on
/// the thread count.
pub fn batch_gradient(params: &ModelParams, dataset: &Dataset, ids: &[usize], gamma: f64) -> Vec<f64> {
    let mut g = crate::par::sum_vectors(ids, params.len(), |&i, out| {
        let l = dataset.label(i);
        let w = l.weight(gamma);
        if w != 0.0 {
            params.add_grad_sample(dataset.x(i), l, w, out);
        }
    });
    let n = ids.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// `w - lr * (g + lambda * w)`
pub fn sgd_step(w: &[f64], data_grad: &[f64], learning_rate: f64, lambda: f64) -> Vec<f64> {
    w.iter()
        .zip(data_grad)
        .map(|(wi, gi)| wi - learning_rate * (gi + lambda * wi))
        .collect()
}

/// Mini-batch SGD from zero weights with per-epoch seeded shuffles, caching
/// the full trace. Returns the final parameters and the trace.
pub fn train_sgd(dataset: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainingTrace)> {
    config.validate()?;
    if dataset.train_ids().is_empty() {
        return Err(ChefError::Argument("empty training split".into()));
    }
    let schedule = BatchSchedule::new(dataset.train_ids(), config.epochs, config.batch_size, config.seed);
    let mut params = ModelParams::for_dataset(dataset, config.lambda);
    let batches = schedule.expand();
    let mut trace = TrainingTrace {
        params: Vec::with_capacity(batches.len() + 1),
        batch_grads: Vec::with_capacity(batches.len()),
        exact: Vec::with_capacity(batches.len()),
        schedule,
        num_classes: params.num_classes,
        dim: params.dim,
        lambda: config.lambda,
        learning_rate: config.learning_rate,
    };
    trace.params.push(params.weights.clone());
    for (t, ids) in batches.iter().enumerate() {
        let g = batch_gradient(&params, dataset, ids, config.gamma);
        params.weights = sgd_step(&params.weights, &g, config.learning_rate, config.lambda);
        if !params.is_finite() {
            return Err(ChefError::Divergence { iteration: t });
        }
        trace.batch_grads.push(g);
        trace.exact.push(true);
        trace.params.push(params.weights.clone());
    }
    Ok((params, trace))
}

/// Re-runs SGD from `trace.params[start]` over the trace's batches and
/// returns `w_{start+1} .. w_T`.
pub fn replay(trace: &TrainingTrace, dataset: &Dataset, gamma: f64, start: usize) -> Vec<Vec<f64>> {
    let batches = trace.schedule.expand();
    let mut params = trace.params_at(start);
    let mut out = Vec::new();
    for ids in &batches[start..] {
        let g = batch_gradient(&params, dataset, ids, gamma);
        params.weights = sgd_step(&params.weights, &g, trace.learning_rate, trace.lambda);
        out.push(params.weights.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gaussian_blobs, BlobSpec};
    use crate::model::objective;

    fn blobs() -> Dataset {
        gaussian_blobs(&BlobSpec::new(60, 3, 2, 4)).unwrap()
    }

    #[test]
    fn full_batch_is_one_iteration_per_epoch() {
        let ds = blobs();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 10_000,
            ..TrainConfig::default()
        };
        let (_, trace) = train_sgd(&ds, &cfg).unwrap();
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.schedule.batch_ids(0).len(), ds.train_ids().len());
    }

    #[test]
    fn iteration_count() {
        let ds = blobs();
        let n = ds.train_ids().len();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 7,
            ..TrainConfig::default()
        };
        let (_, trace) = train_sgd(&ds, &cfg).unwrap();
        assert_eq!(trace.iterations(), 3 * n.div_ceil(7));
        assert_eq!(trace.params.len(), trace.batch_grads.len() + 1);
        assert_eq!(*trace.epoch_boundaries().last().unwrap(), trace.iterations());
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = blobs();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let (a, _) = train_sgd(&ds, &cfg).unwrap();
        let (b, _) = train_sgd(&ds, &cfg).unwrap();
        let bits = |p: &ModelParams| p.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let (c, _) = train_sgd(&ds, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn replay_is_bit_exact() {
        let ds = blobs();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 9,
            ..TrainConfig::default()
        };
        let (_, trace) = train_sgd(&ds, &cfg).unwrap();
        let start = 5;
        let replayed = replay(&trace, &ds, cfg.gamma, start);
        for (k, w) in replayed.iter().enumerate() {
            assert_eq!(w, &trace.params[start + 1 + k]);
        }
    }

    #[test]
    fn schedule_expansion_matches_batch_ids() {
        let s = BatchSchedule::new(&[5, 1, 9, 3, 7, 2, 8], 3, 3, 42);
        let all = s.expand();
        for (t, b) in all.iter().enumerate() {
            assert_eq!(b, &s.batch_ids(t));
        }
        assert_eq!(s.fingerprint(), BatchSchedule::new(&[1, 2, 3, 5, 7, 8, 9], 3, 3, 42).fingerprint());
    }

    #[test]
    fn objective_decreases_on_separable_toy() {
        // two well separated clusters of 10 points each
        let spec = BlobSpec {
            separation: 3.0,
            validation_fraction: 0.1,
            test_fraction: 0.0,
            ..BlobSpec::new(22, 2, 2, 17)
        };
        let ds = gaussian_blobs(&spec).unwrap();
        assert_eq!(ds.train_ids().len(), 20);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lambda: 0.01,
            epochs: 200,
            batch_size: 5,
            gamma: 1.0,
            seed: 1,
        };
        let (_, trace) = train_sgd(&ds, &cfg).unwrap();
        let values: Vec<f64> = trace
            .epoch_boundaries()
            .iter()
            .map(|&t| objective(&trace.params_at(t), &ds, cfg.gamma))
            .collect();
        let tail = &values[3..];
        let decreasing = tail.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(
            decreasing as f64 >= 0.95 * (tail.len() - 1) as f64,
            "{decreasing} of {}",
            tail.len() - 1
        );
    }

    #[test]
    fn divergence_is_reported() {
        let ds = blobs();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(train_sgd(&ds, &cfg), Err(ChefError::Divergence { .. })));
    }
}
