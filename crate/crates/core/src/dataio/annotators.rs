use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{ChefError, Result};
use crate::rng::{derive_seed, rng_from_seed, Stream};

/// Simulated human annotators, each a full map from training sample id to a
/// 0-based class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorPool {
    pub annotators: Vec<BTreeMap<usize, usize>>,
    pub error_rate: f64,
    pub seed: u64,
}

impl AnnotatorPool {
    /// Labels given to `id` by the first `count` annotators.
    pub fn labels_for(&self, id: usize, count: usize) -> Option<Vec<usize>> {
        self.annotators
            .iter()
            .take(count)
            .map(|a| a.get(&id).copied())
            .collect::<Option<Vec<_>>>()
            .filter(|v| v.len() == count)
    }

    pub fn len(&self) -> usize {
        self.annotators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotators.is_empty()
    }
}

/// Builds `k` annotators that copy the ground truth of every training sample
/// except on exactly `round(error_rate * N_gt)` uniformly chosen samples,
/// where they answer a uniformly drawn different class.
pub fn simulate_annotators(dataset: &Dataset, k: usize, error_rate: f64, seed: u64) -> Result<AnnotatorPool> {
    if k == 0 {
        return Err(ChefError::Argument("need at least one annotator".into()));
    }
    if !(0.0..1.0).contains(&error_rate) {
        return Err(ChefError::Argument(format!("error rate {error_rate} outside [0, 1)")));
    }
    let mut truth: Vec<(usize, usize)> = Vec::new();
    for &id in dataset.ids(Split::Train) {
        let c = dataset
            .ground_truth(id)
            .ok_or_else(|| ChefError::Argument(format!("training sample {id} has no ground truth")))?;
        truth.push((id, c));
    }
    truth.sort_unstable();
    let flips = (error_rate * truth.len() as f64).round() as usize;
    let c = dataset.num_classes();
    let annotators = (0..k)
        .map(|a| {
            let mut rng = rng_from_seed(derive_seed(seed, Stream::Annotator, a as u64));
            let mut map: BTreeMap<usize, usize> = truth.iter().copied().collect();
            let mut ids: Vec<usize> = truth.iter().map(|(id, _)| *id).collect();
            let (chosen, _) = ids.partial_shuffle(&mut rng, flips);
            for &id in chosen.iter() {
                let gt = map[&id];
                let shift = rng.random_range(1..c);
                map.insert(id, (gt + shift) % c);
            }
            map
        })
        .collect();
    Ok(AnnotatorPool {
        annotators,
        error_rate,
        seed,
    })
}
