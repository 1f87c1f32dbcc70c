//! Datasets of feature rows with deterministic, probabilistic or cleaned
//! labels, their on-disk formats, and synthetic label/annotator generation.

mod annotators;
mod format;
mod synth;

pub use annotators::{simulate_annotators, AnnotatorPool};
pub use format::{load_dataset, write_dataset, FeatureFormat, Manifest, SplitSpec};
pub use synth::{gaussian_blobs, normalize_draws, synth_probabilistic_labels, BlobSpec};

use serde::{Deserialize, Serialize};

use crate::error::{ChefError, Result};

/// Tolerance on the sum of an in-memory probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Per-sample label state. Class indices are 0-based in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelState {
    Deterministic(usize),
    Probabilistic(Vec<f64>),
    Cleaned(usize),
}

impl LabelState {
    pub fn is_probabilistic(&self) -> bool {
        matches!(self, LabelState::Probabilistic(_))
    }

    /// Training weight: 1 for deterministic and cleaned samples, `gamma` otherwise.
    pub fn weight(&self, gamma: f64) -> f64 {
        match self {
            LabelState::Probabilistic(_) => gamma,
            _ => 1.0,
        }
    }

    /// Probability mass this label puts on `class`.
    pub fn mass(&self, class: usize) -> f64 {
        match self {
            LabelState::Probabilistic(p) => p[class],
            LabelState::Deterministic(c) | LabelState::Cleaned(c) => {
                if *c == class {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_vector(&self, num_classes: usize) -> Vec<f64> {
        (0..num_classes).map(|c| self.mass(c)).collect()
    }

    /// The hard class, if the label has one.
    pub fn class(&self) -> Option<usize> {
        match self {
            LabelState::Deterministic(c) | LabelState::Cleaned(c) => Some(*c),
            LabelState::Probabilistic(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Feature matrix plus label state for every sample.
///
/// Feature rows are stored with a trailing constant-1 bias column, so
/// `dim() == raw_dim() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    raw_dim: usize,
    labels: Vec<LabelState>,
    ground_truth: Vec<Option<usize>>,
    num_classes: usize,
    splits: Splits,
}

impl Dataset {
    /// Builds a dataset from raw (un-augmented) row-major features.
    pub fn new(
        raw_features: Vec<f64>,
        raw_dim: usize,
        labels: Vec<LabelState>,
        ground_truth: Option<Vec<usize>>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = labels.len();
        if raw_features.len() != n * raw_dim {
            return Err(ChefError::Consistency(format!(
                "{} feature values for {} samples of dimension {}",
                raw_features.len(),
                n,
                raw_dim
            )));
        }
        let gt = match ground_truth {
            Some(g) if g.len() != n => {
                return Err(ChefError::Consistency(format!(
                    "{} ground-truth entries for {} samples",
                    g.len(),
                    n
                )))
            }
            Some(g) => g.into_iter().map(Some).collect(),
            None => vec![None; n],
        };
        let ds = Self::from_parts(raw_features, raw_dim, labels, gt, num_classes, splits);
        ds.validate()?;
        Ok(ds)
    }

    pub(crate) fn from_parts(
        raw_features: Vec<f64>,
        raw_dim: usize,
        labels: Vec<LabelState>,
        ground_truth: Vec<Option<usize>>,
        num_classes: usize,
        splits: Splits,
    ) -> Self {
        let n = labels.len();
        let dim = raw_dim + 1;
        let mut features = Vec::with_capacity(n * dim);
        for row in raw_features.chunks(raw_dim.max(1)).take(n) {
            features.extend_from_slice(&row[..raw_dim]);
            features.push(1.0);
        }
        if raw_dim == 0 {
            features = vec![1.0; n];
        }
        Dataset {
            features,
            raw_dim,
            labels,
            ground_truth,
            num_classes,
            splits,
        }
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.num_classes < 2 {
            return Err(ChefError::Validation("need at least two classes".into()));
        }
        if !self.features.iter().all(|v| v.is_finite()) {
            return Err(ChefError::Validation("non-finite feature value".into()));
        }
        for (i, label) in self.labels.iter().enumerate() {
            match label {
                LabelState::Probabilistic(p) => {
                    if p.len() != self.num_classes {
                        return Err(ChefError::Validation(format!(
                            "sample {i}: probability vector of length {}",
                            p.len()
                        )));
                    }
                    let sum: f64 = p.iter().sum();
                    if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
                        return Err(ChefError::Validation(format!(
                            "sample {i}: invalid probability vector {p:?}"
                        )));
                    }
                }
                LabelState::Deterministic(c) | LabelState::Cleaned(c) => {
                    if *c >= self.num_classes {
                        return Err(ChefError::Validation(format!("sample {i}: class {c} out of range")));
                    }
                }
            }
        }
        if let Some(c) = self.ground_truth.iter().flatten().find(|c| **c >= self.num_classes) {
            return Err(ChefError::Validation(format!("ground-truth class {c} out of range")));
        }
        let mut seen = vec![false; n];
        for split in [Split::Train, Split::Validation, Split::Test] {
            for &id in self.splits.ids(split) {
                if id >= n || seen[id] {
                    return Err(ChefError::Validation(format!(
                        "split ids must be disjoint and in range (id {id})"
                    )));
                }
                seen[id] = true;
                if split != Split::Train && self.labels[id].is_probabilistic() {
                    return Err(ChefError::Validation(format!(
                        "{split:?} sample {id} carries a probabilistic label"
                    )));
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(ChefError::Validation(format!("sample {id} belongs to no split")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Augmented feature dimension (raw features plus bias).
    pub fn dim(&self) -> usize {
        self.raw_dim + 1
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Flattened parameter dimension `C * (d + 1)`.
    pub fn param_dim(&self) -> usize {
        self.num_classes * self.dim()
    }

    /// Augmented feature row of sample `id`.
    pub fn x(&self, id: usize) -> &[f64] {
        let d = self.dim();
        &self.features[id * d..(id + 1) * d]
    }

    /// Raw feature row (bias column dropped).
    pub fn raw_x(&self, id: usize) -> &[f64] {
        &self.x(id)[..self.raw_dim]
    }

    pub fn label(&self, id: usize) -> &LabelState {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[LabelState] {
        &self.labels
    }

    pub fn ground_truth(&self, id: usize) -> Option<usize> {
        self.ground_truth[id]
    }

    pub fn has_ground_truth(&self) -> bool {
        self.ground_truth.iter().any(Option::is_some)
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn ids(&self, split: Split) -> &[usize] {
        self.splits.ids(split)
    }

    pub fn train_ids(&self) -> &[usize] {
        &self.splits.train
    }

    /// Training samples still carrying probabilistic labels, ascending.
    pub fn uncleaned_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .splits
            .train
            .iter()
            .copied()
            .filter(|&i| self.labels[i].is_probabilistic())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn num_probabilistic(&self) -> usize {
        self.labels.iter().filter(|l| l.is_probabilistic()).count()
    }

    /// Replaces a probabilistic label by a cleaned class. A sample is cleaned
    /// at most once; deterministic samples never change.
    pub fn clean(&mut self, id: usize, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(ChefError::Argument(format!("class {class} out of range")));
        }
        match self.labels.get(id) {
            Some(LabelState::Probabilistic(_)) => {
                self.labels[id] = LabelState::Cleaned(class);
                Ok(())
            }
            Some(other) => Err(ChefError::Argument(format!(
                "sample {id} is not probabilistic ({other:?})"
            ))),
            None => Err(ChefError::Argument(format!("no sample {id}"))),
        }
    }

    pub(crate) fn set_label(&mut self, id: usize, label: LabelState) {
        self.labels[id] = label;
    }

    pub(crate) fn set_ground_truth(&mut self, id: usize, class: Option<usize>) {
        self.ground_truth[id] = class;
    }

    /// Feature rows and labels as bytes, for content hashing.
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.raw_dim as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            match l {
                LabelState::Deterministic(c) => {
                    h.update([0u8]);
                    h.update((*c as u64).to_le_bytes());
                }
                LabelState::Cleaned(c) => {
                    h.update([2u8]);
                    h.update((*c as u64).to_le_bytes());
                }
                LabelState::Probabilistic(p) => {
                    h.update([1u8]);
                    for v in p {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec![0.0, 1.0, 1.0, 0.0, 2.0, 2.0],
            2,
            vec![
                LabelState::Deterministic(0),
                LabelState::Probabilistic(vec![0.3, 0.7]),
                LabelState::Deterministic(1),
            ],
            None,
            2,
            Splits {
                train: vec![0, 1],
                validation: vec![2],
                test: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn bias_column_is_appended() {
        let ds = tiny();
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.x(1), &[1.0, 0.0, 1.0]);
        assert_eq!(ds.raw_x(2), &[2.0, 2.0]);
        assert_eq!(ds.param_dim(), 6);
    }

    #[test]
    fn cleaning_is_one_way() {
        let mut ds = tiny();
        assert_eq!(ds.uncleaned_ids(), vec![1]);
        ds.clean(1, 0).unwrap();
        assert_eq!(ds.label(1), &LabelState::Cleaned(0));
        assert!(ds.clean(1, 1).is_err());
        assert!(ds.clean(0, 1).is_err());
        assert!(ds.uncleaned_ids().is_empty());
    }

    #[test]
    fn probabilistic_validation_label_rejected() {
        let err = Dataset::new(
            vec![0.0, 1.0],
            1,
            vec![LabelState::Deterministic(0), LabelState::Probabilistic(vec![0.5, 0.5])],
            None,
            2,
            Splits {
                train: vec![0],
                validation: vec![1],
                test: vec![],
            },
        );
        assert!(matches!(err, Err(ChefError::Validation(_))));
    }

    #[test]
    fn overlapping_splits_rejected() {
        let err = Dataset::new(
            vec![0.0, 1.0],
            1,
            vec![LabelState::Deterministic(0), LabelState::Deterministic(1)],
            None,
            2,
            Splits {
                train: vec![0, 1],
                validation: vec![1],
                test: vec![],
            },
        );
        assert!(err.is_err());
    }
}
