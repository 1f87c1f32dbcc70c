use serde::{Deserialize, Serialize};

use super::{classwise_grad, take_smallest, Selected, Selection, ValGradProduct};
use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::linalg::dot;
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Deletion influence `v^T grad F(w, z)`; smallest first.
    InflD,
    /// Label-perturbation influence `min_c v^T J e_c`; smallest first.
    InflY,
    /// `1 - max_c p_c`; largest first.
    ActiveLeastConf,
    /// `-sum p log p`; largest first.
    ActiveEntropy,
}

impl BaselineKind {
    pub fn needs_v(self) -> bool {
        matches!(self, BaselineKind::InflD | BaselineKind::InflY)
    }

    fn ascending(self) -> bool {
        self.needs_v()
    }
}

pub fn least_confidence(p: &[f64]) -> f64 {
    1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub kind: BaselineKind,
    /// `(sample id, score, suggested class)` sorted by id.
    pub rows: Vec<(usize, f64, Option<usize>)>,
}

impl BaselineScores {
    pub fn select(&self, b: usize) -> Result<Selection> {
        let sign = if self.kind.ascending() { 1.0 } else { -1.0 };
        let items = self
            .rows
            .iter()
            .map(|&(id, score, class)| (sign * score, Selected { id, class, score }))
            .collect();
        take_smallest(items, b)
    }
}

/// Per-sample priority of each uncleaned candidate under a baseline ranker.
pub fn baseline_scores(
    kind: BaselineKind,
    params: &ModelParams,
    dataset: &Dataset,
    v: Option<&ValGradProduct>,
    candidates: Option<&[usize]>,
) -> Result<BaselineScores> {
    if kind.needs_v() && v.is_none() {
        return Err(ChefError::Argument(format!("{kind:?} needs the validation-gradient product")));
    }
    let mut ids = match candidates {
        Some(ids) => ids.to_vec(),
        None => dataset.uncleaned_ids(),
    };
    ids.sort_unstable();
    ids.dedup();
    let rows = crate::par::map(&ids, |&id| {
        let x = dataset.x(id);
        match kind {
            BaselineKind::InflD => {
                let g = params.grad_sample(x, dataset.label(id));
                (id, dot(&v.unwrap().v, &g), None)
            }
            BaselineKind::InflY => {
                let cols = classwise_grad(params, x);
                let scores: Vec<f64> = cols.iter().map(|c| dot(&v.unwrap().v, c)).collect();
                let best = crate::model::argmin(&scores);
                (id, scores[best], Some(best))
            }
            BaselineKind::ActiveLeastConf => (id, least_confidence(&params.predict_proba(x)), None),
            BaselineKind::ActiveEntropy => (id, entropy(&params.predict_proba(x)), None),
        }
    });
    Ok(BaselineScores { kind, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gaussian_blobs, synth_probabilistic_labels, BlobSpec};

    #[test]
    fn hand_entropy() {
        assert!((entropy(&[0.9, 0.1]) - 0.32508).abs() < 1e-5);
    }

    #[test]
    fn uniform_maximizes_active_scores() {
        let u = [1.0 / 3.0; 3];
        for p in [[0.5, 0.3, 0.2], [0.9, 0.05, 0.05], [0.34, 0.33, 0.33]] {
            assert!(entropy(&u) >= entropy(&p));
            assert!(least_confidence(&u) >= least_confidence(&p));
        }
    }

    fn noisy() -> Dataset {
        let ds = gaussian_blobs(&BlobSpec::new(60, 2, 2, 3)).unwrap();
        synth_probabilistic_labels(&ds, 0.5, 3).unwrap()
    }

    #[test]
    fn zero_v_gives_zero_deletion_scores() {
        let ds = noisy();
        let params = ModelParams::from_weights(vec![0.3, -0.2, 0.1, 0.5, 0.0, -0.4], 2, 3, 0.1).unwrap();
        let v = ValGradProduct {
            v: vec![0.0; 6],
            at_params: params.weights.clone(),
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
        let s = baseline_scores(BaselineKind::InflD, &params, &ds, Some(&v), None).unwrap();
        assert_eq!(s.rows.len(), ds.uncleaned_ids().len());
        assert!(s.rows.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn influence_baselines_need_v() {
        let ds = noisy();
        let params = ModelParams::for_dataset(&ds, 0.1);
        assert!(baseline_scores(BaselineKind::InflY, &params, &ds, None, None).is_err());
        assert!(baseline_scores(BaselineKind::ActiveEntropy, &params, &ds, None, None).is_ok());
    }

    #[test]
    fn active_selection_prefers_uncertain_samples() {
        let scores = BaselineScores {
            kind: BaselineKind::ActiveEntropy,
            rows: vec![(1, 0.1, None), (2, 0.6, None), (3, 0.6, None), (5, 0.3, None)],
        };
        assert_eq!(scores.select(3).unwrap().ids(), vec![2, 3, 5]);
    }
}
