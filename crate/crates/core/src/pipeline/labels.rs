use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Strategy;
use crate::error::{ChefError, Result};
use crate::influence::Selection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolved {
    Class(usize),
    Tie,
}

/// Strict-majority class, or `Tie`.
pub fn aggregate_majority(labels: &[usize]) -> Resolved {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    match counts.into_iter().find(|&(_, n)| 2 * n > labels.len()) {
        Some((c, _)) => Resolved::Class(c),
        None => Resolved::Tie,
    }
}

/// Final label of every selected sample under `strategy`. Annotator lists
/// beyond the required count are truncated.
pub fn resolve_labels(
    strategy: Strategy,
    selection: &Selection,
    annotator_labels: &BTreeMap<usize, Vec<usize>>,
) -> Result<BTreeMap<usize, Resolved>> {
    let need = strategy.required_annotations();
    let missing: Vec<usize> = selection
        .items
        .iter()
        .filter(|s| annotator_labels.get(&s.id).map_or(0, |l| l.len()) < need)
        .map(|s| s.id)
        .collect();
    if !missing.is_empty() {
        return Err(ChefError::IncompleteAnnotation(missing));
    }
    selection
        .items
        .iter()
        .map(|s| {
            let suggested = || {
                s.class
                    .ok_or_else(|| ChefError::Argument(format!("sample {} has no suggested label", s.id)))
            };
            let humans = annotator_labels.get(&s.id).map(|l| &l[..need]).unwrap_or(&[]);
            let r = match strategy {
                Strategy::One => aggregate_majority(humans),
                Strategy::Two => Resolved::Class(suggested()?),
                Strategy::Three => {
                    let mut votes = vec![suggested()?];
                    votes.extend_from_slice(humans);
                    aggregate_majority(&votes)
                }
            };
            Ok((s.id, r))
        })
        .collect()
}
