use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AnnotatorConfig, PipelineConfig, Updater};
use super::labels::{resolve_labels, Resolved};
use super::report::{
    AppliedReport, GradEvals, InitialReport, Report, RoundReport, SelectedReport, Status, Timings,
};
use crate::dataio::{simulate_annotators, AnnotatorPool, Dataset, Split};
use crate::deltagrad::{deltagrad_update, CleanedSet, LabelEdit};
use crate::error::{ChefError, Result};
use crate::increm::{build_provenance, prune, ProvenanceCache, PruneResult};
use crate::influence::{
    baseline_scores, score_all, select_top_b, val_grad_product, EvalCounter, InfluenceTable, Selection,
    ValGradProduct,
};
use crate::model::{f1_score, select_early_stop, train_sgd, ModelParams, TrainingTrace};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub k: usize,
    pub f1_val: f64,
    pub f1_test: Option<f64>,
}

/// The selection awaiting annotation, with what was computed to obtain it.
#[derive(Debug, Clone)]
pub struct PendingRound {
    pub k: usize,
    pub selection: Selection,
    pub candidates: Vec<usize>,
    pub uncleaned: usize,
    pub v: Option<ValGradProduct>,
    pub table: Option<InfluenceTable>,
    pub prune: Option<PruneResult>,
    pub influence_evals: u64,
    pub warnings: Vec<String>,
    pub select_ms: f64,
}

/// One cleaning session. Owns the dataset; every mutation goes through
/// [`Session::advance`].
#[derive(Debug, Clone)]
pub struct Session {
    config: PipelineConfig,
    dataset: Dataset,
    model: ModelParams,
    trace: TrainingTrace,
    cache: Option<ProvenanceCache>,
    pool: Option<AnnotatorPool>,
    /// Every sample ever selected; none is offered twice.
    selected: BTreeSet<usize>,
    spent: usize,
    cleaned: usize,
    pending: Option<PendingRound>,
    status: Status,
    metrics: Vec<MetricPoint>,
    initial: InitialReport,
    rounds: Vec<RoundReport>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn evaluate(model: &ModelParams, dataset: &Dataset, k: usize) -> Result<MetricPoint> {
    let f1_val = f1_score(model, dataset, Split::Validation)?.f1;
    let f1_test = if dataset.ids(Split::Test).is_empty() {
        None
    } else {
        Some(f1_score(model, dataset, Split::Test)?.f1)
    };
    Ok(MetricPoint { k, f1_val, f1_test })
}

impl Session {
    /// Runs the initialization step and prepares the first selection.
    pub fn new(config: PipelineConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        if dataset.ids(Split::Validation).is_empty() {
            return Err(ChefError::Argument("validation split is empty".into()));
        }
        let start = Instant::now();
        let (_, trace) = train_sgd(&dataset, &config.train_config())?;
        let early = select_early_stop(&trace, &dataset)?;
        let model = early.params;
        let cache = if config.use_increm {
            Some(build_provenance(&model, &dataset, &config.solver)?)
        } else {
            None
        };
        let pool = match config.annotators {
            AnnotatorConfig::Simulated { k, error_rate } if config.strategy.required_annotations() > 0 => Some(
                simulate_annotators(&dataset, k, error_rate, derive_seed(config.seed, Stream::Annotator, 0))?,
            ),
            _ => None,
        };
        let metric = evaluate(&model, &dataset, 0)?;
        let initial = InitialReport {
            f1_val: metric.f1_val,
            f1_test: metric.f1_test,
            epoch: early.epoch,
            iterations: trace.iterations(),
            ms: elapsed_ms(start),
        };
        let mut session = Session {
            config,
            dataset,
            model,
            trace,
            cache,
            pool,
            selected: BTreeSet::new(),
            spent: 0,
            cleaned: 0,
            pending: None,
            status: Status::Running,
            metrics: vec![metric],
            initial,
            rounds: Vec::new(),
        };
        session.prepare()?;
        Ok(session)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn cache(&self) -> Option<&ProvenanceCache> {
        self.cache.as_ref()
    }

    pub fn annotator_pool(&self) -> Option<&AnnotatorPool> {
        self.pool.as_ref()
    }

    /// Round index `k`: the number of completed rounds.
    pub fn k(&self) -> usize {
        self.rounds.len()
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn remaining(&self) -> usize {
        self.config.budget - self.spent
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_done(&self) -> bool {
        self.status != Status::Running
    }

    /// Whether `id` was offered in an earlier round.
    pub fn was_selected(&self, id: usize) -> bool {
        self.selected.contains(&id)
    }

    pub fn pending(&self) -> Option<&PendingRound> {
        self.pending.as_ref()
    }

    pub fn metrics(&self) -> &[MetricPoint] {
        &self.metrics
    }

    pub fn rounds(&self) -> &[RoundReport] {
        &self.rounds
    }

    pub fn report(&self) -> Report {
        let last = self.metrics.last().expect("initial metrics exist");
        Report {
            seed: self.config.seed,
            config_echo: self.config.clone(),
            initial: self.initial.clone(),
            rounds: self.rounds.clone(),
            cleaned: self.cleaned,
            spent: self.spent,
            final_f1_val: last.f1_val,
            final_f1_test: last.f1_test,
            status: self.status,
        }
    }

    fn finish(&mut self, status: Status) {
        self.status = status;
        self.pending = None;
    }

    /// Computes the next selection, or marks the session finished.
    fn prepare(&mut self) -> Result<()> {
        if self.remaining() == 0 {
            self.finish(Status::BudgetExhausted);
            return Ok(());
        }
        if let Some(target) = self.config.early_stop_f1 {
            if self.metrics.last().is_some_and(|m| m.f1_val >= target) {
                self.finish(Status::TargetReached);
                return Ok(());
            }
        }
        let pool: Vec<usize> = self
            .dataset
            .uncleaned_ids()
            .into_iter()
            .filter(|id| !self.selected.contains(id))
            .collect();
        if pool.is_empty() {
            self.finish(Status::NoCandidates);
            return Ok(());
        }
        let start = Instant::now();
        let k = self.k();
        let cfg = &self.config;
        let b = cfg.batch_b.min(self.remaining());
        let counter = EvalCounter::new();
        let mut warnings = Vec::new();
        let v = if cfg.selector.needs_v() {
            let v = val_grad_product(&self.model, &self.dataset, cfg.gamma, &cfg.solver)?;
            if !v.converged {
                warnings.push(format!("CG residual ratio {:e} above tolerance", v.residual));
            }
            Some(v)
        } else {
            None
        };
        let (selection, candidates, table, pruned) = match cfg.selector.baseline() {
            None => {
                let v = v.as_ref().unwrap();
                let pruned = match (&self.cache, k) {
                    (Some(cache), k) if k >= 1 => {
                        Some(prune(cache, v, &self.model, &self.dataset, cfg.gamma, b)?)
                    }
                    _ => None,
                };
                let candidates = pruned.as_ref().map_or_else(|| pool.clone(), |p| p.candidates.clone());
                let table = score_all(v, &self.model, &self.dataset, cfg.gamma, Some(&candidates), &counter)?;
                (select_top_b(&table, b)?, candidates, Some(table), pruned)
            }
            Some(kind) => {
                let scores = baseline_scores(kind, &self.model, &self.dataset, v.as_ref(), Some(&pool))?;
                if kind.needs_v() {
                    counter.add(pool.len() as u64);
                }
                (scores.select(b)?, pool.clone(), None, None)
            }
        };
        self.pending = Some(PendingRound {
            k,
            selection,
            candidates,
            uncleaned: pool.len(),
            v,
            table,
            prune: pruned,
            influence_evals: counter.get(),
            warnings,
            select_ms: elapsed_ms(start),
        });
        Ok(())
    }

    /// Annotator labels (0-based) the current strategy needs from the
    /// simulated pool for the pending selection.
    pub fn simulated_annotations(&self) -> Result<BTreeMap<usize, Vec<usize>>> {
        let need = self.config.strategy.required_annotations();
        let mut out = BTreeMap::new();
        let Some(pending) = &self.pending else {
            return Ok(out);
        };
        if need == 0 {
            return Ok(out);
        }
        let pool = self
            .pool
            .as_ref()
            .ok_or_else(|| ChefError::Argument("no simulated annotators configured".into()))?;
        for id in pending.selection.ids() {
            let labels = pool
                .labels_for(id, need)
                .ok_or_else(|| ChefError::IncompleteAnnotation(vec![id]))?;
            out.insert(id, labels);
        }
        Ok(out)
    }

    /// Resolves the pending selection with `annotations` (0-based classes per
    /// sample), applies the labels, refreshes the model and prepares the
    /// next round.
    pub fn advance(&mut self, annotations: &BTreeMap<usize, Vec<usize>>) -> Result<&RoundReport> {
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| ChefError::Argument("session has finished".into()))?;
        let c = self.dataset.num_classes();
        if let Some((id, _)) = annotations.iter().find(|(_, ls)| ls.iter().any(|&l| l >= c)) {
            return Err(ChefError::Argument(format!("annotation for sample {id} is out of range")));
        }
        let resolved = resolve_labels(self.config.strategy, &pending.selection, annotations)?;
        let pending = self.pending.take().unwrap();

        let start = Instant::now();
        let mut edits = CleanedSet::new();
        let mut applied = Vec::new();
        let mut ties = 0;
        for item in &pending.selection.items {
            self.selected.insert(item.id);
            match resolved[&item.id] {
                Resolved::Class(class) => {
                    let old = self.dataset.label(item.id).clone();
                    self.dataset.clean(item.id, class)?;
                    edits.insert(
                        item.id,
                        LabelEdit {
                            old,
                            new: self.dataset.label(item.id).clone(),
                        },
                    );
                    applied.push(AppliedReport {
                        id: item.id,
                        class: Some(class + 1),
                    });
                }
                Resolved::Tie => {
                    ties += 1;
                    applied.push(AppliedReport { id: item.id, class: None });
                }
            }
        }
        self.cleaned += edits.len();
        self.spent += edits.len() + if self.config.tie_consumes_budget { ties } else { 0 };
        if let Some(cache) = &mut self.cache {
            cache.evict(&pending.selection.ids());
        }

        let mut grad_evals = GradEvals {
            influence: pending.influence_evals,
            candidates: pending.candidates.len(),
            uncleaned: pending.uncleaned,
            ..GradEvals::default()
        };
        let mut warnings = pending.warnings.clone();
        if !edits.is_empty() {
            let trace = match self.config.updater {
                Updater::Retrain => {
                    let (_, trace) = train_sgd(&self.dataset, &self.config.train_config())?;
                    grad_evals.update_exact = trace.iterations();
                    grad_evals.update_samples = trace.schedule.batches.iter().map(|b| b.len as u64).sum();
                    trace
                }
                Updater::Deltagrad => {
                    let out = deltagrad_update(&self.trace, &self.dataset, &edits, &self.config.delta, self.config.gamma)?;
                    grad_evals.update_exact = out.counters.exact_evals;
                    grad_evals.update_fallback = out.counters.fallback_evals;
                    grad_evals.update_samples = out.counters.sample_grad_evals;
                    warnings.extend(out.warning);
                    out.trace
                }
            };
            self.model = select_early_stop(&trace, &self.dataset)?.params;
            self.trace = trace;
        }
        let update_ms = elapsed_ms(start);
        let k = pending.k;
        let metric = evaluate(&self.model, &self.dataset, k + 1)?;
        self.rounds.push(RoundReport {
            k,
            selected: pending
                .selection
                .items
                .iter()
                .map(|s| SelectedReport {
                    id: s.id,
                    suggested: s.class.map(|c| c + 1),
                    score: s.score,
                })
                .collect(),
            applied,
            f1_val: metric.f1_val,
            f1_test: metric.f1_test,
            grad_evals,
            warnings,
            ms: Timings {
                select: pending.select_ms,
                update: update_ms,
            },
        });
        self.metrics.push(metric);
        self.prepare()?;
        Ok(self.rounds.last().unwrap())
    }
}

/// One round with simulated annotators.
pub fn run_round(session: &mut Session) -> Result<&RoundReport> {
    let annotations = session.simulated_annotations()?;
    session.advance(&annotations)
}

/// Runs rounds with simulated annotators until the session finishes.
pub fn run_pipeline(config: PipelineConfig, dataset: Dataset) -> Result<Report> {
    if config.annotators == AnnotatorConfig::Service && config.strategy.required_annotations() > 0 {
        return Err(ChefError::Argument("run_pipeline needs simulated annotators".into()));
    }
    let mut session = Session::new(config, dataset)?;
    while !session.is_done() {
        run_round(&mut session)?;
    }
    Ok(session.report())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gaussian_blobs, synth_probabilistic_labels, BlobSpec};
    use crate::model::TrainConfig;
    use crate::pipeline::Strategy;

    fn noisy() -> Dataset {
        let ds = gaussian_blobs(&BlobSpec::new(300, 4, 2, 13)).unwrap();
        synth_probabilistic_labels(&ds, 0.3, 13).unwrap()
    }

    fn config(budget: usize, b: usize) -> PipelineConfig {
        PipelineConfig {
            budget,
            batch_b: b,
            train: TrainConfig {
                epochs: 10,
                batch_size: 64,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn single_round_when_b_equals_budget() {
        let report = run_pipeline(config(10, 10), noisy()).unwrap();
        assert_eq!(report.rounds.len(), 1);
        assert_eq!(report.spent, 10);
        assert_eq!(report.status, Status::BudgetExhausted);
    }

    #[test]
    fn zero_target_stops_immediately() {
        let cfg = PipelineConfig {
            early_stop_f1: Some(0.0),
            ..config(30, 10)
        };
        let report = run_pipeline(cfg, noisy()).unwrap();
        assert!(report.rounds.is_empty());
        assert_eq!(report.status, Status::TargetReached);
    }

    #[test]
    fn budget_is_conserved_and_no_sample_repeats() {
        let report = run_pipeline(config(25, 10), noisy()).unwrap();
        let sizes: Vec<usize> = report.rounds.iter().map(|r| r.selected.len()).collect();
        assert_eq!(sizes, vec![10, 10, 5]);
        let mut ids: Vec<usize> = report.rounds.iter().flat_map(|r| r.selected.iter().map(|s| s.id)).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert_eq!(report.cleaned, 25);
    }

    #[test]
    fn updaters_agree_on_the_first_selection() {
        let a = Session::new(config(20, 10), noisy()).unwrap();
        let b = Session::new(
            PipelineConfig {
                updater: Updater::Retrain,
                ..config(20, 10)
            },
            noisy(),
        )
        .unwrap();
        assert_eq!(a.pending().unwrap().selection, b.pending().unwrap().selection);
    }

    #[test]
    fn all_tie_round_keeps_the_model() {
        let ds = gaussian_blobs(&BlobSpec::new(300, 4, 3, 2)).unwrap();
        let ds = synth_probabilistic_labels(&ds, 0.3, 2).unwrap();
        let cfg = PipelineConfig {
            strategy: Strategy::One,
            ..config(20, 10)
        };
        let mut s = Session::new(cfg, ds).unwrap();
        let before = s.model().clone();
        let ids = s.pending().unwrap().selection.ids();
        let split: BTreeMap<usize, Vec<usize>> = ids.iter().map(|&id| (id, vec![0, 1, 2])).collect();
        let round = s.advance(&split).unwrap();
        assert!(round.applied.iter().all(|a| a.class.is_none()));
        assert_eq!(s.model(), &before);
        assert_eq!(s.k(), 1);
        assert_eq!(s.spent(), 10);
        assert!(s.pending().unwrap().selection.ids().iter().all(|id| !ids.contains(id)));
    }

    #[test]
    fn incomplete_annotations_leave_the_session_untouched() {
        let cfg = PipelineConfig {
            strategy: Strategy::One,
            ..config(20, 10)
        };
        let mut s = Session::new(cfg, noisy()).unwrap();
        let err = s.advance(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ChefError::IncompleteAnnotation(ids) if ids.len() == 10));
        assert_eq!(s.k(), 0);
        assert!(s.pending().is_some());
    }
}
