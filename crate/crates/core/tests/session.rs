use std::collections::BTreeMap;

use chef_core::dataio::{gaussian_blobs, synth_probabilistic_labels, BlobSpec, Dataset, LabelState};
use chef_core::pipeline::{AnnotatorConfig, PipelineConfig, Selector, Session, Status, Strategy};
use chef_core::ChefError;

fn task() -> Dataset {
    let ds = gaussian_blobs(&BlobSpec::new(300, 4, 2, 17)).unwrap();
    synth_probabilistic_labels(&ds, 0.3, 17).unwrap()
}

fn service_config() -> PipelineConfig {
    PipelineConfig {
        budget: 20,
        batch_b: 10,
        strategy: Strategy::Three,
        annotators: AnnotatorConfig::Service,
        ..PipelineConfig::default()
    }
}

#[test]
fn externally_annotated_rounds_apply_majorities() {
    let ds = gaussian_blobs(&BlobSpec::new(300, 4, 3, 17)).unwrap();
    let ds = synth_probabilistic_labels(&ds, 0.3, 17).unwrap();
    let mut session = Session::new(service_config(), ds).unwrap();
    let items = session.pending().unwrap().selection.items.clone();
    assert_eq!(items.len(), 10);
    // the suggestion is one of three votes: outvote it everywhere, split the
    // vote three ways on the first sample
    let mut votes = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let s = item.class.unwrap();
        let v = if i == 0 { vec![(s + 1) % 3, (s + 2) % 3] } else { vec![(s + 1) % 3; 2] };
        votes.insert(item.id, v);
    }
    let report = session.advance(&votes).unwrap().clone();
    assert_eq!(report.applied[0].class, None);
    for (a, item) in report.applied[1..].iter().zip(&items[1..]) {
        assert_eq!(a.class, Some((item.class.unwrap() + 1) % 3 + 1));
    }
    assert!(matches!(session.dataset().label(items[0].id), LabelState::Probabilistic(_)));
    assert_eq!(session.dataset().label(items[1].id), &LabelState::Cleaned((items[1].class.unwrap() + 1) % 3));
    assert_eq!(session.spent(), 10);
    // the tied sample is never offered again
    assert!(!session.pending().unwrap().selection.ids().contains(&items[0].id));
}

#[test]
fn rejected_annotations_leave_the_session_untouched() {
    let mut session = Session::new(service_config(), task()).unwrap();
    let ids = session.pending().unwrap().selection.ids();
    let before = session.report().to_json(false);

    let partial: BTreeMap<usize, Vec<usize>> = ids[1..].iter().map(|&id| (id, vec![0, 0])).collect();
    match session.advance(&partial) {
        Err(ChefError::IncompleteAnnotation(missing)) => assert_eq!(missing, vec![ids[0]]),
        other => panic!("expected IncompleteAnnotation, got {other:?}"),
    }
    let bad: BTreeMap<usize, Vec<usize>> = ids.iter().map(|&id| (id, vec![5, 5])).collect();
    assert!(matches!(session.advance(&bad), Err(ChefError::Argument(_))));

    assert_eq!(session.report().to_json(false), before);
    assert_eq!(session.pending().unwrap().selection.ids(), ids);
}

#[test]
fn finished_sessions_refuse_to_advance() {
    let mut session = Session::new(PipelineConfig { budget: 10, ..service_config() }, task()).unwrap();
    let votes = session.pending().unwrap().selection.ids().into_iter().map(|id| (id, vec![0, 0])).collect();
    session.advance(&votes).unwrap();
    assert_eq!(session.status(), Status::BudgetExhausted);
    assert!(session.is_done());
    assert!(session.advance(&BTreeMap::new()).is_err());
}

#[test]
fn report_json_drops_timings_on_request() {
    let cfg = PipelineConfig {
        budget: 10,
        strategy: Strategy::One,
        selector: Selector::ActiveOne,
        use_increm: false,
        ..PipelineConfig::default()
    };
    let report = chef_core::pipeline::run_pipeline(cfg, task()).unwrap();
    assert!(report.to_json(true).contains("\"ms\""));
    assert!(!report.to_json(false).contains("\"ms\""));
}

#[test]
fn config_rejects_unknown_fields_and_invalid_combinations() {
    let json = serde_json::to_string(&PipelineConfig::default()).unwrap();
    let back: PipelineConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, PipelineConfig::default());
    let extra = json.replacen('{', "{\"bogus\": 1,", 1);
    assert!(serde_json::from_str::<PipelineConfig>(&extra).is_err());

    let baseline_two = PipelineConfig {
        selector: Selector::InflD,
        use_increm: false,
        ..PipelineConfig::default()
    };
    assert!(baseline_two.validate().is_err());
}
