use std::collections::BTreeMap;

use proptest::prelude::*;

use chef_core::dataio::{
    gaussian_blobs, load_dataset, simulate_annotators, synth_probabilistic_labels, write_dataset, BlobSpec, Dataset,
    FeatureFormat, LabelState, Split,
};
use chef_core::deltagrad::{lbfgs_product, LbfgsHistory};
use chef_core::increm::{build_provenance, prune};
use chef_core::influence::{score_all, select_top_b, val_grad_product, EvalCounter, InfluenceTable, SampleScores};
use chef_core::model::{objective, objective_grad, replay, train_sgd, ModelParams, TrainConfig};
use chef_core::numerics::SolverConfig;
use chef_core::par::with_threads;
use chef_core::pipeline::{aggregate_majority, Resolved};

fn prob_vec(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn small_task(seed: u64, c: usize) -> Dataset {
    let ds = gaussian_blobs(&BlobSpec::new(90, 4, c, seed)).unwrap();
    synth_probabilistic_labels(&ds, 0.4, seed).unwrap()
}

fn random_params(ds: &Dataset, weights: &[f64]) -> ModelParams {
    let m = ds.param_dim();
    let w = (0..m).map(|i| weights[i % weights.len()]).collect();
    ModelParams::from_weights(w, ds.num_classes(), ds.dim(), 0.02).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_is_linear_in_the_label(
        x in prop::collection::vec(-3.0f64..3.0, 4),
        w in prop::collection::vec(-2.0f64..2.0, 15),
        y1 in prob_vec(3),
        y2 in prob_vec(3),
        alpha in 0.0f64..1.0,
    ) {
        let mut xb = x.clone();
        xb.push(1.0);
        let params = ModelParams::from_weights(w, 3, 5, 0.01).unwrap();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let lhs = params.loss_sample(&xb, &LabelState::Probabilistic(mix));
        let rhs = alpha * params.loss_sample(&xb, &LabelState::Probabilistic(y1))
            + (1.0 - alpha) * params.loss_sample(&xb, &LabelState::Probabilistic(y2));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sample_gradient_matches_central_differences(
        x in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(-1.5f64..1.5, 12),
        y in prob_vec(3),
    ) {
        let mut xb = x.clone();
        xb.push(1.0);
        let params = ModelParams::from_weights(w, 3, 4, 0.01).unwrap();
        let label = LabelState::Probabilistic(y);
        let g = params.grad_sample(&xb, &label);
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p.weights[k] += eps;
            let mut q = params.clone();
            q.weights[k] -= eps;
            let fd = (p.loss_sample(&xb, &label) - q.loss_sample(&xb, &label)) / (2.0 * eps);
            prop_assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn objective_gradient_matches_central_differences(seed in 0u64..500, w in prop::collection::vec(-1.0f64..1.0, 7)) {
        let ds = small_task(seed, 2);
        let params = random_params(&ds, &w);
        let g = objective_grad(&params, &ds, 0.8);
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p.weights[k] += eps;
            let mut q = params.clone();
            q.weights[k] -= eps;
            let fd = (objective(&p, &ds, 0.8) - objective(&q, &ds, 0.8)) / (2.0 * eps);
            prop_assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn top_b_matches_brute_force(
        scores in prop::collection::vec(prop::collection::vec(-5i32..5, 2), 1..40),
        b in 1usize..12,
    ) {
        // integer-valued scores force plenty of ties
        let rows: Vec<SampleScores> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| SampleScores::new(3 * i + 1, s.iter().map(|&v| v as f64).collect()))
            .collect();
        let table = InfluenceTable { rows, warning: None };
        let picked = select_top_b(&table, b).unwrap();
        let mut brute: Vec<(f64, usize)> = table.rows.iter().map(|r| (r.best_score, r.id)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = brute.iter().take(b).map(|p| p.1).collect();
        prop_assert_eq!(picked.ids(), expect);
        prop_assert_eq!(picked.short, b > table.len());
    }

    #[test]
    fn majority_vote_ignores_order(mut labels in prop::collection::vec(0usize..3, 1..7), rot in 0usize..7) {
        let before = aggregate_majority(&labels);
        let r = rot % labels.len();
        labels.rotate_left(r);
        prop_assert_eq!(aggregate_majority(&labels), before);
        let mut counts = BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        match before {
            Resolved::Class(c) => prop_assert!(2 * counts[&c] > labels.len()),
            Resolved::Tie => prop_assert!(counts.values().all(|&n| 2 * n <= labels.len())),
        }
    }

    #[test]
    fn annotators_flip_the_requested_count(seed in 0u64..1000, rate in 0.0f64..0.5, k in 1usize..4) {
        let ds = gaussian_blobs(&BlobSpec::new(80, 2, 3, seed)).unwrap();
        let pool = simulate_annotators(&ds, k, rate, seed).unwrap();
        let n = ds.ids(Split::Train).len();
        let expect = (rate * n as f64).round() as usize;
        for a in &pool.annotators {
            let flips = a.iter().filter(|(id, c)| ds.ground_truth(**id) != Some(**c)).count();
            prop_assert_eq!(flips, expect);
        }
    }

    #[test]
    fn secant_condition_holds_for_the_latest_pair(
        s1 in prop::collection::vec(-1.0f64..1.0, 5),
        s2 in prop::collection::vec(-1.0f64..1.0, 5),
        diag in prop::collection::vec(0.5f64..4.0, 5),
    ) {
        // curvature pairs of a diagonal quadratic
        let y = |s: &[f64]| s.iter().zip(&diag).map(|(a, d)| a * d).collect::<Vec<f64>>();
        prop_assume!(s1.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        prop_assume!(s2.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let mut h = LbfgsHistory::new(2);
        prop_assert!(h.push(s1.clone(), y(&s1)));
        prop_assert!(h.push(s2.clone(), y(&s2)));
        let bs = lbfgs_product(&h, &s2).unwrap();
        for (a, b) in bs.iter().zip(y(&s2)) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn selection_is_invariant_to_scaling_v(seed in 0u64..200, factor in 0.01f64..100.0) {
        let ds = small_task(seed, 3);
        let cfg = TrainConfig { epochs: 10, batch_size: 32, ..TrainConfig::default() };
        let (params, _) = train_sgd(&ds, &cfg).unwrap();
        let v = val_grad_product(&params, &ds, 0.8, &SolverConfig::default()).unwrap();
        let counter = EvalCounter::new();
        let a = score_all(&v, &params, &ds, 0.8, None, &counter).unwrap();
        let b = score_all(&v.scaled(factor), &params, &ds, 0.8, None, &counter).unwrap();
        let sa = select_top_b(&a, 5).unwrap();
        let sb = select_top_b(&b, 5).unwrap();
        prop_assert_eq!(sa.ids(), sb.ids());
        let ca: Vec<_> = sa.items.iter().map(|s| s.class).collect();
        let cb: Vec<_> = sb.items.iter().map(|s| s.class).collect();
        prop_assert_eq!(ca, cb);
    }

    #[test]
    fn prune_at_w0_is_exactly_top_b(seed in 0u64..200, b in 1usize..8) {
        let ds = small_task(seed, 2);
        let cfg = TrainConfig { epochs: 10, batch_size: 32, ..TrainConfig::default() };
        let (params, _) = train_sgd(&ds, &cfg).unwrap();
        let solver = SolverConfig::default();
        let cache = build_provenance(&params, &ds, &solver).unwrap();
        let v = val_grad_product(&params, &ds, 0.8, &solver).unwrap();
        let pruned = prune(&cache, &v, &params, &ds, 0.8, b).unwrap();
        let table = score_all(&v, &params, &ds, 0.8, None, &EvalCounter::new()).unwrap();
        let mut top = select_top_b(&table, b).unwrap().ids();
        top.sort_unstable();
        prop_assert_eq!(pruned.candidates, top);
    }

    #[test]
    fn replay_is_bit_exact(seed in 0u64..200, start_frac in 0.0f64..1.0) {
        let ds = small_task(seed, 2);
        let cfg = TrainConfig { epochs: 4, batch_size: 16, seed, ..TrainConfig::default() };
        let (_, trace) = train_sgd(&ds, &cfg).unwrap();
        let start = ((trace.iterations() - 1) as f64 * start_frac) as usize;
        let again = replay(&trace, &ds, cfg.gamma, start);
        prop_assert_eq!(&again[..], &trace.params[start + 1..]);
    }

    #[test]
    fn gradient_is_thread_count_independent(seed in 0u64..200, w in prop::collection::vec(-1.0f64..1.0, 5)) {
        let ds = small_task(seed, 3);
        let params = random_params(&ds, &w);
        let one = with_threads(1, || objective_grad(&params, &ds, 0.8));
        let three = with_threads(3, || objective_grad(&params, &ds, 0.8));
        prop_assert!(one.iter().zip(&three).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dataset_round_trips(seed in 0u64..300, c in 2usize..4, csv in any::<bool>()) {
        let ds = small_task(seed, c);
        let dir = tempfile::tempdir().unwrap();
        let format = if csv { FeatureFormat::Csv } else { FeatureFormat::Bin };
        let manifest = write_dataset(&ds, dir.path(), format).unwrap();
        let back = load_dataset(&manifest).unwrap();
        prop_assert_eq!(back.content_hash(), ds.content_hash());
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.splits(), ds.splits());
    }
}
