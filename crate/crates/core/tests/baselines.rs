use absa_core::baselines::{fit, BaselineConfig, BaselineKind, BaselineModel, FittedState, TreeNode};
use absa_core::corpus::{split, synth_generate, LabelField, SplitSpec, SynthSpec};
use absa_core::textprep::{fit_vocab, tfidf_fit, Normalizer};
use absa_core::Matrix;
use proptest::prelude::*;

fn hand_fixture() -> (Matrix, Vec<usize>) {
    let x = Matrix::from_rows(vec![
        vec![2.0, 1.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 2.0],
        vec![0.0, 0.0, 1.0],
    ]);
    (x, vec![0, 0, 1, 1])
}

#[test]
fn naive_bayes_matches_hand_posterior() {
    // alpha = 1, V = 3. Class 0 counts (3,1,0) give likelihoods (4,2,1)/7;
    // class 1 counts (0,1,3) give (1,2,4)/7. Priors are 1/2 each.
    let (x, y) = hand_fixture();
    let m = fit(BaselineKind::NaiveBayes, &x, &y, 2, &BaselineConfig::default(), 0).unwrap();
    let q = Matrix::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 2.0], vec![1.0, 1.0, 1.0]]);
    let proba = m.predict_proba(&q).unwrap().unwrap();
    let expected = [[0.8, 0.2], [1.0 / 17.0, 16.0 / 17.0], [0.5, 0.5]];
    for (row, want) in proba.iter().zip(expected) {
        for (p, w) in row.iter().zip(want) {
            assert!((p - w).abs() < 1e-12, "{row:?} vs {want:?}");
        }
    }
    // The last query is an exact tie.
    assert_eq!(m.predict(&q).unwrap(), vec![0, 1, 0]);
    let Some(FittedState::NaiveBayes(s)) = m.state() else { panic!() };
    assert!((s.log_likelihood[0][0] - (4.0f64 / 7.0).ln()).abs() < 1e-15);
}

#[test]
fn naive_bayes_on_duplicated_data() {
    let (x, y) = hand_fixture();
    let rows: Vec<Vec<f64>> = x.iter_rows().chain(x.iter_rows()).map(<[f64]>::to_vec).collect();
    let x2 = Matrix::from_rows(rows);
    let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
    let state = |m: &BaselineModel| match m.state() {
        Some(FittedState::NaiveBayes(s)) => s.clone(),
        _ => panic!(),
    };
    let cfg = |alpha| BaselineConfig {
        nb_alpha: alpha,
        ..BaselineConfig::default()
    };
    let once = state(&fit(BaselineKind::NaiveBayes, &x, &y, 2, &cfg(1.0), 0).unwrap());
    let twice = state(&fit(BaselineKind::NaiveBayes, &x2, &y2, 2, &cfg(1.0), 0).unwrap());
    assert_eq!(once.log_prior, twice.log_prior);
    // Doubling counts only cancels when the smoothing doubles too.
    let twice_scaled = state(&fit(BaselineKind::NaiveBayes, &x2, &y2, 2, &cfg(2.0), 0).unwrap());
    for (a, b) in once.log_likelihood.iter().flatten().zip(twice_scaled.log_likelihood.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn svm_holds_one_weight_vector_per_class() {
    let x = Matrix::from_rows((0..9).map(|i| vec![(i % 3) as f64, 1.0, (i / 3) as f64, 0.5]).collect());
    let y: Vec<usize> = (0..9).map(|i| i % 3).collect();
    let m = fit(BaselineKind::LinearSvm, &x, &y, 3, &BaselineConfig::default(), 0).unwrap();
    let Some(FittedState::LinearSvm(s)) = m.state() else { panic!() };
    assert_eq!(s.weights.len(), 3);
    assert!(s.weights.iter().all(|w| w.len() == 4));
    assert_eq!(s.bias.len(), 3);
    assert!(m.predict_proba(&x).unwrap().is_none());
}

#[test]
fn logistic_regression_with_zero_weights_predicts_class_zero() {
    let (x, y) = hand_fixture();
    let m = fit(BaselineKind::LogisticRegression, &x, &y, 2, &BaselineConfig::default(), 0).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&m.to_checkpoint().unwrap()).unwrap();
    let state = &mut value["model"]["state"];
    state["weights"] = serde_json::json!([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    state["bias"] = serde_json::json!([0.0, 0.0]);
    let zeroed = BaselineModel::from_checkpoint(&value.to_string()).unwrap();
    assert_eq!(zeroed.predict(&x).unwrap(), vec![0; 4]);
    assert_eq!(zeroed.predict_proba(&x).unwrap().unwrap()[0], vec![0.5, 0.5]);
}

#[test]
fn single_tree_forest_follows_its_tree() {
    let x = Matrix::from_rows((0..30).map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64]).collect());
    let y: Vec<usize> = (0..30).map(|i| usize::from(i % 7 > 3) + usize::from(i % 5 == 0)).collect();
    let cfg = BaselineConfig {
        rf_trees: 1,
        ..BaselineConfig::default()
    };
    let m = fit(BaselineKind::RandomForest, &x, &y, 3, &cfg, 9).unwrap();
    let Some(FittedState::RandomForest(f)) = m.state() else { panic!() };
    assert_eq!(f.trees.len(), 1);
    let tree = &f.trees[0];
    let leaf_class = |row: &[f64]| {
        let mut i = 0;
        loop {
            match &tree.nodes[i] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right }
                }
            }
        }
    };
    let expected: Vec<usize> = x.iter_rows().map(leaf_class).collect();
    assert_eq!(m.predict(&x).unwrap(), expected);
}

#[test]
fn forest_is_deterministic_per_seed() {
    let x = Matrix::from_rows((0..40).map(|i| vec![((i * 7) % 11) as f64, ((i * 3) % 5) as f64]).collect());
    let y: Vec<usize> = (0..40).map(|i| ((i * 7) % 11 > 5) as usize).collect();
    let cfg = BaselineConfig {
        rf_trees: 15,
        ..BaselineConfig::default()
    };
    let a = fit(BaselineKind::RandomForest, &x, &y, 2, &cfg, 5).unwrap();
    let b = fit(BaselineKind::RandomForest, &x, &y, 2, &cfg, 5).unwrap();
    assert_eq!(a.state(), b.state());
    assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    assert_eq!(a.to_checkpoint().unwrap(), b.to_checkpoint().unwrap());
}

#[test]
fn max_depth_and_min_split_are_respected() {
    let x = Matrix::from_rows((0..50).map(|i| vec![i as f64, ((i * 13) % 17) as f64]).collect());
    let y: Vec<usize> = (0..50).map(|i| ((i * 13) % 17 % 2) as usize).collect();
    let cfg = BaselineConfig {
        rf_trees: 5,
        rf_max_depth: Some(2),
        ..BaselineConfig::default()
    };
    let m = fit(BaselineKind::RandomForest, &x, &y, 2, &cfg, 1).unwrap();
    let Some(FittedState::RandomForest(f)) = m.state() else { panic!() };
    assert!(f.trees.iter().all(|t| t.depth() <= 2));
    let stump = BaselineConfig {
        rf_trees: 5,
        rf_min_samples_split: 1000,
        ..BaselineConfig::default()
    };
    let m = fit(BaselineKind::RandomForest, &x, &y, 2, &stump, 1).unwrap();
    let Some(FittedState::RandomForest(f)) = m.state() else { panic!() };
    assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
}

fn tfidf_task(field: LabelField, seed: u64) -> (Matrix, Vec<usize>, Matrix, Vec<usize>, usize) {
    let ds = synth_generate(&SynthSpec::new(400, seed, 1.0)).unwrap();
    let (train, test) = split(&ds, &SplitSpec::new(0.7, seed)).unwrap();
    let nz = Normalizer::default();
    let docs = |d: &absa_core::corpus::Dataset| -> Vec<Vec<String>> { d.records.iter().map(|c| nz.tokens(&c.text)).collect() };
    let (train_docs, test_docs) = (docs(&train), docs(&test));
    let vocab = fit_vocab(&train_docs, 5000, 1).unwrap();
    let tfidf = tfidf_fit(&train_docs, &vocab).unwrap();
    (
        tfidf.transform_all(&train_docs),
        train.labels(field),
        tfidf.transform_all(&test_docs),
        test.labels(field),
        ds.num_classes(field),
    )
}

#[test]
fn every_baseline_beats_majority_by_fifteen_points_on_separable_data() {
    for field in [LabelField::Aspect, LabelField::Polarity] {
        let (xtr, ytr, xte, yte, classes) = tfidf_task(field, 2);
        let mut counts = vec![0usize; classes];
        for &l in &yte {
            counts[l] += 1;
        }
        let majority = *counts.iter().max().unwrap() as f64 / yte.len() as f64;
        for kind in BaselineKind::ALL {
            let m = fit(kind, &xtr, &ytr, classes, &BaselineConfig::default(), 7).unwrap();
            let pred = m.predict(&xte).unwrap();
            let acc = pred.iter().zip(&yte).filter(|(p, t)| p == t).count() as f64 / yte.len() as f64;
            assert!(acc >= majority + 0.15, "{kind} on {field}: {acc} vs majority {majority}");
        }
    }
}

#[test]
fn probability_rows_sum_to_one() {
    let (xtr, ytr, xte, _, classes) = tfidf_task(LabelField::Polarity, 3);
    for kind in [BaselineKind::NaiveBayes, BaselineKind::LogisticRegression] {
        let m = fit(kind, &xtr, &ytr, classes, &BaselineConfig::default(), 0).unwrap();
        for row in m.predict_proba(&xte).unwrap().unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{kind}");
        }
    }
}

fn small_problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    (6usize..20).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), n),
            prop::collection::vec(0usize..3, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refit_on_permuted_rows_changes_nothing((rows, mut y, perm) in small_problem()) {
        y[0] = 0;
        y[1] = 1;
        y[2] = 2;
        let x = Matrix::from_rows(rows);
        let xp = x.select_rows(&perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let cfg = BaselineConfig { rf_trees: 7, logreg_max_iter: 200, ..BaselineConfig::default() };
        for kind in [BaselineKind::NaiveBayes, BaselineKind::LogisticRegression, BaselineKind::RandomForest] {
            let a = fit(kind, &x, &y, 3, &cfg, 11).unwrap();
            let b = fit(kind, &xp, &yp, 3, &cfg, 11).unwrap();
            prop_assert_eq!(a.state(), b.state());
        }
    }
}
