use super::*;
use rand::Rng;
use proptest::prelude::*;

fn random_set(seed: u64, n: usize, d: usize, f: impl Fn(&[f64]) -> f64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let y = x.iter().map(|r| f(r)).collect();
    TrainingSet { x, y }
}

fn small_config(n_trees: usize) -> ExtraTreesConfig {
    ExtraTreesConfig {
        n_trees,
        ..Default::default()
    }
}

#[test]
fn candidate_feature_default() {
    let c = ExtraTreesConfig::default();
    assert_eq!(c.candidate_features(7), 3);
    assert_eq!(c.candidate_features(20), 7);
    assert_eq!(c.candidate_features(148), 50);
    assert_eq!(c.candidate_features(1), 1);
}

#[test]
fn constant_targets_predict_exactly() {
    let mut set = random_set(1, 50, 4, |_| 0.0);
    set.y = vec![0.1; 50];
    let m = fit(&set, FeatureLayout::generic(4), &small_config(10), 3).unwrap();
    for x in &set.x {
        assert_eq!(m.predict_values(x).unwrap(), 0.1);
    }
    assert_eq!(m.predict_values(&[5.0, -1.0, 0.3, 9.0]).unwrap(), 0.1);
}

#[test]
fn single_row() {
    let set = TrainingSet {
        x: vec![vec![0.2, 0.4]],
        y: vec![0.77],
    };
    let m = fit(&set, FeatureLayout::generic(2), &small_config(5), 0).unwrap();
    assert_eq!(m.predict_values(&[0.2, 0.4]).unwrap(), 0.77);
}

#[test]
fn single_tree_recovers_training_targets() {
    let set = random_set(2, 200, 3, |r| r[0] * 0.5 + r[2]);
    let m = fit(&set, FeatureLayout::generic(3), &small_config(1), 9).unwrap();
    for (x, y) in set.x.iter().zip(&set.y) {
        assert_eq!(m.predict_values(x).unwrap(), *y);
    }
}

#[test]
fn linear_function_generalizes() {
    let f = |r: &[f64]| 0.3 * r[0] + 0.1 * r[1];
    let train = random_set(3, 500, 2, f);
    let test = random_set(4, 500, 2, f);
    let m = fit(&train, FeatureLayout::generic(2), &ExtraTreesConfig::default(), 1).unwrap();
    let pred: Vec<f64> = test.x.iter().map(|x| m.predict_values(x).unwrap()).collect();
    assert!(r_squared(&test.y, &pred) >= 0.95);
}

#[test]
fn errors() {
    assert!(matches!(
        fit(&TrainingSet::default(), FeatureLayout::generic(2), &small_config(1), 0),
        Err(Error::EmptyTrainingSet)
    ));
    let bad = TrainingSet {
        x: vec![vec![0.0, 1.0], vec![1.0]],
        y: vec![0.0, 1.0],
    };
    assert!(matches!(
        fit(&bad, FeatureLayout::generic(2), &small_config(1), 0),
        Err(Error::InconsistentLayout(_))
    ));
    let set = random_set(5, 10, 2, |r| r[0]);
    let m = fit(&set, FeatureLayout::generic(2), &small_config(2), 0).unwrap();
    assert!(matches!(m.predict_values(&[1.0]), Err(Error::LayoutMismatch(_))));
}

#[test]
fn approach_binding() {
    let a1 = Approach::new(1).unwrap();
    let rows: Vec<FeatureVector> = (0..20)
        .map(|i| FeatureVector {
            approach: a1,
            values: vec![i as f64; 7],
            target: Some(i as f64 / 20.0),
        })
        .collect();
    let m = train(&rows, &small_config(4), 0).unwrap();
    assert_eq!(m.layout.approach, Some(a1));
    assert_eq!(m.layout.columns, a1.column_names());
    let wrong = FeatureVector {
        approach: Approach::new(4).unwrap(),
        values: vec![0.0; 8],
        target: None,
    };
    assert!(matches!(m.predict(&wrong), Err(Error::LayoutMismatch(_))));
    let mut mixed = rows.clone();
    mixed[3].approach = Approach::new(2).unwrap();
    assert!(matches!(train(&mixed, &small_config(1), 0), Err(Error::InconsistentLayout(_))));
    let batch = m.predict_batch(&rows).unwrap();
    for (r, p) in rows.iter().zip(batch) {
        assert_eq!(m.predict(r).unwrap(), p);
    }
}

#[test]
fn min_samples_leaf_is_respected() {
    let set = random_set(6, 120, 3, |r| r[1]);
    let cfg = ExtraTreesConfig {
        n_trees: 5,
        min_samples_leaf: 7,
        max_features: None,
    };
    let m = fit(&set, FeatureLayout::generic(3), &cfg, 2).unwrap();
    for tree in &m.trees {
        let mut counts = vec![0usize; tree.nodes.len()];
        for x in &set.x {
            let mut i = 0;
            while let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = tree.nodes[i]
            {
                i = if x[feature] <= threshold { left } else { right };
            }
            counts[i] += 1;
        }
        for (n, c) in tree.nodes.iter().zip(counts) {
            if matches!(n, Node::Leaf { .. }) {
                assert!(c >= 7);
            }
        }
    }
}

#[test]
fn save_load_round_trip() {
    let set = random_set(7, 300, 5, |r| (r[0] * 3.0).sin() * r[4]);
    let m = fit(&set, FeatureLayout::generic(5), &small_config(20), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.etr");
    save_model(&m, &p).unwrap();
    let back = load_model(&p).unwrap();
    assert_eq!(back, m);
    let probe = random_set(8, 1000, 5, |_| 0.0);
    for x in &probe.x {
        assert_eq!(
            m.predict_values(x).unwrap().to_bits(),
            back.predict_values(x).unwrap().to_bits()
        );
    }
}

#[test]
fn truncated_and_old_files_rejected() {
    let set = random_set(9, 40, 2, |r| r[0]);
    let m = fit(&set, FeatureLayout::generic(2), &small_config(3), 0).unwrap();
    let text = to_text(&m).unwrap();
    let cut = &text[..text.len() - 10];
    assert!(matches!(from_text(cut), Err(Error::CorruptModel(_))));
    assert!(matches!(from_text(""), Err(Error::CorruptModel(_))));
    let old = text.replacen("v1", "v0", 1);
    match from_text(&old) {
        Err(e @ Error::VersionMismatch { .. }) => assert!(e.to_string().contains("version 0")),
        other => panic!("expected VersionMismatch, got {other:?}"),
    }
    let edited = text.replacen("L ", "L 9", 1);
    assert!(matches!(from_text(&edited), Err(Error::CorruptModel(_))));
}

#[test]
fn identical_inputs_identical_bytes() {
    let set = random_set(10, 150, 4, |r| r[0] * r[1]);
    let a = fit(&set, FeatureLayout::generic(4), &small_config(15), 5).unwrap();
    let b = fit(&set, FeatureLayout::generic(4), &small_config(15), 5).unwrap();
    assert_eq!(to_text(&a).unwrap(), to_text(&b).unwrap());
    let c = fit(&set, FeatureLayout::generic(4), &small_config(15), 6).unwrap();
    assert_ne!(to_text(&a).unwrap(), to_text(&c).unwrap());
}

#[test]
fn thread_count_does_not_change_model() {
    let set = random_set(11, 150, 4, |r| r[2] - r[3]);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = one.install(|| fit(&set, FeatureLayout::generic(4), &small_config(12), 1).unwrap());
    let b = fit(&set, FeatureLayout::generic(4), &small_config(12), 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spearman_and_r2() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(r_squared(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
    // ties averaged: ranks (1.5, 1.5, 3) vs (1, 2, 3)
    let s = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
    assert!((s - 0.8660254037844387).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predictions_stay_in_target_range(seed in any::<u64>()) {
        let set = random_set(seed, 80, 3, |r| r[0] * 2.0 - r[1]);
        let m = fit(&set, FeatureLayout::generic(3), &small_config(10), seed).unwrap();
        let (lo, hi) = set.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let probe = random_set(seed ^ 1, 50, 3, |_| 0.0);
        for x in probe.x.iter().chain(&set.x) {
            let p = m.predict_values(&x.iter().map(|v| v * 3.0 - 1.0).collect::<Vec<_>>()).unwrap();
            prop_assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>()) {
        let set = random_set(seed, 60, 3, |r| r[0] + r[1] * r[2]);
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 99));
        let shuffled = TrainingSet {
            x: order.iter().map(|&i| set.x[i].clone()).collect(),
            y: order.iter().map(|&i| set.y[i]).collect(),
        };
        let a = fit(&set, FeatureLayout::generic(3), &small_config(6), 4).unwrap();
        let b = fit(&shuffled, FeatureLayout::generic(3), &small_config(6), 4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn one_more_tree_moves_prediction_boundedly(seed in any::<u64>()) {
        let set = random_set(seed, 60, 3, |r| r[0]);
        let m = fit(&set, FeatureLayout::generic(3), &small_config(11), seed).unwrap();
        let (lo, hi) = set.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut fewer = m.clone();
        fewer.trees.pop();
        for x in random_set(seed ^ 2, 20, 3, |_| 0.0).x {
            let d = (m.predict_values(&x).unwrap() - fewer.predict_values(&x).unwrap()).abs();
            prop_assert!(d <= (hi - lo) / 11.0 + 1e-12);
        }
    }
}
