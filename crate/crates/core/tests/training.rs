use colearn::augment::Normalization;
use colearn::data::{build_symmetric, corrupt_labels, generate_synthetic};
use colearn::eval::{argmax, memorization_metrics, normalized_inputs, test_accuracy};
use colearn::model::{predict_probs, ModelParams, NetworkConfig};
use colearn::train::{lr_at, run_training, run_training_with, Method, TrainConfig};

#[test]
fn standard_ce_loss_falls_on_clean_data() {
    let (train, test) = generate_synthetic(5, 500, 100, 8, 4).unwrap();
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::for_method(Method::StandardCe) };
    let out = run_training(&train, &test, &cfg).unwrap();
    let first = out.trace.first().unwrap();
    let last = out.trace.last().unwrap();
    assert!(last.l_sup < first.l_sup, "{} -> {}", first.l_sup, last.l_sup);
    assert!(first.l_sup < 5f64.ln() + 0.2, "first epoch loss {} far above ln C", first.l_sup);
    assert!(last.test_accuracy > 0.5, "accuracy {}", last.test_accuracy);
    // Without noise the noisy subset is empty.
    assert!(out.trace.iter().all(|r| r.noisy_subset_memorization == -1.0 && r.l_int == 0.0 && r.l_str == 0.0));
}

#[test]
fn every_method_trains_and_reports_its_terms() {
    let (clean, test) = generate_synthetic(3, 90, 30, 8, 1).unwrap();
    let train = corrupt_labels(&clean, &build_symmetric(3, 0.3, false).unwrap(), 2).unwrap();
    for method in Method::ALL {
        let cfg = TrainConfig { epochs: 2, encoder_widths: vec![32], projection_hidden: 16, projection_dim: 8, ..TrainConfig::for_method(method) };
        let mut seen = 0;
        let out = run_training_with(&train, &test, &cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 2);
        for r in &out.trace {
            assert!((r.l_total - (r.l_sup + r.l_int + r.l_str)).abs() < 1e-9, "{method}: {r:?}");
            let contrastive = !matches!(method, Method::StandardCe | Method::CeMixup);
            assert_eq!(r.l_int != 0.0, contrastive, "{method}: l_int {}", r.l_int);
            let structural = contrastive && method != Method::ColearningNoStr;
            assert_eq!(r.l_str != 0.0, structural, "{method}: l_str {}", r.l_str);
            assert!((0.0..=1.0).contains(&r.test_accuracy));
        }
    }
}

#[test]
fn constant_model_memorizes_one_class_in_c() {
    // Zero parameters give all-zero logits, so every prediction is class 0.
    // A corrupted label is uniform over the C-1 wrong classes, so it is 0
    // with probability (C-1)/C · 1/(C-1) = 1/C on balanced data.
    let c = 10;
    let (clean, _) = generate_synthetic(c, 5000, 10, 8, 0).unwrap();
    let train = corrupt_labels(&clean, &build_symmetric(c, 0.5, false).unwrap(), 1).unwrap();
    let params = ModelParams::zeros(&NetworkConfig::new(8 * 8 * 3, c)).unwrap();
    let (clean_acc, memo) = memorization_metrics(&params, &train, &Normalization::identity(3)).unwrap();
    let noisy_n = train.corruption_mask().iter().filter(|&&m| m).count() as f64;
    let expected = 1.0 / c as f64;
    let sd = (expected * (1.0 - expected) / noisy_n).sqrt();
    assert!((memo - expected).abs() < 4.0 * sd, "memorization {memo}, expected {expected} ± {sd}");
    assert!((clean_acc - 0.1).abs() < 0.03, "clean accuracy {clean_acc}");
}

#[test]
fn test_accuracy_matches_a_sample_by_sample_loop() {
    let (train, test) = generate_synthetic(4, 80, 37, 8, 9).unwrap();
    let cfg = TrainConfig { epochs: 1, encoder_widths: vec![16], ..TrainConfig::for_method(Method::StandardCe) };
    let out = run_training(&train, &test, &cfg).unwrap();
    let norm = Normalization::from_dataset(&train);
    let mut hits = 0;
    for i in 0..test.len() {
        let x = normalized_inputs(&test, i, i + 1, &norm).unwrap();
        let probs = predict_probs(&out.params, &x).unwrap();
        hits += usize::from(argmax(probs.row(0)) == test.clean_labels()[i]);
    }
    let oracle = hits as f64 / test.len() as f64;
    assert_eq!(test_accuracy(&out.params, &test, &norm).unwrap(), oracle);
    assert_eq!(out.trace.last().unwrap().test_accuracy, oracle);
}

#[test]
fn learning_rate_holds_then_decays_linearly() {
    let cfg = TrainConfig { epochs: 30, lr: 1e-3, ..TrainConfig::default() };
    assert_eq!(cfg.decay_start(), 12);
    for e in 0..=12 {
        assert_eq!(lr_at(e, &cfg), 1e-3);
    }
    assert!(lr_at(29, &cfg) > 0.0);
    let diffs: Vec<f64> = (12..29).map(|e| lr_at(e, &cfg) - lr_at(e + 1, &cfg)).collect();
    assert!(diffs.iter().all(|d| (d - diffs[0]).abs() < 1e-15 && *d > 0.0), "{diffs:?}");
}

#[test]
fn runs_are_pure_functions_of_config_and_seed() {
    let (clean, test) = generate_synthetic(3, 60, 15, 8, 3).unwrap();
    let train = corrupt_labels(&clean, &build_symmetric(3, 0.4, false).unwrap(), 3).unwrap();
    let cfg = |seed| TrainConfig { epochs: 2, seed, encoder_widths: vec![16], ..TrainConfig::for_method(Method::Colearning) };
    let a = run_training(&train, &test, &cfg(5)).unwrap();
    let b = run_training(&train, &test, &cfg(5)).unwrap();
    let c = run_training(&train, &test, &cfg(6)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace, b.trace);
    assert_ne!(a.params, c.params);
}
