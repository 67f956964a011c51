//! Split, train, score, persist and search, end to end on synthetic data.

use addm_core::grid::best_trial;
use addm_core::synthetic::blobs_with_anomalies;
use addm_core::{
    fit_model, grid_search, load_model, run_ablation, run_experiment, save_model,
    split_and_standardize, Error, ExperimentConfig, GridSpec, LabeledDataset, Method,
};

fn quick(method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        num_features: 64,
        rank: 16,
        encoder: vec![4, 2],
        epochs: 3,
        aff_epochs: Some(2),
        aff_pairs: 200,
        ..Default::default()
    }
}

fn blobs() -> LabeledDataset {
    blobs_with_anomalies(200, 0.1, 5).unwrap()
}

#[test]
fn split_partitions_normals_and_keeps_anomalies_for_testing() {
    let ds = blobs();
    let normals = ds.labels.iter().filter(|&&l| !l).count();
    let anomalies = ds.len() - normals;
    let split = split_and_standardize(&ds, 0.8, 9).unwrap();
    let n_train = (0.8 * normals as f64).round() as usize;
    assert_eq!(split.train.rows(), n_train);
    assert_eq!(split.test.rows(), normals - n_train + anomalies);
    assert_eq!(split.test_labels.iter().filter(|&&l| l).count(), anomalies);
    for j in 0..ds.dim() {
        let mean: f64 = (0..n_train).map(|i| split.train.get(i, j)).sum::<f64>() / n_train as f64;
        assert!(mean.abs() < 1e-12);
    }
}

#[test]
fn experiments_are_bit_reproducible() {
    let ds = blobs();
    for method in Method::ALL {
        let cfg = quick(method);
        let mut a = run_experiment(&ds, &cfg).unwrap();
        let mut b = run_experiment(&ds, &cfg).unwrap();
        a.seconds = None;
        b.seconds = None;
        assert_eq!(a.to_json_line(), b.to_json_line(), "{method}");
        assert_eq!(a.auc_roc.unwrap().to_bits(), b.auc_roc.unwrap().to_bits());
    }
}

#[test]
fn ablation_runs_each_method_on_the_same_split() {
    let ds = blobs();
    let reports = run_ablation(&ds, &quick(Method::Ae), &[Method::Ae, Method::Laddm]).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].method, Method::Ae);
    assert_eq!(reports[1].method, Method::Laddm);
    assert_eq!(reports[0].n_test, reports[1].n_test);
}

#[test]
fn saved_models_score_identically_after_reload() {
    let ds = blobs();
    let dir = tempfile::tempdir().unwrap();
    for method in Method::ALL {
        let cfg = quick(method);
        let split = split_and_standardize(&ds, cfg.train_frac, cfg.seed).unwrap();
        let model = fit_model(&split.train, split.scaler.clone(), &cfg, 0.1).unwrap();
        let path = dir.path().join(format!("{method}.addm"));
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        let before = model.normality_scores(&ds.features).unwrap();
        let after = loaded.normality_scores(&ds.features).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after), "{method}");
        assert_eq!(model.tau.to_bits(), loaded.tau.to_bits());
        assert_eq!(loaded.config, model.config);
        assert_eq!(
            loaded.classify(&ds.features).unwrap(),
            model.classify(&ds.features).unwrap()
        );
    }
}

#[test]
fn corrupted_or_missing_model_files_are_rejected() {
    let ds = blobs();
    let cfg = quick(Method::Addm);
    let split = split_and_standardize(&ds, cfg.train_frac, cfg.seed).unwrap();
    let model = fit_model(&split.train, split.scaler, &cfg, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.addm");
    save_model(&path, &model).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));
    assert!(load_model(dir.path().join("absent.addm")).is_err());
}

#[test]
fn single_point_grid_matches_a_direct_run() {
    let ds = blobs();
    let cfg = quick(Method::Addm);
    let out = grid_search(&ds, &cfg, &GridSpec::single(&cfg), 10).unwrap();
    assert_eq!(out.best_index, 0);
    assert_eq!(out.reports.len(), 1);
    assert!(out.failures.is_empty());
    let mut trial = cfg.clone();
    trial.seed = addm_core::seed::derive_seed(cfg.seed, 0);
    trial.split_seed = Some(cfg.seed);
    let direct = run_experiment(&ds, &trial).unwrap();
    assert_eq!(direct.auc_roc, out.best_report.auc_roc);
}

#[test]
fn grid_budget_caps_the_number_of_trials() {
    let ds = blobs();
    let cfg = quick(Method::Addm);
    let grid = GridSpec {
        gamma: vec![0.5, 1.0, 2.0],
        num_features: vec![16, 32],
        rank: vec![8],
        ..GridSpec::single(&cfg)
    };
    assert_eq!(grid.len(), 6);
    let out = grid_search(&ds, &cfg, &grid, 4).unwrap();
    assert_eq!(out.reports.len() + out.failures.len(), 4);
    let best = out
        .reports
        .iter()
        .map(|(_, r)| r.auc_roc.unwrap())
        .fold(f64::MIN, f64::max);
    assert_eq!(out.best_report.auc_roc.unwrap(), best);
}

#[test]
fn grid_ties_prefer_higher_precision_recall_then_order() {
    let ds = blobs();
    let base = run_experiment(&ds, &quick(Method::Addm)).unwrap();
    let with = |roc: f64, pr: f64| {
        let mut r = base.clone();
        r.auc_roc = Some(roc);
        r.auc_pr = Some(pr);
        r
    };
    let reports = [
        with(0.9, 0.5),
        with(0.9, 0.7),
        with(0.8, 0.99),
        with(0.9, 0.7),
    ];
    assert_eq!(best_trial(&reports), Some(1));
    let undefined = {
        let mut r = with(0.0, 0.0);
        r.auc_roc = None;
        r
    };
    assert_eq!(best_trial(&[undefined, with(0.1, 0.1)]), Some(1));
    assert_eq!(best_trial(&[]), None);
}

#[test]
fn grid_reports_every_failure_when_no_trial_succeeds() {
    let ds = blobs();
    let cfg = quick(Method::Addm);
    let grid = GridSpec {
        gamma: vec![-1.0, 0.0],
        ..GridSpec::single(&cfg)
    };
    match grid_search(&ds, &cfg, &grid, 10) {
        Err(Error::AllTrialsFailed { .. }) => {}
        other => panic!("expected AllTrialsFailed, got {other:?}"),
    }
}

fn kde_oracle_blobs() -> LabeledDataset {
    blobs_with_anomalies(400, 0.05, 11).unwrap()
}

#[test]
fn blob_anomalies_are_ranked_well_by_addm_and_kde() {
    let ds = kde_oracle_blobs();
    let kde = run_experiment(
        &ds,
        &ExperimentConfig {
            method: Method::Kde,
            gamma: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let kde_roc = kde.auc_roc.unwrap();
    assert!(kde_roc >= 0.98, "kde {kde_roc}");
    let small = ExperimentConfig {
        method: Method::Addm,
        gamma: 1.0,
        num_features: 256,
        rank: 32,
        ..Default::default()
    };
    let roc = run_experiment(&ds, &small).unwrap().auc_roc.unwrap();
    assert!(roc >= 0.95, "addm {roc}");
    let large = ExperimentConfig {
        num_features: 4096,
        rank: 4096,
        epochs: 0,
        ..small
    };
    let roc = run_experiment(&ds, &large).unwrap().auc_roc.unwrap();
    assert!((roc - kde_roc).abs() <= 0.05, "addm {roc} vs kde {kde_roc}");
}

#[test]
fn untrained_addm_still_reports() {
    let cfg = ExperimentConfig {
        epochs: 0,
        ..quick(Method::Addm)
    };
    let report = run_experiment(&kde_oracle_blobs(), &cfg).unwrap();
    assert!(report.auc_roc.is_some());
    assert_eq!(report.scores.len(), report.n_test);
}
