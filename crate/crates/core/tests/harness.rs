mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Mutex;

use hdf_core::cache::{CacheError, FeatureCache};
use hdf_core::classifier::GridSearchConfig;
use hdf_core::features::{Backbone, BackendKind, FeatureError};
use hdf_core::harness::*;
use hdf_core::synth::{stub_backends, write_synthetic_dataset};
use hdf_core::Tensor;

fn fake_manifest(sizes: &[usize]) -> DatasetManifest {
    DatasetManifest {
        name: "fake".into(),
        classes: sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| ClassEntry {
                name: format!("k{k}"),
                paths: (0..n).map(|i| PathBuf::from(format!("/x/k{k}/{i:04}.ppm"))).collect(),
            })
            .collect(),
    }
}

fn check_plan(m: &DatasetManifest, plan: &SplitPlan, reps: usize, train: usize, test: Option<usize>) {
    assert_eq!(plan.repetitions.len(), reps);
    for rep in &plan.repetitions {
        for (k, class) in m.classes.iter().enumerate() {
            let (tr, te) = (&rep.train[k], &rep.test[k]);
            assert_eq!(tr.len(), train);
            assert_eq!(te.len(), test.unwrap_or(class.paths.len() - train));
            let a: BTreeSet<_> = tr.iter().collect();
            let b: BTreeSet<_> = te.iter().collect();
            assert_eq!(a.len(), tr.len());
            assert_eq!(b.len(), te.len());
            assert!(a.is_disjoint(&b));
            assert!(tr.iter().chain(te).all(|&i| i < class.paths.len()));
        }
    }
}

#[test]
fn preset_protocols_have_published_sizes() {
    let m = fake_manifest(&[100, 120, 100]);
    let plan = make_split(&m, &SplitProtocol::mit67(1)).unwrap();
    check_plan(&m, &plan, 1, 80, Some(20));

    let m = fake_manifest(&[210, 300, 241]);
    let plan = make_split(&m, &SplitProtocol::scene15(1)).unwrap();
    check_plan(&m, &plan, 10, 100, None);

    let m = fake_manifest(&[137, 200, 130, 190]);
    let plan = make_split(&m, &SplitProtocol::event8(1)).unwrap();
    check_plan(&m, &plan, 10, 70, Some(60));
    assert_eq!(plan, make_split(&m, &SplitProtocol::event8(1)).unwrap());
    assert_ne!(plan, make_split(&m, &SplitProtocol::event8(2)).unwrap());
    assert_ne!(plan.repetitions[0], plan.repetitions[1]);
}

/// Records every row index read through it.
struct RecordingStore {
    rows: Vec<Vec<f32>>,
    seen: Mutex<BTreeSet<usize>>,
}

impl FeatureStore for RecordingStore {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn row(&self, i: usize) -> &[f32] {
        self.seen.lock().unwrap().insert(i);
        &self.rows[i]
    }
}

#[test]
fn tuning_reads_only_training_rows() {
    let m = fake_manifest(&[20, 20, 20]);
    let protocol = SplitProtocol { kind: SplitKind::RepeatedRandom, train_per_class: 12, test_per_class: TestCount::Rest, repetitions: 3, seed: 5 };
    let plan = make_split(&m, &protocol).unwrap();
    let labels: Vec<u32> = m.images().map(|(l, _)| l).collect();
    let rows: Vec<Vec<f32>> = labels.iter().enumerate().map(|(i, &l)| vec![l as f32 + (i % 7) as f32 * 0.1, (i % 5) as f32]).collect();
    let offsets = m.class_offsets();
    for rep in &plan.repetitions {
        let global = |sets: &[Vec<usize>]| -> Vec<usize> {
            sets.iter().enumerate().flat_map(|(k, s)| s.iter().map(|&i| offsets[k] + i).collect::<Vec<_>>()).collect()
        };
        let (train, test) = (global(&rep.train), global(&rep.test));
        let store = RecordingStore { rows: rows.clone(), seen: Mutex::new(BTreeSet::new()) };
        let report = tune_cost(&store, &labels, &train, &GridSearchConfig::default()).unwrap();
        assert_eq!(report.entries.len(), 100);
        let seen = store.seen.into_inner().unwrap();
        assert_eq!(seen, train.iter().copied().collect::<BTreeSet<_>>());
        assert!(test.iter().all(|i| !seen.contains(i)));
    }
}

/// Fails the test if the harness tries to run it.
struct Untouchable(BackendKind);

impl Backbone for Untouchable {
    fn kind(&self) -> BackendKind {
        self.0
    }

    fn means(&self) -> [f32; 3] {
        [0.0; 3]
    }

    fn describe(&self, _: &Tensor) -> Result<Vec<f32>, FeatureError> {
        panic!("descriptor should have come from the cache")
    }
}

#[test]
fn cache_is_reused_and_dimension_checked() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&dir.path().join("data"), 2, 3, 16, 1).unwrap();
    let m = scan_dataset(dir.path().join("data")).unwrap().manifest;
    let (o, s) = stub_backends(2).unwrap();
    let cache = cache_file(&dir.path().join("cache"), &backend_digest(&o, &s));
    let first = extract_source_table(&m, &o, &s, Some(&cache)).unwrap();
    assert!(cache.exists());
    let bytes = std::fs::read(&cache).unwrap();
    let again = extract_source_table(&m, &Untouchable(BackendKind::Object), &Untouchable(BackendKind::Scene), Some(&cache)).unwrap();
    assert_eq!(again, first);
    assert_eq!(std::fs::read(&cache).unwrap(), bytes);

    let loaded = FeatureCache::load(&cache).unwrap();
    assert_eq!(loaded.records.len(), 6);
    assert_eq!(loaded.dim, 2048);

    FeatureCache::new(512).save(&cache).unwrap();
    match extract_source_table(&m, &o, &s, Some(&cache)) {
        Err(HarnessError::Cache(CacheError::DimMismatch { expected: 2048, found: 512 })) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn small_experiment_is_separable_complete_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(dir.path(), 3, 10, 24, 3).unwrap();
    let m = scan_dataset(dir.path()).unwrap().manifest;
    let (o, s) = stub_backends(4).unwrap();
    let protocol = SplitProtocol { kind: SplitKind::RepeatedRandom, train_per_class: 6, test_per_class: TestCount::Count(4), repetitions: 2, seed: 9 };
    let mut config = ExperimentConfig::new(protocol);
    config.grid.folds = 3;

    let mut partial = Vec::new();
    let report = run_experiment_with(&m, &o, &s, &config, &mut |r| partial.push(r.rows.len())).unwrap();
    assert_eq!(partial, (1..=8).collect::<Vec<_>>());
    assert!(report.complete);
    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["OP", "OW", "SP", "SW", "HDF", "HDF-max", "HDF-mean", "HDF-min"]);
    assert_eq!(report.costs, (1..=100).collect::<Vec<_>>());
    assert_eq!(report.row("HDF").unwrap().mean_accuracy, 1.0);
    for row in &report.rows {
        assert_eq!(row.repetitions.len(), 2);
        let mean = row.repetitions.iter().map(|r| r.accuracy).sum::<f64>() / 2.0;
        assert!((mean - row.mean_accuracy).abs() <= 1e-9);
        assert!(row.repetitions.iter().all(|r| r.train_size == 18 && r.test_size == 12 && r.cv_curve.len() == 100));
    }

    let rerun = run_experiment(&m, &o, &s, &config).unwrap();
    assert_eq!(rerun.to_json().unwrap(), report.to_json().unwrap());
}

#[test]
fn split_file_overrides_protocol() {
    let m = fake_manifest(&[10, 10]);
    let plan = make_split(&m, &SplitProtocol { kind: SplitKind::FixedPerClass, train_per_class: 7, test_per_class: TestCount::Count(3), repetitions: 1, seed: 0 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    SplitFile::from_plan(&m, &plan).save(&path).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(json["dataset"], "fake");
    assert_eq!(json["repetitions"][0]["train"]["k1"].as_array().unwrap().len(), 7);
    assert_eq!(SplitFile::load(&path).unwrap().to_plan(&m).unwrap(), plan);
    assert!(matches!(SplitFile::load(&path).unwrap().to_plan(&fake_manifest(&[10, 10, 10])), Err(HarnessError::SplitMismatch(_))));
}
