use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_image, make_split, DatasetManifest, HarnessError, SplitPlan, SplitProtocol};
use crate::cache::{FeatureCache, FeatureRecord};
use crate::classifier::{evaluate, grid_search_c, train_ovr_with, GridSearchConfig, GridSearchReport, Matrix};
use crate::engine::write_weights;
use crate::features::{
    derive_feature, extract_sources, Backbone, Backend, FeatureSource, FeatureType, FeatureVector, PoolOp, FEATURE_DIM,
};

const SOURCE_DIM: usize = 4 * FEATURE_DIM;

/// Raw `[OP, OW, SP, SW]` descriptors for every image of a manifest, in
/// [`DatasetManifest::images`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub labels: Vec<u32>,
    pub paths: Vec<String>,
    pub sources: Vec<[FeatureVector; 4]>,
}

impl SourceTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_cache(&self) -> FeatureCache {
        let mut cache = FeatureCache::new(SOURCE_DIM);
        for ((&label, path), s) in self.labels.iter().zip(&self.paths).zip(&self.sources) {
            let values = s.iter().flat_map(|f| f.values().iter().copied()).collect();
            cache.records.push(FeatureRecord { label, path: path.clone(), values });
        }
        cache
    }

    /// Derived classifier inputs for one configuration.
    pub fn derive(&self, config: &FeatureConfig) -> Result<Vec<Vec<f32>>, HarnessError> {
        self.sources
            .par_iter()
            .map(|s| derive_feature(s, config.feature_type, config.pool_op).map_err(HarnessError::from))
            .collect()
    }
}

fn split_sources(values: &[f32]) -> Result<[FeatureVector; 4], HarnessError> {
    let mut it = values.chunks_exact(FEATURE_DIM).zip(FeatureSource::ORDER);
    let mut next = || {
        let (chunk, src) = it.next().unwrap();
        FeatureVector::new(chunk.to_vec(), src)
    };
    Ok([next()?, next()?, next()?, next()?])
}

/// Hex SHA-256 over both serialized weight bundles; identifies the
/// extraction setup in cache file names.
pub fn backend_digest(object: &Backend, scene: &Backend) -> String {
    let mut h = Sha256::new();
    h.update(b"hdf-sources-v1");
    h.update(write_weights(object.weights()));
    h.update(write_weights(scene.weights()));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_file(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("sources-{}.hdfc", &digest[..digest.len().min(16)]))
}

/// Extracts descriptors for every image, reusing records from `cache` when
/// present and rewriting it when anything new was computed.
pub fn extract_source_table(
    manifest: &DatasetManifest,
    object: &dyn Backbone,
    scene: &dyn Backbone,
    cache: Option<&Path>,
) -> Result<SourceTable, HarnessError> {
    let images: Vec<(u32, &Path)> = manifest.images().collect();
    let cached = match cache {
        Some(p) if p.exists() => Some(FeatureCache::load_expecting(p, SOURCE_DIM)?),
        _ => None,
    };
    let lookup = |path: &str| cached.as_ref().and_then(|c| c.get(path));

    let mut fresh = 0usize;
    let sources = images
        .par_iter()
        .map(|&(label, path)| {
            let key = path.to_string_lossy();
            match lookup(&key) {
                Some(rec) if rec.label == label => Ok((split_sources(&rec.values)?, false)),
                _ => {
                    debug!("extracting {}", path.display());
                    let image = load_image(path)?;
                    Ok((extract_sources(object, scene, &image)?, true))
                }
            }
        })
        .collect::<Result<Vec<_>, HarnessError>>()?
        .into_iter()
        .map(|(s, new)| {
            fresh += new as usize;
            s
        })
        .collect();
    let table = SourceTable {
        labels: images.iter().map(|i| i.0).collect(),
        paths: images.iter().map(|i| i.1.to_string_lossy().into_owned()).collect(),
        sources,
    };
    info!("descriptors: {} extracted, {} from cache", fresh, table.len() - fresh);
    if let Some(p) = cache {
        if fresh > 0 {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
            table.to_cache().save(p)?;
        }
    }
    Ok(table)
}

/// Row access used by tuning and evaluation, so tests can observe exactly
/// which samples each phase reads.
pub trait FeatureStore: Sync {
    fn dim(&self) -> usize;
    fn row(&self, i: usize) -> &[f32];
}

impl FeatureStore for Vec<Vec<f32>> {
    fn dim(&self) -> usize {
        self.first().map_or(0, Vec::len)
    }

    fn row(&self, i: usize) -> &[f32] {
        &self[i]
    }
}

fn gather(store: &dyn FeatureStore, idx: &[usize]) -> Result<Matrix, HarnessError> {
    Ok(Matrix::from_f32_rows(idx.iter().map(|&i| store.row(i)))?)
}

/// Grid search over `train` only.
pub fn tune_cost(
    store: &dyn FeatureStore,
    labels: &[u32],
    train: &[usize],
    grid: &GridSearchConfig,
) -> Result<GridSearchReport, HarnessError> {
    let x = gather(store, train)?;
    let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
    Ok(grid_search_c(&x, &y, grid)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub accuracy: f64,
    pub chosen_c: u32,
    pub cv_accuracy: f64,
    /// Mean cross-validation accuracy for each cost in the grid.
    pub cv_curve: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

fn run_repetition(
    store: &dyn FeatureStore,
    labels: &[u32],
    train: &[usize],
    test: &[usize],
    grid: &GridSearchConfig,
    repetition: usize,
) -> Result<RepetitionResult, HarnessError> {
    let tuned = tune_cost(store, labels, train, grid)?;
    let x = gather(store, train)?;
    let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
    let model = train_ovr_with(&x, &y, tuned.best_c as f64, &grid.solver)?;
    let xt = gather(store, test)?;
    let yt: Vec<u32> = test.iter().map(|&i| labels[i]).collect();
    Ok(RepetitionResult {
        repetition,
        accuracy: evaluate(&model, &xt, &yt)?,
        chosen_c: tuned.best_c,
        cv_accuracy: tuned.best_accuracy,
        cv_curve: tuned.entries.iter().map(|e| e.mean_accuracy).collect(),
        train_size: train.len(),
        test_size: test.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub feature_type: FeatureType,
    /// Ignored for single-source types.
    pub pool_op: PoolOp,
}

impl FeatureConfig {
    pub fn label(&self) -> String {
        match (self.feature_type, self.pool_op) {
            (FeatureType::Hdf, PoolOp::Concat) => "HDF".into(),
            (FeatureType::Hdf, op) => format!("HDF-{}", op.name()),
            (t, _) => t.name().to_ascii_uppercase(),
        }
    }

    pub fn dim(&self) -> usize {
        match self.feature_type {
            FeatureType::Hdf => self.pool_op.output_dim(),
            _ => FEATURE_DIM,
        }
    }

    /// OP, OW, SP, SW, HDF (concat), then HDF under max, mean and min.
    pub fn standard() -> Vec<FeatureConfig> {
        let single = [FeatureType::Op, FeatureType::Ow, FeatureType::Sp, FeatureType::Sw]
            .map(|t| FeatureConfig { feature_type: t, pool_op: PoolOp::Concat });
        let fused = [PoolOp::Concat, PoolOp::Max, PoolOp::Mean, PoolOp::Min]
            .map(|op| FeatureConfig { feature_type: FeatureType::Hdf, pool_op: op });
        single.into_iter().chain(fused).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub protocol: SplitProtocol,
    /// Overrides the protocol's generated split (e.g. published lists).
    pub plan: Option<SplitPlan>,
    pub configs: Vec<FeatureConfig>,
    /// Costs, folds and solver settings; the fold seed is replaced per
    /// repetition by `protocol.seed + repetition`.
    pub grid: GridSearchConfig,
    pub cache: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(protocol: SplitProtocol) -> Self {
        Self { protocol, plan: None, configs: FeatureConfig::standard(), grid: GridSearchConfig::default(), cache: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub label: String,
    pub feature_type: String,
    pub pool_op: Option<String>,
    pub dim: usize,
    pub repetitions: Vec<RepetitionResult>,
    pub mean_accuracy: f64,
}

impl ConfigResult {
    fn new(config: &FeatureConfig, repetitions: Vec<RepetitionResult>) -> Self {
        let mean_accuracy = repetitions.iter().map(|r| r.accuracy).sum::<f64>() / repetitions.len() as f64;
        Self {
            label: config.label(),
            feature_type: config.feature_type.name().into(),
            pool_op: (config.feature_type == FeatureType::Hdf).then(|| config.pool_op.name().into()),
            dim: config.dim(),
            repetitions,
            mean_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub seed: u64,
    pub protocol: SplitProtocol,
    pub classes: Vec<String>,
    pub costs: Vec<u32>,
    pub folds: usize,
    pub rows: Vec<ConfigResult>,
    /// False while rows are still being added.
    pub complete: bool,
}

impl ExperimentReport {
    pub fn row(&self, label: &str) -> Option<&ConfigResult> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-feature-type and per-aggregator accuracy tables (percent).
    pub fn render_tables(&self) -> String {
        let reps = self.rows.iter().map(|r| r.repetitions.len()).max().unwrap_or(0);
        let mut out = String::new();
        let section = |out: &mut String, title: &str, head: &str, rows: &[(&str, &str)]| {
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{head:<12}");
            for r in 0..reps {
                let _ = write!(out, " {:>7}", format!("rep{}", r + 1));
            }
            let _ = writeln!(out, " {:>7}  C", "mean");
            for (name, label) in rows {
                let Some(row) = self.row(label) else { continue };
                let _ = write!(out, "{name:<12}");
                for rep in &row.repetitions {
                    let _ = write!(out, " {:>7.2}", rep.accuracy * 100.0);
                }
                for _ in row.repetitions.len()..reps {
                    let _ = write!(out, " {:>7}", "-");
                }
                let chosen: Vec<String> = row.repetitions.iter().map(|r| r.chosen_c.to_string()).collect();
                let _ = writeln!(out, " {:>7.2}  {}", row.mean_accuracy * 100.0, chosen.join(","));
            }
        };
        let _ = writeln!(out, "dataset: {} ({} classes, seed {})\n", self.dataset, self.classes.len(), self.seed);
        section(
            &mut out,
            "Accuracy (%) by feature type",
            "Feature",
            &[("OP", "OP"), ("OW", "OW"), ("SP", "SP"), ("SW", "SW"), ("HDF", "HDF")],
        );
        out.push('\n');
        section(
            &mut out,
            "Accuracy (%) by aggregation",
            "Aggregator",
            &[("Max", "HDF-max"), ("Mean", "HDF-mean"), ("Min", "HDF-min"), ("Concat", "HDF")],
        );
        out
    }
}

pub fn run_experiment(
    manifest: &DatasetManifest,
    object: &dyn Backbone,
    scene: &dyn Backbone,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with(manifest, object, scene, config, &mut |_| {})
}

/// Like [`run_experiment`], calling `progress` with the partial report after
/// each configuration finishes so callers can persist results before a
/// later failure.
pub fn run_experiment_with(
    manifest: &DatasetManifest,
    object: &dyn Backbone,
    scene: &dyn Backbone,
    config: &ExperimentConfig,
    progress: &mut dyn FnMut(&ExperimentReport),
) -> Result<ExperimentReport, HarnessError> {
    if config.configs.is_empty() {
        return Err(HarnessError::Protocol("no feature configurations requested".into()));
    }
    let plan = match &config.plan {
        Some(p) => p.clone(),
        None => make_split(manifest, &config.protocol)?,
    };
    let table = extract_source_table(manifest, object, scene, config.cache.as_deref())?;
    let offsets = manifest.class_offsets();
    let offsets = &offsets;
    let global = |sets: &[Vec<usize>]| -> Vec<usize> {
        sets.iter().enumerate().flat_map(|(k, idx)| idx.iter().map(move |&i| offsets[k] + i)).collect()
    };
    let splits: Vec<(Vec<usize>, Vec<usize>)> =
        plan.repetitions.iter().map(|r| (global(&r.train), global(&r.test))).collect();

    let mut costs = config.grid.costs.clone();
    costs.sort_unstable();
    costs.dedup();
    let mut report = ExperimentReport {
        dataset: manifest.name.clone(),
        seed: config.protocol.seed,
        protocol: config.protocol,
        classes: manifest.classes.iter().map(|c| c.name.clone()).collect(),
        costs,
        folds: config.grid.folds,
        rows: Vec::with_capacity(config.configs.len()),
        complete: false,
    };
    for fc in &config.configs {
        info!("training {}", fc.label());
        let store = table.derive(fc)?;
        let reps = splits
            .par_iter()
            .enumerate()
            .map(|(r, (train, test))| {
                let grid = GridSearchConfig { seed: config.protocol.seed.wrapping_add(r as u64), ..config.grid.clone() };
                run_repetition(&store, &table.labels, train, test, &grid, r)
            })
            .collect::<Result<Vec<_>, _>>()?;
        report.rows.push(ConfigResult::new(fc, reps));
        progress(&report);
    }
    report.complete = true;
    Ok(report)
}
