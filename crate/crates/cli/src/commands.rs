use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hdf_core::cache::{FeatureCache, FeatureRecord};
use hdf_core::classifier::{evaluate, grid_search_c, train_ovr, GridSearchConfig, LinearModel, Matrix};
use hdf_core::engine::bench::conv_benchmark;
use hdf_core::engine::{load_weights, save_weights, NetworkSpec, WeightBundle, INPUT_SIZE};
use hdf_core::features::{derive_feature, extract_sources, working_image, Backbone, Backend, BackendKind};
use hdf_core::harness::{
    backend_digest, cache_file, load_image, run_experiment_with, scan_dataset, ExperimentConfig, SplitFile,
};
use hdf_core::image::{write_netpbm, Raster};
use hdf_core::slicer::{slice_all, working_masks};
use hdf_core::synth::{self, OBJECT_MEANS, SCENE_MEANS};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Settings;
use crate::error::{CliError, CliResult};

fn load_backend(kind: BackendKind, path: &Path) -> CliResult<Backend> {
    let weights = load_weights(path).with_context(|| path.display().to_string()).map_err(CliError::data)?;
    Backend::from_weights(kind, weights)
        .with_context(|| path.display().to_string())
        .map_err(CliError::data)
}

fn backends(s: &Settings) -> CliResult<(PathBuf, PathBuf)> {
    Ok((
        Settings::existing_file("object_weights", s.object_weights.as_deref())?,
        Settings::existing_file("scene_weights", s.scene_weights.as_deref())?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.into()))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(CliError::data)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(CliError::data)
}

fn create_parent(file: &Path) -> CliResult<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn slice(s: &Settings, image: &Path) -> CliResult<()> {
    let image = Settings::existing_file("image", Some(image))?;
    let out = s.require_out()?.to_path_buf();
    let weights = s.object_weights.as_deref().map(|p| Settings::existing_file("object_weights", Some(p))).transpose()?;

    let fill = match weights {
        Some(p) => load_weights(&p).with_context(|| p.display().to_string()).map_err(CliError::data)?.means(),
        None => OBJECT_MEANS,
    };
    let raster = load_image(&image)?;
    let working = working_image(&raster).map_err(CliError::data)?;
    let slices = slice_all(&working, fill).map_err(CliError::data)?;

    create_dir(&out)?;
    println!("{:<8} {:>5} {:>5} {:>6} {:>6} {:>7}", "slice", "top", "left", "height", "width", "pixels");
    for (mask, sub) in working_masks().iter().zip(&slices) {
        let stem = mask.label();
        let pixels = Raster::from_planar(&sub.pixels).map_err(CliError::data)?;
        write_netpbm(&pixels, out.join(format!("{stem}.ppm"))).map_err(CliError::data)?;
        write_netpbm(&mask.to_raster(), out.join(format!("{stem}.pgm"))).map_err(CliError::data)?;
        let b = mask.bbox();
        println!("{stem:<8} {:>5} {:>5} {:>6} {:>6} {:>7}", b.top, b.left, b.height, b.width, mask.count());
    }
    println!("wrote {} files to {}", 2 * slices.len(), out.display());
    Ok(())
}

pub fn extract(s: &Settings) -> CliResult<()> {
    let dataset = s.dataset_dir()?;
    let (ow, sw) = backends(s)?;
    let pool = s.pool()?;
    let feature_type = s.feature_type()?;
    let out = s.require_out()?.to_path_buf();

    let object = load_backend(BackendKind::Object, &ow)?;
    let scene = load_backend(BackendKind::Scene, &sw)?;
    let manifest = scan_dataset(&dataset)?.manifest;
    let images: Vec<(u32, &Path)> = manifest.images().collect();
    info!("extracting {} images", images.len());
    let results: Vec<Result<Vec<f32>, anyhow::Error>> = images
        .par_iter()
        .map(|&(_, path)| {
            let raster = load_image(path)?;
            let sources = extract_sources(&object, &scene, &raster)?;
            Ok(derive_feature(&sources, feature_type, pool)?)
        })
        .collect();

    let dim = match feature_type.source() {
        Some(_) => hdf_core::features::FEATURE_DIM,
        None => pool.output_dim(),
    };
    let mut cache = FeatureCache::new(dim);
    let mut failures = 0;
    for ((label, path), result) in images.iter().zip(results) {
        match result {
            Ok(values) => cache
                .push(FeatureRecord { label: *label, path: path.to_string_lossy().into_owned(), values })
                .map_err(|e| CliError::Internal(e.into()))?,
            Err(e) => {
                failures += 1;
                eprintln!("hdf: {}: {e:#}", path.display());
            }
        }
    }
    create_parent(&out)?;
    cache.save(&out).with_context(|| out.display().to_string()).map_err(CliError::data)?;
    println!(
        "wrote {} records of dim {} ({} {}) to {}",
        cache.records.len(),
        dim,
        feature_type.name(),
        pool.name(),
        out.display()
    );
    if failures > 0 {
        return Err(CliError::data(anyhow!("{failures} of {} images failed", images.len())));
    }
    Ok(())
}

fn load_features(path: &Path) -> CliResult<(Matrix, Vec<u32>)> {
    let cache = FeatureCache::load(path).with_context(|| path.display().to_string()).map_err(CliError::data)?;
    if cache.records.is_empty() {
        return Err(CliError::data(anyhow!("{} holds no records", path.display())));
    }
    let x = Matrix::from_f32_rows(cache.records.iter().map(|r| r.values.as_slice())).map_err(CliError::data)?;
    Ok((x, cache.records.iter().map(|r| r.label).collect()))
}

pub fn train(s: &Settings, features: &Path, cost: Option<u32>) -> CliResult<()> {
    let features = Settings::existing_file("features", Some(features))?;
    let out = s.require_out()?.to_path_buf();
    let folds = s.folds()?;
    if cost == Some(0) {
        return Err(CliError::config("--cost must be at least 1"));
    }

    let (x, labels) = load_features(&features)?;
    let c = match cost {
        Some(c) => c,
        None => {
            let grid = GridSearchConfig { folds, seed: s.seed(), ..Default::default() };
            let report = grid_search_c(&x, &labels, &grid).map_err(CliError::data)?;
            println!("grid search: C={} cv accuracy {:.4} ({folds} folds)", report.best_c, report.best_accuracy);
            report.best_c
        }
    };
    let model = train_ovr(&x, &labels, c as f64).map_err(CliError::data)?;
    let train_acc = evaluate(&model, &x, &labels).map_err(CliError::data)?;
    create_parent(&out)?;
    model.save(&out).with_context(|| out.display().to_string()).map_err(CliError::data)?;
    println!(
        "trained {} classes on {} samples (dim {}), C={c}, training accuracy {:.4}; model written to {}",
        model.classes().len(),
        x.rows(),
        x.cols(),
        train_acc,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    correct: usize,
    total: usize,
}

pub fn eval(s: &Settings, model: &Path, features: &Path) -> CliResult<()> {
    let model = Settings::existing_file("model", Some(model))?;
    let features = Settings::existing_file("features", Some(features))?;

    let m = LinearModel::load(&model).with_context(|| model.display().to_string()).map_err(CliError::data)?;
    let (x, labels) = load_features(&features)?;
    let accuracy = evaluate(&m, &x, &labels).map_err(CliError::data)?;
    let report = EvalReport { accuracy, correct: (accuracy * labels.len() as f64).round() as usize, total: labels.len() };
    println!("{}", serde_json::to_string(&report).map_err(|e| CliError::Internal(e.into()))?);
    if let Some(out) = &s.out {
        create_parent(out)?;
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn experiment(s: &Settings, no_cache: bool) -> CliResult<()> {
    let dataset = s.dataset_dir()?;
    let (ow, sw) = backends(s)?;
    let protocol = s.protocol()?;
    let folds = s.folds()?;
    let out = s.require_out()?.to_path_buf();
    let split_file = s.split_file.as_deref().map(|p| Settings::existing_file("split_file", Some(p))).transpose()?;

    let object = load_backend(BackendKind::Object, &ow)?;
    let scene = load_backend(BackendKind::Scene, &sw)?;
    let manifest = scan_dataset(&dataset)?.manifest;
    let mut config = ExperimentConfig::new(protocol);
    config.grid.folds = folds;
    if let Some(p) = split_file {
        config.plan = Some(SplitFile::load(&p)?.to_plan(&manifest)?);
    }
    if !no_cache {
        let dir = s.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
        config.cache = Some(cache_file(&dir, &backend_digest(&object, &scene)));
    }

    create_dir(&out)?;
    let json_path = out.join("report.json");
    let mut flush_error = None;
    let result = run_experiment_with(&manifest, &object, &scene, &config, &mut |partial| {
        info!("{} of {} configurations done", partial.rows.len(), config.configs.len());
        if let Err(e) = partial.to_json().map_err(anyhow::Error::from).and_then(|t| Ok(fs::write(&json_path, t)?)) {
            flush_error.get_or_insert(e);
        }
    });
    if let Some(e) = flush_error {
        return Err(CliError::data(e.context(format!("writing {}", json_path.display()))));
    }
    let report = result?;
    let json = report.to_json()?;
    fs::write(&json_path, json).with_context(|| json_path.display().to_string()).map_err(CliError::data)?;
    let tables = report.render_tables();
    let txt_path = out.join("report.txt");
    fs::write(&txt_path, &tables).with_context(|| txt_path.display().to_string()).map_err(CliError::data)?;
    print!("{tables}");
    println!("\nreport written to {} and {}", json_path.display(), txt_path.display());
    Ok(())
}

pub fn validate_weights(s: &Settings, paths: &[PathBuf]) -> CliResult<()> {
    let mut all: Vec<PathBuf> = paths.to_vec();
    all.extend(s.object_weights.iter().cloned());
    all.extend(s.scene_weights.iter().cloned());
    if all.is_empty() {
        return Err(CliError::config("give weight files as arguments or via --object-weights/--scene-weights"));
    }
    for p in &all {
        Settings::existing_file("weights", Some(p))?;
    }
    let mut bad = 0;
    for p in &all {
        match load_backend(BackendKind::Object, p) {
            Ok(b) => {
                let spec = b.spec();
                let params: usize = b.weights().entries().iter().map(|e| e.kernel.len() + e.bias.len()).sum();
                let shape = spec.output_shape(INPUT_SIZE, INPUT_SIZE).map_err(|e| CliError::Internal(e.into()))?;
                println!(
                    "{}: ok, {} conv / {} pool layers, {} parameters, means {:?}, output {}x{}x{}",
                    p.display(),
                    spec.conv_layers().len(),
                    spec.pool_count(),
                    params,
                    b.means(),
                    shape[0],
                    shape[1],
                    shape[2]
                );
            }
            Err(e) => {
                bad += 1;
                println!("{}: invalid: {e}", p.display());
            }
        }
    }
    if bad > 0 {
        return Err(CliError::data(anyhow!("{bad} of {} weight files are invalid", all.len())));
    }
    Ok(())
}

pub fn bench(s: &Settings, in_channels: usize, out_channels: usize, size: usize, repeats: usize) -> CliResult<()> {
    if in_channels == 0 || out_channels == 0 || size == 0 {
        return Err(CliError::config("channel counts and size must be positive"));
    }
    let threads = s.threads()?.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Internal(e.into()))?;
    let report = pool.install(|| conv_benchmark(in_channels, out_channels, size, repeats, s.seed()));
    println!(
        "conv {}x{}x{} -> {}: baseline {:.3} s, fast {:.3} s, speedup {:.1}x, max rel error {:.2e} ({threads} thread{})",
        in_channels,
        size,
        size,
        out_channels,
        report.reference_secs,
        report.fast_secs,
        report.speedup,
        report.max_rel_error,
        if threads == 1 { "" } else { "s" }
    );
    println!("{}", serde_json::to_string(&report).map_err(|e| CliError::Internal(e.into()))?);
    if let Some(out) = &s.out {
        create_parent(out)?;
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn gen_weights(s: &Settings, kind: &str, arch: &str) -> CliResult<()> {
    let kind = match kind {
        "object" => BackendKind::Object,
        "scene" => BackendKind::Scene,
        k => return Err(CliError::config(format!("unknown backend kind {k:?} (object|scene)"))),
    };
    let out = s.require_out()?.to_path_buf();
    let bundle = match arch {
        "compact" => synth::stub_weights(kind, s.seed()),
        "vgg16" => {
            let means = if kind == BackendKind::Object { OBJECT_MEANS } else { SCENE_MEANS };
            WeightBundle::random(&NetworkSpec::vgg16_pool5(), means, s.seed())
        }
        a => return Err(CliError::config(format!("unknown architecture {a:?} (compact|vgg16)"))),
    };
    create_parent(&out)?;
    save_weights(&bundle, &out).with_context(|| out.display().to_string()).map_err(CliError::data)?;
    println!("wrote {arch} {} weights ({} conv layers) to {}", kind_name(kind), bundle.entries().len(), out.display());
    Ok(())
}

fn kind_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Object => "object",
        BackendKind::Scene => "scene",
    }
}

pub fn synth(s: &Settings, classes: usize, per_class: usize, size: usize) -> CliResult<()> {
    if classes < 2 || per_class == 0 || size == 0 {
        return Err(CliError::config("need at least 2 classes, 1 image per class and a positive size"));
    }
    let out = s.require_out()?.to_path_buf();
    synth::write_synthetic_dataset(&out, classes, per_class, size, s.seed()).map_err(CliError::data)?;
    println!("wrote {classes} classes x {per_class} images ({size}x{size}) to {}", out.display());
    Ok(())
}
