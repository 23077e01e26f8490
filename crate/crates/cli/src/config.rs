//! Flat JSON config file merged with command-line flags. A flag always wins
//! over the same key in the file; relative paths are taken as given, i.e.
//! relative to the working directory.

use std::path::{Path, PathBuf};

use hdf_core::features::{FeatureType, PoolOp};
use hdf_core::harness::{SplitKind, SplitProtocol, TestCount};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub object_weights: Option<PathBuf>,
    pub scene_weights: Option<PathBuf>,
    pub pool: Option<String>,
    pub feature_type: Option<String>,
    pub dataset: Option<PathBuf>,
    pub protocol: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<serde_json::Value>,
    pub repetitions: Option<usize>,
    pub folds: Option<usize>,
    pub split_file: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $(if $top.$field.is_some() { $base.$field = $top.$field; })*
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: Settings) -> Self {
        overlay!(
            self,
            flags,
            object_weights,
            scene_weights,
            pool,
            feature_type,
            dataset,
            protocol,
            seed,
            out,
            threads,
            train_per_class,
            test_per_class,
            repetitions,
            folds,
            split_file,
            cache_dir
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn pool(&self) -> CliResult<PoolOp> {
        match &self.pool {
            None => Ok(PoolOp::Concat),
            Some(s) => s.parse().map_err(|e: hdf_core::features::FeatureError| CliError::config(e.to_string())),
        }
    }

    pub fn feature_type(&self) -> CliResult<FeatureType> {
        match &self.feature_type {
            None => Ok(FeatureType::Hdf),
            Some(s) => s.parse().map_err(|e: hdf_core::features::FeatureError| CliError::config(e.to_string())),
        }
    }

    pub fn folds(&self) -> CliResult<usize> {
        match self.folds.unwrap_or(5) {
            f if f >= 2 => Ok(f),
            f => Err(CliError::config(format!("folds must be at least 2, got {f}"))),
        }
    }

    pub fn threads(&self) -> CliResult<Option<usize>> {
        match self.threads {
            Some(0) => Err(CliError::config("threads must be at least 1")),
            t => Ok(t),
        }
    }

    pub fn require_out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::config("--out is required"))
    }

    pub fn existing_file(field: &str, path: Option<&Path>) -> CliResult<PathBuf> {
        let p = path.ok_or_else(|| CliError::config(format!("--{} is required", field.replace('_', "-"))))?;
        if !p.is_file() {
            return Err(CliError::config(format!("{field} {} does not exist", p.display())));
        }
        Ok(p.to_path_buf())
    }

    pub fn dataset_dir(&self) -> CliResult<PathBuf> {
        let p = self.dataset.as_deref().ok_or_else(|| CliError::config("--dataset is required"))?;
        if !p.is_dir() {
            return Err(CliError::config(format!("dataset {} is not a directory", p.display())));
        }
        Ok(p.to_path_buf())
    }

    /// Preset protocols take their published sizes; `custom` needs all three
    /// of `train_per_class`, `test_per_class` and `repetitions`.
    pub fn protocol(&self) -> CliResult<SplitProtocol> {
        let name = self.protocol.as_deref().unwrap_or("custom");
        let seed = self.seed();
        let test = match &self.test_per_class {
            None => None,
            Some(serde_json::Value::Number(n)) => Some(TestCount::Count(
                n.as_u64().ok_or_else(|| CliError::config("test_per_class must be a count or \"rest\""))? as usize,
            )),
            Some(serde_json::Value::String(s)) => Some(s.parse().map_err(CliError::Config)?),
            Some(_) => return Err(CliError::config("test_per_class must be a count or \"rest\"")),
        };
        let protocol = match SplitProtocol::preset(name, seed) {
            Some(p) => {
                if self.train_per_class.is_some() || test.is_some() || self.repetitions.is_some() {
                    return Err(CliError::config(format!(
                        "protocol {name} fixes its split sizes; use --protocol custom to set them"
                    )));
                }
                p
            }
            None if name == "custom" => SplitProtocol {
                kind: if test.is_some_and(|t| t != TestCount::Rest) {
                    SplitKind::FixedPerClass
                } else {
                    SplitKind::RepeatedRandom
                },
                train_per_class: self
                    .train_per_class
                    .ok_or_else(|| CliError::config("custom protocol needs --train-per-class"))?,
                test_per_class: test.ok_or_else(|| CliError::config("custom protocol needs --test-per-class"))?,
                repetitions: self.repetitions.ok_or_else(|| CliError::config("custom protocol needs --repetitions"))?,
                seed,
            },
            None => {
                return Err(CliError::config(format!(
                    "unknown protocol {name:?} (mit67|scene15|event8|custom)"
                )))
            }
        };
        protocol.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(protocol)
    }
}
