//! The four deep feature types and their fusion.
//!
//! * `OW` / `SW`: GAP of the pool5 map of the whole image under the object
//!   (ImageNet-style) and scene (Places-style) backend.
//! * `OP` / `SP`: mean of the pool5 GAP descriptors of the 20 part images.
//!
//! The hybrid descriptor aggregates `[OP, OW, SP, SW]` (in that order) with
//! max, mean, min or concatenation and is L2-normalized.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{forward_to_pool5, gap, EngineError, NetworkSpec, WeightBundle, INPUT_SIZE};
use crate::image::{resize_bilinear, ImageError, Raster};
use crate::slicer::{slice_all, SliceError};
use crate::tensor::Tensor;

/// Width of every per-source descriptor.
pub const FEATURE_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Object,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSource {
    OP,
    OW,
    SP,
    SW,
}

impl FeatureSource {
    pub const ORDER: [FeatureSource; 4] = [Self::OP, Self::OW, Self::SP, Self::SW];

    pub fn name(self) -> &'static str {
        match self {
            Self::OP => "OP",
            Self::OW => "OW",
            Self::SP => "SP",
            Self::SW => "SW",
        }
    }

    fn new(kind: BackendKind, part: bool) -> Self {
        match (kind, part) {
            (BackendKind::Object, true) => Self::OP,
            (BackendKind::Object, false) => Self::OW,
            (BackendKind::Scene, true) => Self::SP,
            (BackendKind::Scene, false) => Self::SW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOp {
    Max,
    Mean,
    Min,
    Concat,
}

impl PoolOp {
    pub const ALL: [PoolOp; 4] = [Self::Max, Self::Mean, Self::Min, Self::Concat];

    pub fn name(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Min => "min",
            Self::Concat => "concat",
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            Self::Concat => 4 * FEATURE_DIM,
            _ => FEATURE_DIM,
        }
    }
}

impl fmt::Display for PoolOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolOp {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| FeatureError::Invalid(format!("unknown pool op {s:?} (max|mean|min|concat)")))
    }
}

/// What a feature file or experiment row holds: the fused descriptor under
/// some pool op, or one of the four single-source descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureType {
    Hdf,
    Op,
    Ow,
    Sp,
    Sw,
}

impl FeatureType {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hdf => "hdf",
            Self::Op => "op",
            Self::Ow => "ow",
            Self::Sp => "sp",
            Self::Sw => "sw",
        }
    }

    pub fn source(self) -> Option<FeatureSource> {
        match self {
            Self::Hdf => None,
            Self::Op => Some(FeatureSource::OP),
            Self::Ow => Some(FeatureSource::OW),
            Self::Sp => Some(FeatureSource::SP),
            Self::Sw => Some(FeatureSource::SW),
        }
    }
}

impl FromStr for FeatureType {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Hdf, Self::Op, Self::Ow, Self::Sp, Self::Sw]
            .into_iter()
            .find(|t| t.name() == s.to_ascii_lowercase())
            .ok_or_else(|| FeatureError::Invalid(format!("unknown feature type {s:?} (hdf|op|ow|sp|sw)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
    source: FeatureSource,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, source: FeatureSource) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_DIM {
            return Err(FeatureError::Invalid(format!(
                "{} descriptor must have {FEATURE_DIM} values, got {}",
                source.name(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Invalid(format!("{} descriptor is not finite", source.name())));
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridFeature {
    values: Vec<f32>,
    pool_op: PoolOp,
    normalized: bool,
}

impl HybridFeature {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn pool_op(&self) -> PoolOp {
        self.pool_op
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Anything that maps a preprocessed `3 × 224 × 224` input to a 512-D
/// pool5 GAP descriptor.
pub trait Backbone: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Per-channel means subtracted during preprocessing and used as the
    /// fill color of masked-out slice pixels.
    fn means(&self) -> [f32; 3];

    fn describe(&self, input: &Tensor) -> Result<Vec<f32>, FeatureError>;
}

/// A network spec paired with validated weights.
#[derive(Debug, Clone)]
pub struct Backend {
    kind: BackendKind,
    spec: NetworkSpec,
    weights: WeightBundle,
}

impl Backend {
    pub fn new(kind: BackendKind, spec: NetworkSpec, weights: WeightBundle) -> Result<Self, FeatureError> {
        weights.validate_against(&spec)?;
        let out = spec.output_shape(INPUT_SIZE, INPUT_SIZE)?;
        if out[0] != FEATURE_DIM {
            return Err(FeatureError::Invalid(format!(
                "backend must end with {FEATURE_DIM} channels, spec yields {out:?}"
            )));
        }
        Ok(Self { kind, spec, weights })
    }

    /// Infers the network from the bundle's shapes.
    pub fn from_weights(kind: BackendKind, weights: WeightBundle) -> Result<Self, FeatureError> {
        let spec = NetworkSpec::infer_from(&weights)?;
        Self::new(kind, spec, weights)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightBundle {
        &self.weights
    }
}

impl Backbone for Backend {
    fn kind(&self) -> BackendKind {
        self.kind
    }

    fn means(&self) -> [f32; 3] {
        self.weights.means()
    }

    fn describe(&self, input: &Tensor) -> Result<Vec<f32>, FeatureError> {
        let pooled = forward_to_pool5(&self.spec, &self.weights, input)?;
        Ok(gap(&pooled)?)
    }
}

/// Resizes an RGB raster to the `3 × 224 × 224` working image (pixel units,
/// no mean subtraction).
pub fn working_image(raster: &Raster) -> Result<Tensor, FeatureError> {
    if raster.channels != 3 {
        return Err(FeatureError::Invalid(format!("expected 3 channels, got {}", raster.channels)));
    }
    if raster.width == 0 || raster.height == 0 {
        return Err(FeatureError::Invalid("empty image".into()));
    }
    let planar = raster.to_planar()?;
    if raster.height == INPUT_SIZE && raster.width == INPUT_SIZE {
        return Ok(planar);
    }
    Ok(resize_bilinear(&planar, INPUT_SIZE, INPUT_SIZE))
}

pub fn subtract_means(image: &Tensor, means: [f32; 3]) -> Tensor {
    let mut out = image.clone();
    let plane = out.len() / 3;
    for (chunk, m) in out.data_mut().chunks_exact_mut(plane).zip(means) {
        chunk.iter_mut().for_each(|v| *v -= m);
    }
    out
}

/// Network input: resized to 224, channel-major, per-channel means removed.
pub fn preprocess(raster: &Raster, means: [f32; 3]) -> Result<Tensor, FeatureError> {
    Ok(subtract_means(&working_image(raster)?, means))
}

fn whole_from_working(backend: &dyn Backbone, working: &Tensor) -> Result<FeatureVector, FeatureError> {
    let values = backend.describe(&subtract_means(working, backend.means()))?;
    FeatureVector::new(values, FeatureSource::new(backend.kind(), false))
}

fn part_from_working(backend: &dyn Backbone, working: &Tensor) -> Result<FeatureVector, FeatureError> {
    let means = backend.means();
    let slices = slice_all(working, means)?;
    let per_slice = slices
        .par_iter()
        .map(|s| backend.describe(&subtract_means(&s.pixels, means)))
        .collect::<Result<Vec<_>, _>>()?;
    // fixed summation order keeps the result independent of scheduling
    let mut sum = vec![0.0f64; per_slice[0].len()];
    for v in &per_slice {
        if v.len() != sum.len() {
            return Err(FeatureError::Invalid("slice descriptors differ in length".into()));
        }
        sum.iter_mut().zip(v).for_each(|(s, &x)| *s += x as f64);
    }
    let n = per_slice.len() as f64;
    let values = sum.into_iter().map(|s| (s / n) as f32).collect();
    FeatureVector::new(values, FeatureSource::new(backend.kind(), true))
}

/// Whole-image descriptor (`OW` for the object backend, `SW` for scene).
pub fn extract_whole(backend: &dyn Backbone, image: &Raster) -> Result<FeatureVector, FeatureError> {
    whole_from_working(backend, &working_image(image)?)
}

/// Part-image descriptor (`OP` or `SP`): mean over the 20 slice descriptors.
pub fn extract_part(backend: &dyn Backbone, image: &Raster) -> Result<FeatureVector, FeatureError> {
    part_from_working(backend, &working_image(image)?)
}

/// `[OP, OW, SP, SW]` for one image.
pub fn extract_sources(
    object: &dyn Backbone,
    scene: &dyn Backbone,
    image: &Raster,
) -> Result<[FeatureVector; 4], FeatureError> {
    if object.kind() != BackendKind::Object || scene.kind() != BackendKind::Scene {
        return Err(FeatureError::Invalid("backends must be (object, scene)".into()));
    }
    let working = working_image(image)?;
    Ok([
        part_from_working(object, &working)?,
        whole_from_working(object, &working)?,
        part_from_working(scene, &working)?,
        whole_from_working(scene, &working)?,
    ])
}

/// Fuses `[OP, OW, SP, SW]` elementwise (max/mean/min) or by concatenation.
pub fn aggregate(op: PoolOp, parts: &[FeatureVector]) -> Result<HybridFeature, FeatureError> {
    if parts.len() != 4 {
        return Err(FeatureError::Invalid(format!("aggregation needs 4 descriptors, got {}", parts.len())));
    }
    for (p, expected) in parts.iter().zip(FeatureSource::ORDER) {
        if p.source != expected {
            return Err(FeatureError::Invalid(format!(
                "descriptors must be ordered OP, OW, SP, SW; found {} where {} belongs",
                p.source.name(),
                expected.name()
            )));
        }
    }
    let values = match op {
        PoolOp::Concat => parts.iter().flat_map(|p| p.values.iter().copied()).collect(),
        PoolOp::Max => elementwise(parts, |a, b| a.max(b)),
        PoolOp::Min => elementwise(parts, |a, b| a.min(b)),
        PoolOp::Mean => {
            let mut v = elementwise(parts, |a, b| a + b);
            v.iter_mut().for_each(|x| *x /= 4.0);
            v
        }
    };
    Ok(HybridFeature { values, pool_op: op, normalized: false })
}

fn elementwise(parts: &[FeatureVector], f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    let mut acc = parts[0].values.clone();
    for p in &parts[1..] {
        acc.iter_mut().zip(&p.values).for_each(|(a, &b)| *a = f(*a, b));
    }
    acc
}

/// Scales `values` to unit Euclidean norm, accumulating in `f64`.
pub fn l2_normalize(values: &[f32]) -> Result<Vec<f32>, FeatureError> {
    let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(FeatureError::ZeroVector);
    }
    Ok(values.iter().map(|&v| (v as f64 / norm) as f32).collect())
}

pub fn normalize(feature: &HybridFeature) -> Result<HybridFeature, FeatureError> {
    Ok(HybridFeature { values: l2_normalize(&feature.values)?, pool_op: feature.pool_op, normalized: true })
}

/// Full pipeline for one image: four descriptors, fused and normalized.
pub fn extract_hdf(
    object: &dyn Backbone,
    scene: &dyn Backbone,
    image: &Raster,
    op: PoolOp,
) -> Result<HybridFeature, FeatureError> {
    normalize(&aggregate(op, &extract_sources(object, scene, image)?)?)
}

/// The classifier input for `feature_type` derived from precomputed
/// `[OP, OW, SP, SW]` descriptors: a single L2-normalized source, or the
/// normalized fusion under `op`.
pub fn derive_feature(sources: &[FeatureVector], feature_type: FeatureType, op: PoolOp) -> Result<Vec<f32>, FeatureError> {
    match feature_type.source() {
        None => Ok(normalize(&aggregate(op, sources)?)?.into_values()),
        Some(src) => {
            let v = sources
                .iter()
                .find(|f| f.source == src)
                .ok_or_else(|| FeatureError::Invalid(format!("missing {} descriptor", src.name())))?;
            l2_normalize(&v.values)
        }
    }
}
