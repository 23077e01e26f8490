//! Deterministic synthetic images and random stub backends for smoke runs.

use std::f32::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{NetworkSpec, WeightBundle};
use crate::features::{Backend, BackendKind, FeatureError};
use crate::image::{write_netpbm, ImageError, Raster};

pub const OBJECT_MEANS: [f32; 3] = [123.68, 116.78, 103.94];
pub const SCENE_MEANS: [f32; 3] = [116.68, 112.51, 104.05];
/// Hidden width of the stub network's first convolution.
pub const STUB_HIDDEN: usize = 8;

/// Random two-convolution network producing 512 × 7 × 7 at 224 × 224.
pub fn stub_weights(kind: BackendKind, seed: u64) -> WeightBundle {
    let spec = NetworkSpec::compact(STUB_HIDDEN).expect("valid stub spec");
    let means = match kind {
        BackendKind::Object => OBJECT_MEANS,
        BackendKind::Scene => SCENE_MEANS,
    };
    WeightBundle::random(&spec, means, seed)
}

/// Object backend from `seed`, scene backend from `seed + 1`.
pub fn stub_backends(seed: u64) -> Result<(Backend, Backend), FeatureError> {
    Ok((
        Backend::from_weights(BackendKind::Object, stub_weights(BackendKind::Object, seed))?,
        Backend::from_weights(BackendKind::Scene, stub_weights(BackendKind::Scene, seed.wrapping_add(1)))?,
    ))
}

pub fn class_name(k: usize) -> String {
    format!("class_{k:02}")
}

/// Image `index` of class `k` out of `classes`: a class-specific hue and
/// stripe orientation with per-image phase, contrast and pixel noise.
pub fn synthetic_image(k: usize, classes: usize, index: usize, size: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | index as u64);
    let hue = TAU * k as f32 / classes as f32;
    let base = [hue, hue - TAU / 3.0, hue + TAU / 3.0].map(|h| 128.0 + 70.0 * h.cos());
    let angle = std::f32::consts::PI * k as f32 / classes as f32;
    let (dx, dy) = (angle.cos(), angle.sin());
    let period = 6.0 + 2.0 * k as f32;
    let phase: f32 = rng.gen_range(0.0..TAU);
    let contrast: f32 = rng.gen_range(25.0..40.0);
    let noise: Vec<f32> = (0..size * size * 3).map(|_| rng.gen_range(-12.0..12.0)).collect();
    Raster::from_fn(size, size, 3, |y, x, c| {
        let t = (x as f32 * dx + y as f32 * dy) * TAU / period + phase;
        let v = base[c] + contrast * t.sin() + noise[(y * size + x) * 3 + c];
        v.round().clamp(0.0, 255.0)
    })
}

/// Writes `root/class_XX/img_YYY.ppm` for `classes × per_class` images.
pub fn write_synthetic_dataset(
    root: &Path,
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<(), ImageError> {
    for k in 0..classes {
        let dir = root.join(class_name(k));
        fs::create_dir_all(&dir).map_err(ImageError::Io)?;
        for i in 0..per_class {
            write_netpbm(&synthetic_image(k, classes, i, size, seed), dir.join(format!("img_{i:03}.ppm")))?;
        }
    }
    Ok(())
}
