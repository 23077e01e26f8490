//! Timing comparison between the fast convolution and the nested-loop
//! baseline on one layer.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{conv2d, conv2d_reference};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize)]
pub struct ConvBenchReport {
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub reference_secs: f64,
    pub fast_secs: f64,
    pub speedup: f64,
    /// Max `|fast - reference| / max(|reference|, 1)` over all outputs.
    pub max_rel_error: f64,
}

/// Times one `in_channels × size × size → out_channels` layer on random data.
/// The fast path is run `repeats` times and the best time kept; the
/// baseline runs once.
pub fn conv_benchmark(in_channels: usize, out_channels: usize, size: usize, repeats: usize, seed: u64) -> ConvBenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::from_fn(&[in_channels, size, size], |_| rng.gen_range(-1.0..1.0)).unwrap();
    let kernel = Tensor::from_fn(&[out_channels, in_channels, 3, 3], |_| rng.gen_range(-0.1..0.1)).unwrap();
    let bias = Tensor::from_fn(&[out_channels], |_| rng.gen_range(-0.1..0.1)).unwrap();

    let start = Instant::now();
    let slow = conv2d_reference(&input, &kernel, &bias).unwrap();
    let reference_secs = start.elapsed().as_secs_f64();

    let mut fast_secs = f64::INFINITY;
    let mut fast = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = conv2d(&input, &kernel, &bias).unwrap();
        fast_secs = fast_secs.min(start.elapsed().as_secs_f64());
        fast = Some(out);
    }
    let fast = fast.unwrap();
    let max_rel_error = fast
        .data()
        .iter()
        .zip(slow.data())
        .map(|(&a, &e)| ((a - e).abs() / e.abs().max(1.0)) as f64)
        .fold(0.0, f64::max);

    ConvBenchReport {
        in_channels,
        out_channels,
        size,
        reference_secs,
        fast_secs,
        speedup: reference_secs / fast_secs,
        max_rel_error,
    }
}
