//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.
#![allow(dead_code)]

use hdf_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).unwrap()
}

/// Zero-padded 3×3 stride-1 convolution, six nested loops, `f64` sums.
pub fn naive_conv(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let [ci, h, w] = input.shape().try_into().unwrap();
    let co = kernel.shape()[0];
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias.data()[o] as f64;
                for c in 0..ci {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let (sy, sx) = (y as i64 + dy as i64 - 1, xx as i64 + dx as i64 - 1);
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                continue;
                            }
                            let iv = x[(c * h + sy as usize) * w + sx as usize] as f64;
                            acc += iv * k[((o * ci + c) * 3 + dy) * 3 + dx] as f64;
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn naive_relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Window-by-window 2×2 max pooling of a `c × h × w` buffer.
pub fn naive_maxpool(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    out
}

/// Per-channel mean by flat summation.
pub fn flat_gap(x: &[f64], c: usize) -> Vec<f64> {
    let per = x.len() / c;
    (0..c).map(|ch| x[ch * per..(ch + 1) * per].iter().sum::<f64>() / per as f64).collect()
}

/// `max |got - want| / max(|want|, 1)`.
pub fn max_rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).abs() / w.abs().max(1.0)).fold(0.0, f64::max)
}

/// ½‖w‖² + C Σ ln(1 + e^(−y(w·x+b))), written out directly.
pub fn lr_objective(rows: &[Vec<f64>], y: &[f64], c: f64, w: &[f64], b: f64) -> f64 {
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() / 2.0;
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, &yi)| {
            let z = yi * (x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b);
            (1.0 + (-z).exp()).ln()
        })
        .sum();
    reg + c * loss
}

/// Central differences of `f` at `p` with step `h`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Derivative-free minimization: compass search from many random starts,
/// keeping the best point found.
pub fn brute_force_min(f: impl Fn(&[f64]) -> f64, dim: usize, restarts: usize, seed: u64) -> (Vec<f64>, f64) {
    let mut rng = rng(seed);
    let mut best = (vec![0.0; dim], f(&vec![0.0; dim]));
    for _ in 0..restarts {
        let mut p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut fp = f(&p);
        let mut step = 1.0;
        while step > 1e-9 {
            let mut improved = false;
            for i in 0..dim {
                for s in [step, -step] {
                    let mut q = p.clone();
                    q[i] += s;
                    let fq = f(&q);
                    if fq < fp {
                        p = q;
                        fp = fq;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if fp < best.1 {
            best = (p, fp);
        }
    }
    best
}

/// Membership of pixel `(r, c)` in each technique's parts, evaluated from
/// the written geometry rules. Order: rect, tri, circ, ldiag, rdiag.
pub fn rule_parts(r: usize, c: usize) -> [Option<usize>; 5] {
    let (r, c) = (r as i64, c as i64);
    let quad = (if r < 112 { 0 } else { 2 }) + (if c < 112 { 0 } else { 1 });
    let d1 = c - r;
    let d2 = r + c - 223;
    let tri = if d1 >= 0 && d2 < 0 {
        0
    } else if d1 > 0 && d2 >= 0 {
        1
    } else if d1 <= 0 && d2 > 0 {
        2
    } else if d1 < 0 && d2 <= 0 {
        3
    } else {
        unreachable!("pixel ({r}, {c}) matched no triangle")
    };
    let (dy, dx) = (r as f64 - 111.5, c as f64 - 111.5);
    let circ = ((dy * dy + dx * dx).sqrt() < 112.0).then_some(quad);
    let ldiag = match c - r {
        -223..=-113 => 0,
        -112..=-1 => 1,
        0..=111 => 2,
        _ => 3,
    };
    let rdiag = match r + c {
        0..=111 => 0,
        112..=222 => 1,
        223..=334 => 2,
        _ => 3,
    };
    [Some(quad), Some(tri), circ, Some(ldiag), Some(rdiag)]
}
