//! 3×3, stride 1, zero-pad 1 convolution.
//!
//! The fast path walks each output plane in row bands, accumulating all nine
//! taps of one input channel per output row in a single pass so the interior
//! loop is branch-free and vectorizes. Output planes are independent, which
//! keeps results bit-identical regardless of how many threads run them.

use rayon::prelude::*;

use super::EngineError;
use crate::tensor::Tensor;

const ROW_BAND: usize = 16;

fn check_conv_shapes(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize), EngineError> {
    let (c_in, h, w) = input.chw()?;
    let (c_out, k_in) = match kernel.shape() {
        [o, i, 3, 3] => (*o, *i),
        other => {
            return Err(EngineError::Shape(format!(
                "kernel must be (out, in, 3, 3), got {other:?}"
            )))
        }
    };
    if k_in != c_in {
        return Err(EngineError::Shape(format!(
            "kernel expects {k_in} input channels but input has {c_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(EngineError::Shape(format!(
            "bias must be ({c_out},), got {:?}",
            bias.shape()
        )));
    }
    Ok((c_in, c_out, h, w))
}

/// Convolves a `(C_in, H, W)` map with a `(C_out, C_in, 3, 3)` kernel.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor, EngineError> {
    let (c_in, c_out, h, w) = check_conv_shapes(input, kernel, bias)?;
    let plane = h * w;
    let src = input.data();
    let weights = kernel.data();
    let zero_row = vec![0.0f32; w];
    let mut out = vec![0.0f32; c_out * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
        dst.fill(bias.data()[o]);
        let k_o = &weights[o * c_in * 9..(o + 1) * c_in * 9];
        for band in (0..h).step_by(ROW_BAND) {
            let band_end = (band + ROW_BAND).min(h);
            for c in 0..c_in {
                let k: &[f32; 9] = k_o[c * 9..c * 9 + 9].try_into().unwrap();
                let chan = &src[c * plane..(c + 1) * plane];
                for y in band..band_end {
                    let row = |iy: isize| -> &[f32] {
                        if iy < 0 || iy as usize >= h {
                            &zero_row
                        } else {
                            let iy = iy as usize;
                            &chan[iy * w..(iy + 1) * w]
                        }
                    };
                    let rows = [row(y as isize - 1), row(y as isize), row(y as isize + 1)];
                    accumulate_row(&mut dst[y * w..(y + 1) * w], rows, k);
                }
            }
        }
    });

    Tensor::new(&[c_out, h, w], out)
}

#[inline]
fn accumulate_row(out: &mut [f32], rows: [&[f32]; 3], k: &[f32; 9]) {
    let w = out.len();
    let [r0, r1, r2] = rows;
    if w >= 3 {
        let n = w - 2;
        let (a0, b0, c0) = (&r0[..n], &r0[1..n + 1], &r0[2..n + 2]);
        let (a1, b1, c1) = (&r1[..n], &r1[1..n + 1], &r1[2..n + 2]);
        let (a2, b2, c2) = (&r2[..n], &r2[1..n + 1], &r2[2..n + 2]);
        let dst = &mut out[1..n + 1];
        for i in 0..n {
            dst[i] += k[0] * a0[i]
                + k[1] * b0[i]
                + k[2] * c0[i]
                + k[3] * a1[i]
                + k[4] * b1[i]
                + k[5] * c1[i]
                + k[6] * a2[i]
                + k[7] * b2[i]
                + k[8] * c2[i];
        }
    }
    out[0] += edge_tap(rows, k, 0, w);
    if w > 1 {
        out[w - 1] += edge_tap(rows, k, w - 1, w);
    }
}

#[inline]
fn edge_tap(rows: [&[f32]; 3], k: &[f32; 9], x: usize, w: usize) -> f32 {
    let mut acc = 0.0;
    for (dy, row) in rows.iter().enumerate() {
        for dx in 0..3 {
            let ix = x as isize + dx as isize - 1;
            if ix >= 0 && (ix as usize) < w {
                acc += k[dy * 3 + dx] * row[ix as usize];
            }
        }
    }
    acc
}

/// Straightforward nested-loop convolution. Used as the baseline by the
/// benchmark command; it follows the defining sum term by term.
pub fn conv2d_reference(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
) -> Result<Tensor, EngineError> {
    let (c_in, c_out, h, w) = check_conv_shapes(input, kernel, bias)?;
    let mut out = Tensor::zeros(&[c_out, h, w])?;
    let (src, k, b) = (input.data(), kernel.data(), bias.data());
    let dst = out.data_mut();
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = b[o];
                for c in 0..c_in {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let iy = y as isize + dy as isize - 1;
                            let ix = x as isize + dx as isize - 1;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let v = src[(c * h + iy as usize) * w + ix as usize];
                            acc += v * k[((o * c_in + c) * 3 + dy) * 3 + dx];
                        }
                    }
                }
                dst[(o * h + y) * w + x] = acc;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_kernel(c: usize) -> Tensor {
        let mut k = Tensor::zeros(&[c, c, 3, 3]).unwrap();
        for i in 0..c {
            k.data_mut()[((i * c + i) * 3 + 1) * 3 + 1] = 1.0;
        }
        k
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::full(&[1, 3, 3], 1.0).unwrap();
        let y = conv2d(&x, &delta_kernel(1), &Tensor::zeros(&[1]).unwrap()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn single_pixel() {
        let x = Tensor::new(&[1, 1, 1], vec![2.5]).unwrap();
        let mut k = Tensor::full(&[1, 1, 3, 3], 100.0).unwrap();
        k.data_mut()[4] = -3.0;
        let b = Tensor::new(&[1], vec![0.75]).unwrap();
        let y = conv2d(&x, &k, &b).unwrap();
        assert_eq!(y.data(), &[2.5 * -3.0 + 0.75]);
    }

    #[test]
    fn two_column_map_uses_edge_path() {
        let x = Tensor::from_fn(&[2, 3, 2], |i| i as f32 - 4.0).unwrap();
        let k = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 7) % 11) as f32 * 0.1 - 0.5).unwrap();
        let b = Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let fast = conv2d(&x, &k, &b).unwrap();
        let slow = conv2d_reference(&x, &k, &b).unwrap();
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() <= 1e-5 * e.abs().max(1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[2, 4, 4]).unwrap();
        let k = Tensor::zeros(&[3, 1, 3, 3]).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        let err = conv2d(&x, &k, &b).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let k = Tensor::zeros(&[3, 2, 3, 3]).unwrap();
        assert!(conv2d(&x, &k, &Tensor::zeros(&[2]).unwrap()).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 2, 5, 5]).unwrap(), &b).is_err());
    }
}
