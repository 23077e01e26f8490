//! Pixel rasters, bilinear resampling and netpbm (PGM/PPM) I/O.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("malformed netpbm data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interleaved `height × width × channels` raster in pixel units (0..=255).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if height * width * channels != data.len() {
            return Err(ImageError::Unsupported(format!(
                "{}x{}x{} raster needs {} samples, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, data }
    }

    /// Replicates a single gray channel into RGB; RGB rasters pass through.
    pub fn to_rgb(&self) -> Self {
        if self.channels != 1 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self { height: self.height, width: self.width, channels: 3, data }
    }

    /// Channel-major `(channels, height, width)` tensor.
    pub fn to_planar(&self) -> Result<Tensor, ImageError> {
        if self.data.is_empty() {
            return Err(ImageError::Unsupported("empty image".into()));
        }
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0; self.data.len()];
        for (i, px) in self.data.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out[ch * h * w + i] = v;
            }
        }
        Tensor::new(&[c, h, w], out).map_err(|e| ImageError::Unsupported(e.to_string()))
    }

    /// Inverse of [`Raster::to_planar`].
    pub fn from_planar(t: &Tensor) -> Result<Self, ImageError> {
        let (c, h, w) = t.chw().map_err(|e| ImageError::Unsupported(e.to_string()))?;
        let src = t.data();
        let mut data = Vec::with_capacity(src.len());
        for i in 0..h * w {
            for ch in 0..c {
                data.push(src[ch * h * w + i]);
            }
        }
        Ok(Self { height: h, width: w, channels: c, data })
    }
}

/// Per-axis sample positions for half-pixel-centered bilinear resampling.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of a `(C, H, W)` tensor with half-pixel-centered
/// coordinates and edge clamping.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = input.chw().expect("resize_bilinear needs a rank-3 tensor");
    let rows = axis_taps(h, out_h);
    let cols = axis_taps(w, out_w);
    let src = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, fx) in &cols {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out).unwrap()
}

pub fn read_netpbm(path: impl AsRef<Path>) -> Result<Raster, ImageError> {
    decode_netpbm(&fs::read(path)?)
}

/// Decodes P2/P3 (ASCII) and P5/P6 (binary) graymaps and pixmaps, scaling
/// samples to the 0..=255 range.
pub fn decode_netpbm(buf: &[u8]) -> Result<Raster, ImageError> {
    let mut pos = 0;
    let magic = next_token(buf, &mut pos).ok_or_else(|| ImageError::Malformed("missing magic".into()))?;
    let (channels, binary) = match magic {
        b"P2" => (1, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        other => {
            return Err(ImageError::Unsupported(format!(
                "not a PGM/PPM file (magic {:?})",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(buf, &mut pos).ok_or_else(|| ImageError::Malformed(format!("missing {name}")))?;
        *slot = parse_usize(tok).ok_or_else(|| ImageError::Malformed(format!("bad {name}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(ImageError::Unsupported("empty image".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::Malformed(format!("maxval {maxval} out of range")));
    }
    let n = width * height * channels;
    let scale = 255.0 / maxval as f32;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let body = buf.get(pos..pos + need).ok_or_else(|| ImageError::Malformed("raster data truncated".into()))?;
        if wide {
            data.extend(body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale));
        } else {
            data.extend(body.iter().map(|&b| b as f32 * scale));
        }
    } else {
        for _ in 0..n {
            let tok = next_token(buf, &mut pos).ok_or_else(|| ImageError::Malformed("raster data truncated".into()))?;
            let v = parse_usize(tok).ok_or_else(|| ImageError::Malformed("bad sample".into()))?;
            data.push(v.min(maxval) as f32 * scale);
        }
    }
    Raster::new(height, width, channels, data)
}

fn next_token<'a>(buf: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &buf[start..*pos])
}

fn parse_usize(tok: &[u8]) -> Option<usize> {
    std::str::from_utf8(tok).ok()?.parse().ok()
}

/// Encodes as binary P5 (1 channel) or P6 (3 channels), rounding and
/// clamping samples to 0..=255.
pub fn encode_netpbm(raster: &Raster) -> Result<Vec<u8>, ImageError> {
    let magic = match raster.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(ImageError::Unsupported(format!("cannot encode {c}-channel raster"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend(raster.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

pub fn write_netpbm(raster: &Raster, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_netpbm(raster)?)?;
    Ok(())
}
