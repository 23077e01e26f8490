//! Part-image generation: five cropping techniques, four parts each.
//!
//! Geometry is defined on an `n × n` working grid (224 in the pipeline),
//! with rows `r` and columns `c` counted from the top-left pixel:
//!
//! * `rect`: quadrants, rows/cols `< n/2` are top/left. Order TL, TR, BL, BR.
//! * `tri`: the two main diagonals cut the square. With `d1 = c - r` and
//!   `d2 = r + c - (n - 1)`: top `d1 >= 0, d2 < 0`; right `d1 > 0, d2 >= 0`;
//!   bottom `d1 <= 0, d2 > 0`; left `d1 < 0, d2 <= 0`. Order top, right,
//!   bottom, left.
//! * `circ`: pixels strictly inside the inscribed disc (center
//!   `((n-1)/2, (n-1)/2)`, radius `n/2`) split by the `rect` quadrant rule.
//! * `ldiag`: bands of `d = c - r` cut at `-n/2`, `0`, `n/2`.
//! * `rdiag`: bands of `s = r + c` cut at `n/2`, `n - 1`, `n - 1 + n/2`.
//!
//! Every technique except `circ` partitions the grid exactly; `circ`
//! partitions the disc.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::INPUT_SIZE;
use crate::image::{resize_bilinear, Raster};
use crate::tensor::Tensor;

pub const PARTS_PER_TECHNIQUE: usize = 4;
pub const SLICE_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("slice {0} has no pixels")]
    EmptyMask(String),
    #[error("source must be 3x{n}x{n}, got {shape:?}", n = .expected)]
    SourceShape { expected: usize, shape: Vec<usize> },
    #[error("unknown slicing technique {0:?}")]
    UnknownTechnique(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Rect,
    Tri,
    Circ,
    LDiag,
    RDiag,
}

impl Technique {
    /// Fixed output order of [`slice_all`].
    pub const ALL: [Technique; 5] = [Self::Rect, Self::Tri, Self::Circ, Self::LDiag, Self::RDiag];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rect => "rect",
            Self::Tri => "tri",
            Self::Circ => "circ",
            Self::LDiag => "ldiag",
            Self::RDiag => "rdiag",
        }
    }

    /// Part index of pixel `(r, c)` on an `n × n` grid, `None` when the
    /// pixel belongs to no part (only possible for `Circ`).
    pub fn part_of(self, r: usize, c: usize, n: usize) -> Option<usize> {
        let (ri, ci, ni) = (r as i64, c as i64, n as i64);
        let half = ni / 2;
        let quadrant = || ((ri >= half) as usize) * 2 + (ci >= half) as usize;
        match self {
            Self::Rect => Some(quadrant()),
            Self::Tri => {
                let d1 = ci - ri;
                let d2 = ri + ci - (ni - 1);
                if d1 >= 0 && d2 < 0 {
                    Some(0)
                } else if d1 > 0 && d2 >= 0 {
                    Some(1)
                } else if d1 <= 0 && d2 > 0 {
                    Some(2)
                } else {
                    Some(3)
                }
            }
            Self::Circ => {
                let center = (n as f64 - 1.0) / 2.0;
                let radius = n as f64 / 2.0;
                let (dy, dx) = (r as f64 - center, c as f64 - center);
                (dy * dy + dx * dx < radius * radius).then(quadrant)
            }
            Self::LDiag => {
                let d = ci - ri;
                Some(if d < -half {
                    0
                } else if d < 0 {
                    1
                } else if d < half {
                    2
                } else {
                    3
                })
            }
            Self::RDiag => {
                let s = ri + ci;
                Some(if s < half {
                    0
                } else if s < ni - 1 {
                    1
                } else if s < ni - 1 + half {
                    2
                } else {
                    3
                })
            }
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = SliceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SliceError::UnknownTechnique(s.to_owned()))
    }
}

/// Tight bounding box of a mask's true pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMask {
    technique: Technique,
    index: usize,
    size: usize,
    mask: Vec<bool>,
    bbox: BBox,
}

impl SliceMask {
    /// Builds the mask of part `index` of `technique` on an `size × size`
    /// grid.
    pub fn new(technique: Technique, index: usize, size: usize) -> Result<Self, SliceError> {
        let mut mask = vec![false; size * size];
        let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..size {
            for c in 0..size {
                if technique.part_of(r, c, size) == Some(index) {
                    mask[r * size + c] = true;
                    top = top.min(r);
                    left = left.min(c);
                    bottom = bottom.max(r);
                    right = right.max(c);
                }
            }
        }
        if top == usize::MAX {
            return Err(SliceError::EmptyMask(format!("{technique}_{index}")));
        }
        let bbox = BBox { top, left, height: bottom - top + 1, width: right - left + 1 };
        Ok(Self { technique, index, size, mask, bbox })
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.size + c]
    }

    pub fn pixels(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `<technique>_<index>`, the stem used for exported files.
    pub fn label(&self) -> String {
        format!("{}_{}", self.technique, self.index)
    }

    /// Graymap rendering: 255 inside the mask, 0 outside.
    pub fn to_raster(&self) -> Raster {
        let data = self.mask.iter().map(|&m| if m { 255.0 } else { 0.0 }).collect();
        Raster::new(self.size, self.size, 1, data).unwrap()
    }
}

pub fn technique_masks(technique: Technique, size: usize) -> Result<[SliceMask; 4], SliceError> {
    let masks = (0..PARTS_PER_TECHNIQUE)
        .map(|i| SliceMask::new(technique, i, size))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(masks.try_into().unwrap())
}

pub fn rect_slices(size: usize) -> Result<[SliceMask; 4], SliceError> {
    technique_masks(Technique::Rect, size)
}

pub fn tri_slices(size: usize) -> Result<[SliceMask; 4], SliceError> {
    technique_masks(Technique::Tri, size)
}

pub fn circ_slices(size: usize) -> Result<[SliceMask; 4], SliceError> {
    technique_masks(Technique::Circ, size)
}

pub fn ldiag_slices(size: usize) -> Result<[SliceMask; 4], SliceError> {
    technique_masks(Technique::LDiag, size)
}

pub fn rdiag_slices(size: usize) -> Result<[SliceMask; 4], SliceError> {
    technique_masks(Technique::RDiag, size)
}

/// All 20 masks of the 224 working grid, in [`slice_all`] order. Built once.
pub fn working_masks() -> &'static [SliceMask] {
    static MASKS: OnceLock<Vec<SliceMask>> = OnceLock::new();
    MASKS.get_or_init(|| {
        Technique::ALL
            .iter()
            .flat_map(|&t| technique_masks(t, INPUT_SIZE).expect("224 grid yields nonempty parts"))
            .collect()
    })
}

/// A rendered part image: always `3 × 224 × 224`, pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct SubImage {
    pub pixels: Tensor,
    pub technique: Technique,
    pub index: usize,
}

/// Crops `source` to the mask's bounding box, paints pixels outside the mask
/// with `fill`, and resizes the crop back to `224 × 224`.
pub fn render_slice(source: &Tensor, mask: &SliceMask, fill: [f32; 3]) -> Result<SubImage, SliceError> {
    let n = mask.size();
    if source.shape() != [3, n, n] {
        return Err(SliceError::SourceShape { expected: n, shape: source.shape().to_vec() });
    }
    if mask.count() == 0 {
        return Err(SliceError::EmptyMask(mask.label()));
    }
    let b = mask.bbox();
    let mut crop = Vec::with_capacity(3 * b.height * b.width);
    for (ch, &fill_value) in fill.iter().enumerate() {
        for r in b.top..b.top + b.height {
            for c in b.left..b.left + b.width {
                crop.push(if mask.contains(r, c) { source.at3(ch, r, c) } else { fill_value });
            }
        }
    }
    let crop = Tensor::new(&[3, b.height, b.width], crop).unwrap();
    Ok(SubImage {
        pixels: resize_bilinear(&crop, INPUT_SIZE, INPUT_SIZE),
        technique: mask.technique(),
        index: mask.index(),
    })
}

/// The 20 part images of a `3 × 224 × 224` working image, ordered rect 0-3,
/// tri 0-3, circ 0-3, ldiag 0-3, rdiag 0-3.
pub fn slice_all(image: &Tensor, fill: [f32; 3]) -> Result<Vec<SubImage>, SliceError> {
    working_masks().par_iter().map(|m| render_slice(image, m, fill)).collect()
}
