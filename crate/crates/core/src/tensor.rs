//! Dense `f32` tensors with channel-major activation layout.

use std::fmt;

use crate::engine::EngineError;

/// Dense array of rank 1 to 4, stored row-major.
///
/// Activation maps use the `(channels, height, width)` convention, kernels use
/// `(out_channels, in_channels, 3, 3)`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, EngineError> {
        check_shape(shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(EngineError::Shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, EngineError> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self, EngineError> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self { shape: shape.to_vec(), data: vec![value; n] })
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f32) -> Result<Self, EngineError> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Ok(Self { shape: shape.to_vec(), data: (0..n).map(f).collect() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Interprets the tensor as an activation map, returning `(c, h, w)`.
    pub fn chw(&self) -> Result<(usize, usize, usize), EngineError> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(EngineError::Shape(format!(
                "expected a (channels, height, width) tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Element at `(c, y, x)` of a rank-3 tensor. Panics when out of range.
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_shape(shape: &[usize]) -> Result<(), EngineError> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(EngineError::Shape(format!("rank must be 1..=4, got shape {shape:?}")));
    }
    if shape.contains(&0) {
        return Err(EngineError::Shape(format!("extents must be positive, got shape {shape:?}")));
    }
    Ok(())
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("head", &preview)
            .finish()
    }
}
