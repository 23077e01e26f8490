//! One-vs-rest L2-regularized logistic regression with a grid search over
//! the cost parameter.
//!
//! Each binary problem minimizes
//!
//! ```text
//! f(w, b) = ½‖w‖² + C · Σᵢ log(1 + exp(−yᵢ (w·xᵢ + b)))
//! ```
//!
//! with the bias left out of the regularizer. Two Newton solvers are
//! provided: a matrix-free Newton-CG in feature space, and an exact Newton
//! method in the span of the training points (via the Gram matrix) which is
//! much cheaper when there are fewer samples than features.

mod grid;
mod model;
mod solver;

pub use grid::{grid_search_c, stratified_folds, GridEntry, GridSearchConfig, GridSearchReport};
pub use model::{evaluate, read_model, train_ovr, train_ovr_with, write_model, LinearModel};
pub use solver::{
    gradient, objective, train_binary, train_binary_with, BinaryModel, Method, SolverOptions,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("need at least {0} samples")]
    TooFewSamples(usize),
    #[error("features contain NaN or infinite values")]
    NonFinite,
    #[error("cost parameter must be positive and finite, got {0}")]
    InvalidCost(f64),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("labels must be -1 or +1, got {0}")]
    BadBinaryLabel(f64),
    #[error("class {class} has {count} samples, fewer than the {folds} folds")]
    ClassTooSmall { class: u32, count: usize, folds: usize },
    #[error("invalid model file: {0}")]
    ModelFormat(String),
    #[error("not a model file: first line is {0:?}")]
    ModelMagic(String),
    #[error("model file truncated: {0}")]
    ModelTruncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major `f64` sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ClassifierError> {
        if rows * cols != data.len() {
            return Err(ClassifierError::DimMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ClassifierError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ClassifierError::DimMismatch(format!("row {i} has {} values, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Widens `f32` feature rows.
    pub fn from_f32_rows<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self, ClassifierError> {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `X Xᵀ`, row-major `rows × rows`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.rows;
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        g
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
