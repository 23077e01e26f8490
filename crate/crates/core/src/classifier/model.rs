//! One-vs-rest models and the textual `HDFM` model format:
//!
//! ```text
//! HDFM 1
//! classes K
//! dim D
//! C <cost>
//! class <id> <bias> <w_1> ... <w_D>     (K lines)
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load → save is
//! byte-identical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::solver::{train_binary_with, SolverOptions};
use super::{dot, ClassifierError, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    classes: Vec<u32>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    dim: usize,
    cost: f64,
}

impl LinearModel {
    pub fn new(classes: Vec<u32>, weights: Vec<Vec<f64>>, biases: Vec<f64>, cost: f64) -> Result<Self, ClassifierError> {
        let dim = weights.first().map_or(0, Vec::len);
        if classes.len() < 2 || weights.len() != classes.len() || biases.len() != classes.len() {
            return Err(ClassifierError::ModelFormat(format!(
                "need K >= 2 classes with one weight vector and bias each (K={}, weights={}, biases={})",
                classes.len(),
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().any(|w| w.len() != dim) {
            return Err(ClassifierError::ModelFormat("weight vectors differ in length".into()));
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
        Ok(Self { classes, weights, biases, dim, cost })
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weights[k]
    }

    pub fn bias(&self, k: usize) -> f64 {
        self.biases[k]
    }

    /// `w_k · x + b_k` for every class, in `classes()` order.
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).map(|(w, b)| dot(w, x) + b).collect()
    }

    /// Class with the largest decision value; ties go to the smallest id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        argmax_class(&self.classes, &self.decision_values(x))
    }
}

/// `classes` is sorted ascending, so the first maximum is the smallest id.
pub(crate) fn argmax_class(classes: &[u32], scores: &[f64]) -> u32 {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    classes[best]
}

pub(crate) fn class_set(labels: &[u32]) -> Result<Vec<u32>, ClassifierError> {
    let classes: Vec<u32> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    Ok(classes)
}

pub fn train_ovr(x: &Matrix, labels: &[u32], c: f64) -> Result<LinearModel, ClassifierError> {
    train_ovr_with(x, labels, c, &SolverOptions::default())
}

/// Trains one "class k vs. rest" binary model per class present in `labels`.
pub fn train_ovr_with(x: &Matrix, labels: &[u32], c: f64, opts: &SolverOptions) -> Result<LinearModel, ClassifierError> {
    if x.rows() != labels.len() {
        return Err(ClassifierError::DimMismatch(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let classes = class_set(labels)?;
    let models = classes
        .par_iter()
        .map(|&k| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
            train_binary_with(x, &y, c, opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (weights, biases) = models.into_iter().map(|m| (m.weights, m.bias)).unzip();
    LinearModel::new(classes, weights, biases, c)
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate(model: &LinearModel, x: &Matrix, labels: &[u32]) -> Result<f64, ClassifierError> {
    if x.cols() != model.dim() {
        return Err(ClassifierError::DimMismatch(format!(
            "model expects {} features, data has {}",
            model.dim(),
            x.cols()
        )));
    }
    if x.rows() != labels.len() || labels.is_empty() {
        return Err(ClassifierError::DimMismatch(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let correct = (0..x.rows()).filter(|&i| model.predict(x.row(i)) == labels[i]).count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn write_model(model: &LinearModel) -> String {
    let mut s = String::new();
    writeln!(s, "HDFM 1").unwrap();
    writeln!(s, "classes {}", model.classes.len()).unwrap();
    writeln!(s, "dim {}", model.dim).unwrap();
    writeln!(s, "C {}", model.cost).unwrap();
    for (k, &id) in model.classes.iter().enumerate() {
        write!(s, "class {id} {}", model.biases[k]).unwrap();
        for w in &model.weights[k] {
            write!(s, " {w}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn read_model(text: &str) -> Result<LinearModel, ClassifierError> {
    let first = text.lines().next().unwrap_or("");
    if first != "HDFM" && !first.starts_with("HDFM ") {
        return Err(ClassifierError::ModelMagic(first.chars().take(16).collect()));
    }
    if !text.ends_with('\n') {
        return Err(ClassifierError::ModelTruncated("last line has no newline".into()));
    }
    parse_model(text)
}

fn parse_model(text: &str) -> Result<LinearModel, ClassifierError> {
    let bad = |msg: String| ClassifierError::ModelFormat(msg);
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String, ClassifierError> {
        let line = lines.next().ok_or_else(|| ClassifierError::ModelTruncated(format!("missing `{key}` line")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_owned)
            .ok_or_else(|| bad(format!("expected `{key} ...`, found {line:?}")))
    };
    let version = header("HDFM")?;
    if version != "1" {
        return Err(bad(format!("unsupported model version {version}")));
    }
    let k: usize = header("classes")?.parse().map_err(|_| bad("bad class count".into()))?;
    let dim: usize = header("dim")?.parse().map_err(|_| bad("bad dim".into()))?;
    let cost: f64 = header("C")?.parse().map_err(|_| bad("bad C".into()))?;
    let mut classes = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let mut biases = Vec::with_capacity(k);
    for i in 0..k {
        let rest = header("class").map_err(|e| match e {
            ClassifierError::ModelTruncated(_) => {
                ClassifierError::ModelTruncated(format!("expected {k} class lines, found {i}"))
            }
            e => e,
        })?;
        let mut fields = rest.split(' ');
        let id: u32 = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad(format!("class line {i}: bad id")))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("class line {i}: bad number {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != dim + 1 {
            return Err(bad(format!("class line {i}: expected {} numbers, found {}", dim + 1, values.len())));
        }
        classes.push(id);
        biases.push(values[0]);
        weights.push(values[1..].to_vec());
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("unexpected content after class lines".into()));
    }
    if classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("class ids must be strictly increasing".into()));
    }
    LinearModel::new(classes, weights, biases, cost)
}

impl LinearModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        fs::write(path, write_model(self))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        read_model(&fs::read_to_string(path)?)
    }
}
