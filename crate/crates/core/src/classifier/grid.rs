//! Stratified k-fold grid search over integer cost values.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{argmax_class, class_set};
use super::solver::{solve_primal, GramProblem, SolverOptions};
use super::{dot, ClassifierError, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchConfig {
    /// Candidate costs, searched in ascending order.
    pub costs: Vec<u32>,
    pub folds: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self { costs: (1..=100).collect(), folds: 5, seed: 0, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub c: u32,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub entries: Vec<GridEntry>,
    /// Smallest cost attaining the best mean validation accuracy.
    pub best_c: u32,
    pub best_accuracy: f64,
    pub folds: usize,
    pub seed: u64,
}

/// Fold index for every sample. Each class's samples are shuffled with a
/// ChaCha8 stream keyed by `seed` (stream = rank of the class id) and dealt
/// round-robin, starting one fold later for each successive class.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Result<Vec<usize>, ClassifierError> {
    if folds < 2 {
        return Err(ClassifierError::DimMismatch(format!("need at least 2 folds, got {folds}")));
    }
    let classes = class_set(labels)?;
    let mut assignment = vec![0; labels.len()];
    for (rank, &class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(ClassifierError::ClassTooSmall { class, count: members.len(), folds });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rank as u64);
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = (j + rank) % folds;
        }
    }
    Ok(assignment)
}

/// Cross-validated accuracy of one-vs-rest models for every cost in
/// `config.costs`. Only `x` and `labels` are read, so callers control exactly
/// which samples tuning can see.
pub fn grid_search_c(x: &Matrix, labels: &[u32], config: &GridSearchConfig) -> Result<GridSearchReport, ClassifierError> {
    if x.rows() != labels.len() {
        return Err(ClassifierError::DimMismatch(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    if !x.is_finite() {
        return Err(ClassifierError::NonFinite);
    }
    if config.costs.is_empty() || config.costs.contains(&0) {
        return Err(ClassifierError::InvalidCost(0.0));
    }
    let mut costs = config.costs.clone();
    costs.sort_unstable();
    costs.dedup();

    let classes = class_set(labels)?;
    let fold_of = stratified_folds(labels, config.folds, config.seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..config.folds)
        .map(|f| {
            let train = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let val = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            (train, val)
        })
        .collect();

    let largest_train = splits.iter().map(|s| s.0.len()).max().unwrap_or(0);
    let gram = config.solver.use_gram(largest_train, x.cols()).then(|| x.gram());

    // decision[f][k][cost][v]: score of class k on validation sample v
    let jobs: Vec<(usize, usize)> = (0..config.folds).flat_map(|f| (0..classes.len()).map(move |k| (f, k))).collect();
    let scores: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(f, k)| {
            let (train, val) = &splits[f];
            let y: Vec<f64> = train.iter().map(|&i| if labels[i] == classes[k] { 1.0 } else { -1.0 }).collect();
            cost_path(x, gram.as_deref(), train, val, &y, &costs, &config.solver)
        })
        .collect();

    let n_classes = classes.len();
    let entries: Vec<GridEntry> = costs
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let fold_accuracies: Vec<f64> = (0..config.folds)
                .map(|f| {
                    let val = &splits[f].1;
                    let correct = val
                        .iter()
                        .enumerate()
                        .filter(|&(v, &i)| {
                            let s: Vec<f64> = (0..n_classes).map(|k| scores[f * n_classes + k][ci][v]).collect();
                            argmax_class(&classes, &s) == labels[i]
                        })
                        .count();
                    correct as f64 / val.len() as f64
                })
                .collect();
            let mean_accuracy = fold_accuracies.iter().sum::<f64>() / config.folds as f64;
            GridEntry { c, fold_accuracies, mean_accuracy }
        })
        .collect();

    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.mean_accuracy > entries[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridSearchReport {
        best_c: entries[best].c,
        best_accuracy: entries[best].mean_accuracy,
        entries,
        folds: config.folds,
        seed: config.seed,
    })
}

/// Trains along the ascending cost path, warm-starting each solve from the
/// previous one, and returns validation decision values per cost.
fn cost_path(
    x: &Matrix,
    gram: Option<&[f64]>,
    train: &[usize],
    val: &[usize],
    y: &[f64],
    costs: &[u32],
    opts: &SolverOptions,
) -> Vec<Vec<f64>> {
    let n = x.rows();
    match gram {
        Some(full) => {
            let problem = GramProblem::from_gram(full, n, train);
            let mut start: Option<(Vec<f64>, f64)> = None;
            costs
                .iter()
                .map(|&c| {
                    let sol = problem.solve(y, c as f64, start.as_ref().map(|(a, b)| (a.as_slice(), *b)), opts);
                    let out = val
                        .iter()
                        .map(|&v| {
                            let row = &full[v * n..(v + 1) * n];
                            train.iter().zip(&sol.alpha).map(|(&t, &a)| a * row[t]).sum::<f64>() + sol.bias
                        })
                        .collect();
                    start = Some((sol.alpha, sol.bias));
                    out
                })
                .collect()
        }
        None => {
            let xt = x.select_rows(train);
            let mut start: Option<(Vec<f64>, f64)> = None;
            costs
                .iter()
                .map(|&c| {
                    let m = solve_primal(&xt, y, c as f64, start.as_ref().map(|(w, b)| (w.as_slice(), *b)), opts);
                    let out = val.iter().map(|&v| dot(&m.weights, x.row(v)) + m.bias).collect();
                    start = Some((m.weights, m.bias));
                    out
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(per_class: &[usize]) -> Vec<u32> {
        per_class.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat(k as u32).take(n)).collect()
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let y = labels(&[10, 7, 5]);
        let a = stratified_folds(&y, 5, 3).unwrap();
        assert_eq!(a, stratified_folds(&y, 5, 3).unwrap());
        assert_ne!(a, stratified_folds(&y, 5, 4).unwrap());
        for class in 0..3 {
            let mut per_fold = [0; 5];
            for (i, &f) in a.iter().enumerate() {
                if y[i] == class {
                    per_fold[f] += 1;
                }
            }
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            assert!(hi - lo <= 1 && *lo >= 1, "{per_fold:?}");
        }
    }

    #[test]
    fn small_class_rejected() {
        let y = labels(&[10, 4]);
        assert!(matches!(
            stratified_folds(&y, 5, 0),
            Err(ClassifierError::ClassTooSmall { class: 1, count: 4, folds: 5 })
        ));
    }

    #[test]
    fn gram_and_primal_paths_choose_alike() {
        let y = labels(&[8, 8]);
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let s = if i < 8 { 1.0 } else { -1.0 };
                vec![s * 0.3 + ((i * 13) % 7) as f64 * 0.2 - 0.6, ((i * 5) % 9) as f64 * 0.1]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let run = |method| {
            let cfg = GridSearchConfig {
                costs: vec![1, 2, 5, 10],
                folds: 4,
                seed: 1,
                solver: SolverOptions { method, tolerance: 1e-8, ..Default::default() },
            };
            grid_search_c(&x, &y, &cfg).unwrap()
        };
        let g = run(super::super::Method::Gram);
        let p = run(super::super::Method::Primal);
        for (a, b) in g.entries.iter().zip(&p.entries) {
            assert_eq!(a.fold_accuracies, b.fold_accuracies);
        }
    }
}
