//! Binary L2-regularized logistic regression solvers.

use nalgebra::{DMatrix, DVector};

use super::{dot, ClassifierError, Matrix};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Gram-space Newton when samples do not outnumber features (and the
    /// dense system stays small), feature-space Newton-CG otherwise.
    Auto,
    Primal,
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once `‖∇f‖ ≤ tolerance · max(1, ‖∇f(0, 0)‖)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: Method,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_iterations: 1000, method: Method::Auto }
    }
}

impl SolverOptions {
    pub(crate) fn use_gram(&self, samples: usize, dim: usize) -> bool {
        match self.method {
            Method::Gram => true,
            Method::Primal => false,
            Method::Auto => samples <= dim && samples <= 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting from the initial point.
    pub objective_trace: Vec<f64>,
    pub gradient_norm: f64,
}

impl BinaryModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// `log(1 + exp(-z))` without overflow.
fn log_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-z))`
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margins(x: &Matrix, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.rows()).map(|i| dot(x.row(i), w) + b).collect()
}

pub fn objective(x: &Matrix, y: &[f64], c: f64, w: &[f64], b: f64) -> f64 {
    let m = margins(x, w, b);
    0.5 * dot(w, w) + c * m.iter().zip(y).map(|(&mi, &yi)| log_loss(yi * mi)).sum::<f64>()
}

/// Analytic gradient `(∂f/∂w, ∂f/∂b)`.
pub fn gradient(x: &Matrix, y: &[f64], c: f64, w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let m = margins(x, w, b);
    let mut gw = w.to_vec();
    let mut gb = 0.0;
    for (i, (&mi, &yi)) in m.iter().zip(y).enumerate() {
        let s = -yi * sigmoid(-yi * mi) * c;
        gb += s;
        for (g, &xv) in gw.iter_mut().zip(x.row(i)) {
            *g += s * xv;
        }
    }
    (gw, gb)
}

fn check_problem(x: &Matrix, y: &[f64], c: f64) -> Result<(), ClassifierError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(ClassifierError::InvalidCost(c));
    }
    if x.rows() != y.len() {
        return Err(ClassifierError::DimMismatch(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.rows() < 2 {
        return Err(ClassifierError::TooFewSamples(2));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(ClassifierError::BadBinaryLabel(bad));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(ClassifierError::SingleClass);
    }
    if !x.is_finite() {
        return Err(ClassifierError::NonFinite);
    }
    Ok(())
}

pub fn train_binary(x: &Matrix, y: &[f64], c: f64) -> Result<BinaryModel, ClassifierError> {
    train_binary_with(x, y, c, &SolverOptions::default())
}

pub fn train_binary_with(x: &Matrix, y: &[f64], c: f64, opts: &SolverOptions) -> Result<BinaryModel, ClassifierError> {
    check_problem(x, y, c)?;
    if opts.use_gram(x.rows(), x.cols()) {
        let gram = GramProblem::new(x);
        let sol = gram.solve(y, c, None, opts);
        Ok(sol.into_model(x))
    } else {
        Ok(solve_primal(x, y, c, None, opts))
    }
}

/// Newton-CG in feature space with Armijo backtracking.
pub(crate) fn solve_primal(
    x: &Matrix,
    y: &[f64],
    c: f64,
    start: Option<(&[f64], f64)>,
    opts: &SolverOptions,
) -> BinaryModel {
    let (n, d) = (x.rows(), x.cols());
    let norm = |gw: &[f64], gb: f64| (dot(gw, gw) + gb * gb).sqrt();
    let (gw0, gb0) = gradient(x, y, c, &vec![0.0; d], 0.0);
    let stop = opts.tolerance * norm(&gw0, gb0).max(1.0);
    let (mut w, mut b) = match start {
        Some((w, b)) => (w.to_vec(), b),
        None => (vec![0.0; d], 0.0),
    };

    let mut f = objective(x, y, c, &w, b);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm;
    loop {
        let m = margins(x, &w, b);
        let (gw, gb) = gradient(x, y, c, &w, b);
        gnorm = norm(&gw, gb);
        if gnorm <= stop {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        let curv: Vec<f64> = m.iter().map(|&mi| sigmoid(mi) * sigmoid(-mi)).collect();
        let hess = |vw: &[f64], vb: f64| -> (Vec<f64>, f64) {
            let mut hw = vw.to_vec();
            let mut hb = 0.0;
            for i in 0..n {
                let u = c * curv[i] * (dot(x.row(i), vw) + vb);
                hb += u;
                for (h, &xv) in hw.iter_mut().zip(x.row(i)) {
                    *h += u * xv;
                }
            }
            (hw, hb)
        };

        // conjugate gradient on H p = -g
        let (mut pw, mut pb) = (vec![0.0; d], 0.0);
        let (mut rw, mut rb): (Vec<f64>, f64) = (gw.iter().map(|v| -v).collect(), -gb);
        let (mut dw, mut db) = (rw.clone(), rb);
        let mut rr = dot(&rw, &rw) + rb * rb;
        let cg_tol = (0.1 * gnorm).powi(2);
        for _ in 0..(d + 1).min(250) {
            if rr <= cg_tol {
                break;
            }
            let (hw, hb) = hess(&dw, db);
            let dhd = dot(&dw, &hw) + db * hb;
            if dhd <= 0.0 || !dhd.is_finite() {
                break;
            }
            let alpha = rr / dhd;
            pw.iter_mut().zip(&dw).for_each(|(p, &v)| *p += alpha * v);
            pb += alpha * db;
            rw.iter_mut().zip(&hw).for_each(|(r, &v)| *r -= alpha * v);
            rb -= alpha * hb;
            let rr_new = dot(&rw, &rw) + rb * rb;
            let beta = rr_new / rr;
            dw.iter_mut().zip(&rw).for_each(|(v, &r)| *v = r + beta * *v);
            db = rb + beta * db;
            rr = rr_new;
        }
        let mut slope = dot(&gw, &pw) + gb * pb;
        if !(slope < 0.0) {
            pw = gw.iter().map(|v| -v).collect();
            pb = -gb;
            slope = -(gnorm * gnorm);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let wt: Vec<f64> = w.iter().zip(&pw).map(|(a, p)| a + t * p).collect();
            let bt = b + t * pb;
            let ft = objective(x, y, c, &wt, bt);
            if ft <= f + ARMIJO * t * slope {
                accepted = Some((wt, bt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((wt, bt, ft)) = accepted else { break };
        w = wt;
        b = bt;
        f = ft;
        trace.push(f);
        iterations += 1;
    }
    BinaryModel { weights: w, bias: b, iterations, converged, objective_trace: trace, gradient_norm: gnorm }
}

/// Training points represented only through their inner products. The
/// minimizer satisfies `w = Xᵀ α` for some `α`, so the problem can be solved
/// over `(α, b)` with exact Newton steps on an `(n+1)`-dimensional system.
#[derive(Debug, Clone)]
pub(crate) struct GramProblem {
    n: usize,
    k: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct GramSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub gradient_norm: f64,
}

impl GramSolution {
    pub fn into_model(self, x: &Matrix) -> BinaryModel {
        let mut w = vec![0.0; x.cols()];
        for (i, &a) in self.alpha.iter().enumerate() {
            if a != 0.0 {
                w.iter_mut().zip(x.row(i)).for_each(|(wv, &xv)| *wv += a * xv);
            }
        }
        BinaryModel {
            weights: w,
            bias: self.bias,
            iterations: self.iterations,
            converged: self.converged,
            objective_trace: self.trace,
            gradient_norm: self.gradient_norm,
        }
    }
}

impl GramProblem {
    pub fn new(x: &Matrix) -> Self {
        Self { n: x.rows(), k: x.gram() }
    }

    /// Sub-problem over a subset of points from a precomputed Gram matrix.
    pub fn from_gram(full: &[f64], full_n: usize, idx: &[usize]) -> Self {
        let n = idx.len();
        let mut k = Vec::with_capacity(n * n);
        for &i in idx {
            for &j in idx {
                k.push(full[i * full_n + j]);
            }
        }
        Self { n, k }
    }

    fn kmul(&self, v: &[f64]) -> Vec<f64> {
        self.k.chunks_exact(self.n).map(|row| dot(row, v)).collect()
    }

    fn objective(&self, y: &[f64], c: f64, alpha_k_alpha: f64, ka: &[f64], b: f64) -> f64 {
        0.5 * alpha_k_alpha + c * ka.iter().zip(y).map(|(&m, &yi)| log_loss(yi * (m + b))).sum::<f64>()
    }

    /// Gradient norm at `w = 0, b = 0`, the reference scale of the stopping rule.
    fn initial_gradient_norm(&self, y: &[f64], c: f64) -> f64 {
        let s: Vec<f64> = y.iter().map(|&yi| -0.5 * yi * c).collect();
        let ks = self.kmul(&s);
        let sum: f64 = s.iter().sum();
        (dot(&s, &ks).max(0.0) + sum * sum).sqrt()
    }

    /// Newton's method from `start` (or the origin).
    pub fn solve(&self, y: &[f64], c: f64, start: Option<(&[f64], f64)>, opts: &SolverOptions) -> GramSolution {
        let n = self.n;
        let (mut alpha, mut b) = match start {
            Some((a, b)) => (a.to_vec(), b),
            None => (vec![0.0; n], 0.0),
        };
        let stop = opts.tolerance * self.initial_gradient_norm(y, c).max(1.0);
        let mut ka = self.kmul(&alpha);
        let mut aka = dot(&alpha, &ka);
        let mut f = self.objective(y, c, aka, &ka, b);
        let mut trace = vec![f];
        let mut iterations = 0;
        let mut converged = false;
        let mut gnorm;
        loop {
            let margins: Vec<f64> = ka.iter().map(|&m| m + b).collect();
            let s: Vec<f64> = margins.iter().zip(y).map(|(&m, &yi)| -yi * sigmoid(-yi * m)).collect();
            // ∇_w f = Xᵀ r, ∂f/∂b = C Σ s
            let r: Vec<f64> = alpha.iter().zip(&s).map(|(&a, &si)| a + c * si).collect();
            let kr = self.kmul(&r);
            let gb = c * s.iter().sum::<f64>();
            gnorm = (dot(&r, &kr).max(0.0) + gb * gb).sqrt();
            if gnorm <= stop {
                converged = true;
                break;
            }
            if iterations >= opts.max_iterations {
                break;
            }

            let curv: Vec<f64> = margins.iter().map(|&m| sigmoid(m) * sigmoid(-m)).collect();
            let mut sys = DMatrix::<f64>::zeros(n + 1, n + 1);
            let mut rhs = DVector::<f64>::zeros(n + 1);
            for i in 0..n {
                let cd = c * curv[i];
                for j in 0..n {
                    sys[(i, j)] = cd * self.k[i * n + j];
                    sys[(n, j)] += cd * self.k[i * n + j];
                }
                sys[(i, i)] += 1.0;
                sys[(i, n)] = cd;
                sys[(n, n)] += cd;
                rhs[i] = -r[i];
            }
            sys[(n, n)] += 1e-12;
            rhs[n] = -gb;

            let mut step = sys.lu().solve(&rhs).map(|v| {
                let delta: Vec<f64> = v.iter().take(n).copied().collect();
                (delta, v[n])
            });
            let mut kd = Vec::new();
            let mut slope = f64::NAN;
            if let Some((delta, db)) = &step {
                kd = self.kmul(delta);
                slope = dot(&kr, delta) + gb * db;
            }
            if !(slope < 0.0) || !slope.is_finite() {
                step = Some((r.iter().map(|v| -v).collect(), -gb));
                kd = kr.iter().map(|v| -v).collect();
                slope = -(gnorm * gnorm);
            }
            let (delta, db) = step.unwrap();
            let dkd = dot(&delta, &kd);
            let akd = dot(&alpha, &kd);

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let ka_t: Vec<f64> = ka.iter().zip(&kd).map(|(a, d)| a + t * d).collect();
                let aka_t = aka + 2.0 * t * akd + t * t * dkd;
                let ft = self.objective(y, c, aka_t, &ka_t, b + t * db);
                if ft <= f + ARMIJO * t * slope {
                    accepted = Some((ka_t, ft));
                    break;
                }
                t *= 0.5;
            }
            let Some((ka_t, ft)) = accepted else { break };
            alpha.iter_mut().zip(&delta).for_each(|(a, d)| *a += t * d);
            b += t * db;
            ka = ka_t;
            // recompute rather than carry the quadratic update forward
            aka = dot(&alpha, &ka);
            f = ft;
            trace.push(f);
            iterations += 1;
        }
        GramSolution { alpha, bias: b, iterations, converged, trace, gradient_norm: gnorm }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Matrix, Vec<f64>) {
        let rows = vec![
            vec![2.0, 2.1],
            vec![2.5, 1.9],
            vec![3.0, 2.4],
            vec![-2.0, -1.5],
            vec![-2.2, -2.6],
            vec![-3.1, -2.0],
        ];
        (Matrix::from_rows(&rows).unwrap(), vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    }

    #[test]
    fn separable_clusters_are_classified() {
        let (x, y) = blobs();
        for method in [Method::Primal, Method::Gram] {
            let opts = SolverOptions { method, ..Default::default() };
            let m = train_binary_with(&x, &y, 10.0, &opts).unwrap();
            assert!(m.converged);
            for i in 0..x.rows() {
                assert_eq!(m.decision(x.row(i)).signum(), y[i]);
            }
        }
    }

    #[test]
    fn both_methods_agree() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0).collect())
            .collect();
        let y: Vec<f64> = (0..12).map(|i| if (i * 5) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let tight = SolverOptions { tolerance: 1e-10, ..Default::default() };
        let p = train_binary_with(&x, &y, 3.0, &SolverOptions { method: Method::Primal, ..tight }).unwrap();
        let g = train_binary_with(&x, &y, 3.0, &SolverOptions { method: Method::Gram, ..tight }).unwrap();
        for (a, b) in p.weights.iter().zip(&g.weights) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((p.bias - g.bias).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_problems() {
        let (x, y) = blobs();
        assert!(matches!(train_binary(&x, &[1.0; 6], 1.0), Err(ClassifierError::SingleClass)));
        assert!(matches!(train_binary(&x, &y, 0.0), Err(ClassifierError::InvalidCost(_))));
        assert!(matches!(train_binary(&x, &y, f64::NAN), Err(ClassifierError::InvalidCost(_))));
        let mut bad = y.clone();
        bad[0] = 0.0;
        assert!(matches!(train_binary(&x, &bad, 1.0), Err(ClassifierError::BadBinaryLabel(_))));
        let nan = Matrix::from_rows(&[vec![f64::NAN, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(train_binary(&nan, &[1.0, -1.0], 1.0), Err(ClassifierError::NonFinite)));
        assert!(train_binary(&x, &y[..5], 1.0).is_err());
    }

    #[test]
    fn stable_loss_and_sigmoid() {
        assert!((log_loss(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_loss(-800.0) - 800.0).abs() < 1e-9);
        assert!(log_loss(800.0) >= 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
