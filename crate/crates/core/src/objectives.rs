//! Objective functions and the benchmark problems: quadratics with a
//! prescribed spectrum, the 2-D Rosenbrock function, box-constrained logistic
//! regression and nonnegative least squares.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::proximal::Prox;

/// Energy shift `c` used when a problem does not override it.
pub const DEFAULT_ENERGY_SHIFT: f64 = 1.0;

/// Power-iteration settings for `‖A‖₂`.
pub const SPECTRAL_NORM_TOL: f64 = 1e-8;
pub const SPECTRAL_NORM_MAX_ITER: usize = 10_000;

/// A differentiable objective `f: ℝⁿ → ℝ`, bounded below.
///
/// Implementations must be free of interior mutability so that evaluations at
/// different points can run concurrently.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> DenseVector;

    fn value_and_gradient(&self, x: &[f64]) -> (f64, DenseVector) {
        (self.value(x), self.gradient(x))
    }

    /// The shift `c` with `f(x) + c > 0` on the evaluation domain.
    fn energy_shift(&self) -> f64 {
        DEFAULT_ENERGY_SHIFT
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> DenseVector {
        (**self).gradient(x)
    }
    fn value_and_gradient(&self, x: &[f64]) -> (f64, DenseVector) {
        (**self).value_and_gradient(x)
    }
    fn energy_shift(&self) -> f64 {
        (**self).energy_shift()
    }
}

/// `f(x) = ½xᵀAx − bᵀx` with `A` symmetric positive definite.
///
/// `f*` is negative whenever `b ≠ 0`, so the default energy shift is
/// `max(1, 1 − f*)` rather than 1.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DenseMatrix,
    b: DenseVector,
    minimizer: DenseVector,
    mu: f64,
    l: f64,
    shift: f64,
}

impl Quadratic {
    pub fn new(a: DenseMatrix, b: DenseVector) -> Result<Self> {
        if a.rows() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: b.dim(),
            });
        }
        let (mu, l) = linalg::spectral_bounds(&a)?;
        if mu <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "quadratic Hessian must be positive definite, smallest eigenvalue is {mu:e}"
            )));
        }
        let chol = Cholesky::new(a.to_nalgebra())
            .ok_or_else(|| Error::InvalidInput("Cholesky factorization of the Hessian failed".into()))?;
        let x = chol.solve(&DVector::from_column_slice(&b));
        let minimizer = DenseVector::new(x.iter().copied().collect())?;
        let min_value = -0.5 * b.dot(&minimizer);
        Ok(Self {
            a,
            b,
            minimizer,
            mu,
            l,
            // f + c ≥ 1 everywhere.
            shift: DEFAULT_ENERGY_SHIFT.max(DEFAULT_ENERGY_SHIFT - min_value),
        })
    }

    pub fn with_energy_shift(mut self, c: f64) -> Self {
        self.shift = c;
        self
    }

    pub fn hessian(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn linear_term(&self) -> &DenseVector {
        &self.b
    }

    pub fn minimizer(&self) -> &DenseVector {
        &self.minimizer
    }

    /// `f(x*) = −½ bᵀx*`.
    pub fn min_value(&self) -> f64 {
        -0.5 * self.b.dot(&self.minimizer)
    }

    /// `(μ, L)`: extreme eigenvalues of the Hessian.
    pub fn spectrum(&self) -> (f64, f64) {
        (self.mu, self.l)
    }

    /// `2/(L+μ)`, the step that minimizes `‖I − ηA‖`.
    pub fn optimal_step(&self) -> f64 {
        2.0 / (self.l + self.mu)
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let ax = self.a.matvec(x);
        0.5 * linalg::dot(x, &ax) - linalg::dot(&self.b, x)
    }

    fn gradient(&self, x: &[f64]) -> DenseVector {
        self.a.matvec(x).sub(&self.b)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, DenseVector) {
        let ax = self.a.matvec(x);
        let value = 0.5 * linalg::dot(x, &ax) - linalg::dot(&self.b, x);
        (value, ax.sub(&self.b))
    }

    fn energy_shift(&self) -> f64 {
        self.shift
    }
}

/// Random quadratic whose Hessian has eigenvalues log-uniformly spaced in
/// `[1, kappa]`, rotated by a seeded random orthogonal matrix. `b` is standard
/// normal. The same `(dim, kappa, seed)` always yields identical bits.
pub fn make_quadratic(dim: usize, kappa: f64, seed: u64) -> Result<Quadratic> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "quadratic dimension must be >= 2, got {dim}"
        )));
    }
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "condition number must exceed 1, got {kappa}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(&mut rng, dim, dim);
    let eig: Vec<f64> = (0..dim).map(|i| kappa.powf(i as f64 / (dim - 1) as f64)).collect();

    let mut data = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = (0..dim).map(|k| q[(i, k)] * eig[k] * q[(j, k)]).sum();
            data[i * dim + j] = v;
            data[j * dim + i] = v;
        }
    }
    let a = DenseMatrix::new(dim, dim, data)?;
    let b = DenseVector::from_fn(dim, |_| StandardNormal.sample(&mut rng));
    Quadratic::new(a, b)
}

/// Seeded `rows x cols` matrix with orthonormal columns (`rows >= cols`).
fn random_orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign convention: make diag(R) positive so the factor is unique.
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `f(x₁,x₂) = (1−x₁)² + 100(x₂−x₁²)²`.
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock {
    shift: f64,
}

impl Default for Rosenbrock {
    fn default() -> Self {
        Self {
            shift: DEFAULT_ENERGY_SHIFT,
        }
    }
}

impl Rosenbrock {
    pub fn with_energy_shift(mut self, c: f64) -> Self {
        self.shift = c;
        self
    }

    pub fn minimizer() -> DenseVector {
        DenseVector::filled(2, 1.0)
    }
}

pub fn rosenbrock_2d() -> Rosenbrock {
    Rosenbrock::default()
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        (1.0 - x1).powi(2) + 100.0 * (x2 - x1 * x1).powi(2)
    }

    fn gradient(&self, x: &[f64]) -> DenseVector {
        let (x1, x2) = (x[0], x[1]);
        let t = x2 - x1 * x1;
        DenseVector::from_vec(vec![-2.0 * (1.0 - x1) - 400.0 * x1 * t, 200.0 * t])
    }

    fn energy_shift(&self) -> f64 {
        self.shift
    }
}

/// `f(x) = (1/M) Σ log(1 + exp(−yᵢ aᵢᵀx)) + μ‖x‖²`.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    a: DenseMatrix,
    y: Vec<f64>,
    mu: f64,
    shift: f64,
}

impl LogisticLoss {
    pub fn new(a: DenseMatrix, y: &[f64], mu: f64) -> Result<Self> {
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: y.len(),
            });
        }
        if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
            return Err(Error::BadLabel { row, value });
        }
        check_mu(mu)?;
        Ok(Self {
            a,
            y: y.to_vec(),
            mu,
            shift: DEFAULT_ENERGY_SHIFT,
        })
    }

    pub fn with_energy_shift(mut self, c: f64) -> Self {
        self.shift = c;
        self
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.a
    }

    /// Lipschitz constant of the data term alone, `‖A‖²₂/(4M)`.
    pub fn data_lipschitz(&self) -> f64 {
        let s = linalg::spectral_norm(&self.a, SPECTRAL_NORM_TOL, SPECTRAL_NORM_MAX_ITER);
        s * s / (4.0 * self.a.rows() as f64)
    }

    fn margins(&self, x: &[f64]) -> DenseVector {
        let z = self.a.matvec(x);
        z.zip_map(&DenseVector::from_vec(self.y.clone()), |zi, yi| -yi * zi)
    }

    fn value_from_margins(&self, t: &[f64], x: &[f64]) -> f64 {
        let m = self.a.rows() as f64;
        t.iter().map(|&ti| softplus(ti)).sum::<f64>() / m + self.mu * linalg::dot(x, x)
    }

    fn gradient_from_margins(&self, t: &[f64], x: &[f64]) -> DenseVector {
        let m = self.a.rows() as f64;
        let coeff: Vec<f64> = t.iter().zip(&self.y).map(|(&ti, &yi)| -yi * sigmoid(ti) / m).collect();
        let mut g = self.a.tr_matvec(&coeff);
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += 2.0 * self.mu * xi;
        }
        g
    }
}

impl Objective for LogisticLoss {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let t = self.margins(x);
        self.value_from_margins(&t, x)
    }

    fn gradient(&self, x: &[f64]) -> DenseVector {
        let t = self.margins(x);
        self.gradient_from_margins(&t, x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, DenseVector) {
        let t = self.margins(x);
        (self.value_from_margins(&t, x), self.gradient_from_margins(&t, x))
    }

    fn energy_shift(&self) -> f64 {
        self.shift
    }
}

/// `log(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `f(x) = (1/2M)‖Ax − b‖² + μ‖x‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DenseMatrix,
    b: DenseVector,
    mu: f64,
    shift: f64,
}

impl LeastSquares {
    pub fn new(a: DenseMatrix, b: DenseVector, mu: f64) -> Result<Self> {
        if b.dim() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: b.dim(),
            });
        }
        check_mu(mu)?;
        Ok(Self {
            a,
            b,
            mu,
            shift: DEFAULT_ENERGY_SHIFT,
        })
    }

    pub fn with_energy_shift(mut self, c: f64) -> Self {
        self.shift = c;
        self
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.a
    }

    /// `‖A‖²₂/M`.
    pub fn data_lipschitz(&self) -> f64 {
        let s = linalg::spectral_norm(&self.a, SPECTRAL_NORM_TOL, SPECTRAL_NORM_MAX_ITER);
        s * s / self.a.rows() as f64
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_and_gradient(x).0
    }

    fn gradient(&self, x: &[f64]) -> DenseVector {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, DenseVector) {
        let m = self.a.rows() as f64;
        let r = self.a.matvec(x).sub(&self.b);
        let value = r.dot(&r) / (2.0 * m) + self.mu * linalg::dot(x, x);
        let mut g = self.a.tr_matvec(&r).scaled(1.0 / m);
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += 2.0 * self.mu * xi;
        }
        (value, g)
    }

    fn energy_shift(&self) -> f64 {
        self.shift
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "regularization weight must be >= 0, got {mu}"
        )))
    }
}

/// `min f(x) + h(x)` with a smooth `f` and a proximable `h`.
pub struct CompositeProblem {
    pub smooth: Box<dyn Objective>,
    pub prox: Prox,
    /// Lipschitz estimate of `∇f`.
    pub lipschitz: f64,
}

impl CompositeProblem {
    pub fn new(smooth: Box<dyn Objective>, prox: Prox, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Lipschitz estimate must be positive, got {lipschitz}"
            )));
        }
        Ok(Self {
            smooth,
            prox,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }
}

impl std::fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("dim", &self.dim())
            .field("prox", &self.prox)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Logistic regression with the constraint `‖x‖_∞ ≤ 1`.
/// The Lipschitz estimate is `‖A‖²₂/(4M) + 2μ`.
pub fn make_logistic(a: DenseMatrix, y: &[f64], mu: f64) -> Result<CompositeProblem> {
    let loss = LogisticLoss::new(a, y, mu)?;
    let lipschitz = loss.data_lipschitz() + 2.0 * mu;
    CompositeProblem::new(Box::new(loss), Prox::LinfBall { radius: 1.0 }, lipschitz)
}

/// Regularized least squares with the constraint `x ≥ 0`.
/// The Lipschitz estimate is `‖A‖²₂/M + 2μ`.
pub fn make_nnls(a: DenseMatrix, b: DenseVector, mu: f64) -> Result<CompositeProblem> {
    let loss = LeastSquares::new(a, b, mu)?;
    let lipschitz = loss.data_lipschitz() + 2.0 * mu;
    CompositeProblem::new(Box::new(loss), Prox::NonNegative, lipschitz)
}

/// Seeded `samples x features` design matrix whose Gram matrix `AᵀA/M` has
/// eigenvalues log-uniformly spaced in `[1, kappa]`.
pub fn synthetic_design(samples: usize, features: usize, kappa: f64, seed: u64) -> Result<DenseMatrix> {
    if samples < features || features == 0 {
        return Err(Error::InvalidInput(format!(
            "synthetic design needs samples >= features >= 1, got {samples}x{features}"
        )));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "condition number must be >= 1, got {kappa}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal(&mut rng, samples, features);
    let v = random_orthogonal(&mut rng, features, features);
    let m = samples as f64;
    let sv: Vec<f64> = (0..features)
        .map(|i| {
            let t = if features == 1 {
                0.0
            } else {
                i as f64 / (features - 1) as f64
            };
            (m * kappa.powf(t)).sqrt()
        })
        .collect();
    let a = &u * DMatrix::from_diagonal(&DVector::from_vec(sv)) * v.transpose();
    Ok(DenseMatrix::from_nalgebra(&a))
}

/// Synthetic binary classification data: a [`synthetic_design`] matrix and
/// labels `sign(aᵢᵀw + 0.1ε)` for a random planted `w`.
pub fn synthetic_classification(
    samples: usize,
    features: usize,
    kappa: f64,
    seed: u64,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let a = synthetic_design(samples, features, kappa, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe1);
    let scale = 1.0 / (features as f64).sqrt();
    let w = DenseVector::from_fn(features, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    let y = a
        .matvec(&w)
        .iter()
        .map(|z| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            if z + 0.1 * noise >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok((a, y))
}

/// Synthetic regression data: a [`synthetic_design`] matrix and targets
/// `A x_true + 0.01ε` where `x_true` is standard normal, so roughly half of
/// its entries violate `x ≥ 0`.
pub fn synthetic_regression(
    samples: usize,
    features: usize,
    kappa: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseVector)> {
    let a = synthetic_design(samples, features, kappa, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a12_9e75);
    let x_true = DenseVector::from_fn(features, |_| StandardNormal.sample(&mut rng));
    let mut b = a.matvec(&x_true);
    for bi in b.iter_mut() {
        let noise: f64 = StandardNormal.sample(&mut rng);
        *bi += 0.01 * noise;
    }
    Ok((a, b))
}

/// Reads a numeric CSV. Column `label_column` (zero-based) becomes the
/// label/target vector; the remaining columns, in order, form the features.
pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    label_column: usize,
    has_header: bool,
) -> Result<(DenseMatrix, DenseVector)> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_dataset(file, label_column, has_header)
}

pub fn read_csv_dataset(
    reader: impl std::io::Read,
    label_column: usize,
    has_header: bool,
) -> Result<(DenseMatrix, DenseVector)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let row = index + usize::from(has_header) + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                row,
                expected,
                found: record.len(),
            });
        }
        if label_column >= expected {
            return Err(Error::Parse {
                row,
                column: label_column,
                message: format!("label column {label_column} out of range for {expected} fields"),
            });
        }
        if expected < 2 {
            return Err(Error::Parse {
                row,
                column: 0,
                message: "need at least one feature column besides the label".into(),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column,
                message: format!("cell {cell:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: format!("cell {cell:?} is not finite"),
                });
            }
            if column == label_column {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
    }

    let Some(width) = width else {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "file contains no data rows".into(),
        });
    };
    let a = DenseMatrix::new(labels.len(), width - 1, features)?;
    Ok((a, DenseVector::new(labels)?))
}
