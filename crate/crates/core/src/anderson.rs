//! Anderson acceleration: residual window, mixing-coefficient solve, relaxed
//! extrapolation and the every-`q`-steps scheduler.
//!
//! The accelerator only sees pairs `(x_j, g_j)` where `g_j` is whatever the
//! base stepper produced from `x_j` (`G(x_j)` for GD, the AEGD update for
//! AEGD). The residual is always `R_j = g_j − x_j`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{AaEvent, AaOutcome, ConvergenceTrace, Recorder, Recording, Row, WindowSource};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::objectives::Objective;
use crate::optimizers::{check_dim, Method, Stepper, StoppingRule};

pub const DEFAULT_LAMBDA: f64 = 1e-10;

/// `AA(m, q)` settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AaConfig {
    /// Window length: up to `m + 1` pairs take part in a solve.
    pub m: usize,
    /// Mix on iterations `k ≡ 0 (mod q)`, `k ≠ 0`.
    pub q: usize,
    /// Relaxation in `(0, 1]`.
    pub beta: f64,
    /// Tikhonov weight on the free coefficients.
    pub lambda: f64,
}

impl AaConfig {
    /// `AA(m, m)` with `β = 1` and `λ = 10⁻¹⁰`.
    pub fn new(m: usize) -> Self {
        Self {
            m,
            q: m,
            beta: 1.0,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn every(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// A configuration that never mixes.
    pub fn disabled(m: usize) -> Self {
        Self::new(m).every(usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput("window length m must be >= 1".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidInput("period q must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Whether the step `x_k → x_{k+1}` mixes.
    pub fn fires_at(&self, k: usize) -> bool {
        k != 0 && k.is_multiple_of(self.q)
    }
}

#[derive(Debug, Clone)]
struct WindowEntry {
    point: DenseVector,
    image: DenseVector,
    residual: DenseVector,
}

/// FIFO window of the most recent `m + 1` pairs `(x_j, g_j)`.
#[derive(Debug, Clone)]
pub struct AndersonWindow {
    m: usize,
    entries: VecDeque<WindowEntry>,
}

impl AndersonWindow {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            entries: VecDeque::with_capacity(m + 2),
        }
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `m_k`: the number of difference columns available.
    pub fn depth(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// Appends `(point, image)`; evicts the oldest pair beyond `m + 1`.
    pub fn push(&mut self, point: DenseVector, image: DenseVector) -> Result<()> {
        if point.dim() != image.dim() {
            return Err(Error::DimensionMismatch {
                expected: point.dim(),
                found: image.dim(),
            });
        }
        if let Some(first) = self.entries.front() {
            if first.point.dim() != point.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.point.dim(),
                    found: point.dim(),
                });
            }
        }
        let residual = image.sub(&point);
        self.entries.push_back(WindowEntry { point, image, residual });
        while self.entries.len() > self.m + 1 {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = &DenseVector> {
        self.entries.iter().map(|e| &e.point)
    }

    pub fn images(&self) -> impl Iterator<Item = &DenseVector> {
        self.entries.iter().map(|e| &e.image)
    }

    pub fn residuals(&self) -> impl Iterator<Item = &DenseVector> {
        self.entries.iter().map(|e| &e.residual)
    }

    fn newest(&self) -> Option<&WindowEntry> {
        self.entries.back()
    }
}

/// Affine weights over the window, oldest first; they sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCoefficients(Vec<f64>);

impl MixingCoefficients {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// All weight on the newest pair: the unaccelerated step.
    pub fn unit(len: usize) -> Self {
        let mut a = vec![0.0; len];
        if let Some(last) = a.last_mut() {
            *last = 1.0;
        }
        Self(a)
    }
}

/// Solves `min ‖R_k − Σ_{j<k} w_j (R_k − R_j)‖² + λ‖w‖²` and returns
/// `α = (w, 1 − Σw)`.
pub fn solve_coefficients(window: &AndersonWindow, lambda: f64) -> Result<MixingCoefficients> {
    let newest = window
        .newest()
        .ok_or_else(|| Error::InvalidInput("Anderson window is empty".into()))?;
    let depth = window.depth();
    if depth == 0 {
        return Ok(MixingCoefficients(vec![1.0]));
    }
    let r_k = &newest.residual;
    let columns: Vec<DenseVector> = window.residuals().take(depth).map(|r_j| r_k.sub(r_j)).collect();
    let u = DenseMatrix::from_columns(&columns)?;
    let w = linalg::solve_regularized_ls(&u, r_k, lambda)?;
    let mut alpha = w.into_vec();
    // Σα = 1 by construction; summing in the same order keeps the error tiny.
    let partial: f64 = alpha.iter().sum();
    alpha.push(1.0 - partial);
    Ok(MixingCoefficients(alpha))
}

/// `(1−β) Σ α_j x_j + β Σ α_j g_j`.
pub fn mix(window: &AndersonWindow, alpha: &MixingCoefficients, beta: f64) -> Result<DenseVector> {
    if alpha.len() != window.len() {
        return Err(Error::DimensionMismatch {
            expected: window.len(),
            found: alpha.len(),
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1], got {beta}")));
    }
    let newest = window
        .newest()
        .ok_or_else(|| Error::InvalidInput("Anderson window is empty".into()))?;
    let mut out = DenseVector::zeros(newest.point.dim());
    for (e, &a) in window.entries.iter().zip(alpha.as_slice()) {
        if beta < 1.0 {
            out.axpy((1.0 - beta) * a, &e.point);
        }
        out.axpy(beta * a, &e.image);
    }
    Ok(out)
}

/// `‖Σ α_j R_j‖ / ‖R_k‖`, the fraction of the newest residual left after
/// mixing. For GD this equals the projection gain `δ_k`.
pub fn mixed_residual_ratio(window: &AndersonWindow, alpha: &MixingCoefficients) -> Option<f64> {
    let newest = window.newest()?;
    let r_norm = newest.residual.norm();
    if r_norm == 0.0 {
        return None;
    }
    let mut mixed = DenseVector::zeros(newest.residual.dim());
    for (r, &a) in window.residuals().zip(alpha.as_slice()) {
        mixed.axpy(a, r);
    }
    Some(mixed.norm() / r_norm)
}

/// Outcome of one scheduled mixing attempt.
pub(crate) enum Attempt {
    Mixed { point: DenseVector, delta: Option<f64> },
    SolveFailed,
}

/// Solves and mixes; a singular unregularized solve degrades to the plain step
/// instead of aborting the run.
pub(crate) fn attempt_mix(window: &AndersonWindow, cfg: &AaConfig) -> Result<Attempt> {
    match solve_coefficients(window, cfg.lambda) {
        Ok(alpha) => {
            let delta = mixed_residual_ratio(window, &alpha);
            Ok(Attempt::Mixed {
                point: mix(window, &alpha, cfg.beta)?,
                delta,
            })
        }
        Err(Error::SingularSystem { .. }) => Ok(Attempt::SolveFailed),
        Err(e) => Err(e),
    }
}

/// `AA(m, q)` wrapped around GD (AA-GD) or AEGD (AA-AEGD).
///
/// Every iteration takes one base step `x_k → g_k` and pushes `(x_k, g_k)`
/// into the window. On scheduled iterations the mixed point replaces
/// `x_{k+1}`; the window keeps the unmixed `g_k`, and AEGD's energy is
/// carried through untouched.
pub fn run_aa(
    method: Method,
    f: &(impl Objective + ?Sized),
    x0: &DenseVector,
    eta: f64,
    cfg: &AaConfig,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    cfg.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    check_dim(f, x0)?;
    let label = format!(
        "AA-{}({},{})",
        method.name(),
        cfg.m,
        if cfg.q == usize::MAX {
            "inf".to_string()
        } else {
            cfg.q.to_string()
        }
    );
    let mut stepper = Stepper::new(method, f, x0)?;
    let mut rec = Recorder::new(label, method, eta, Some(*cfg), *stop, recording, x0);
    let mut window = AndersonWindow::new(cfg.m);

    let mut x = x0.clone();
    let (mut value, mut g) = f.value_and_gradient(&x);
    let mut step_norm = 0.0;
    let mut applied = false;
    let mut delta = None;
    for k in 0.. {
        let done = rec.record(Row {
            x: &x,
            value,
            gradient: &g,
            step_norm,
            aa_applied: applied,
            aa_accepted: None,
            delta,
            energy: stepper.energy(),
        })?;
        if done.is_some() {
            break;
        }

        let base = stepper.step(&x, value, &g, eta)?;
        window.push(x.clone(), base.clone())?;
        applied = false;
        delta = None;
        let mut next = base;
        if cfg.fires_at(k) {
            let window_len = window.len();
            match attempt_mix(&window, cfg)? {
                Attempt::Mixed { point, delta: d } => {
                    next = point;
                    applied = true;
                    delta = d;
                    rec.event(AaEvent {
                        iteration: k,
                        window_len,
                        outcome: AaOutcome::Applied,
                        delta: d,
                        guard: None,
                        source: WindowSource::Iterates,
                    });
                }
                Attempt::SolveFailed => rec.event(AaEvent {
                    iteration: k,
                    window_len,
                    outcome: AaOutcome::SolveFailed,
                    delta: None,
                    guard: None,
                    source: WindowSource::Iterates,
                }),
            }
        }
        step_norm = next.distance(&x);
        x = next;
        (value, g) = f.value_and_gradient(&x);
    }
    Ok(rec.finish())
}

/// Worst-case error factor of the best degree-`k` residual polynomial for
/// full-memory AA on a quadratic with contraction `rho`:
/// `2γᵏ/(1+γ²ᵏ)` with `γ = (1−√(1−ρ))/(1+√(1−ρ))` for `k < d`, and 0 once
/// `k ≥ d`.
pub fn chebyshev_gain(rho: f64, k: usize, d: usize) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, 1), got {rho}")));
    }
    if k >= d {
        return Ok(0.0);
    }
    let s = (1.0 - rho).sqrt();
    let gamma = (1.0 - s) / (1.0 + s);
    let gk = gamma.powi(k as i32);
    Ok(2.0 * gk / (1.0 + gk * gk))
}
