//! Plain gradient descent and AEGD (adaptive gradient descent with energy),
//! exposed as pure step functions plus a driver loop.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{ConvergenceTrace, Recorder, Recording, Row};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::objectives::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Aegd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "GD",
            Method::Aegd => "AEGD",
        }
    }
}

/// Stop at the first satisfied rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iterations: usize,
    /// Stop once `‖∇f(x_k)‖ ≤ grad_tol · (1 + |f(x_0)|)`.
    pub grad_tol: Option<f64>,
    /// Stop once `f(x_k) ≤ value_target`.
    pub value_target: Option<f64>,
    /// Stop once `‖x_k − x_{k−1}‖ ≤ step_tol`.
    pub step_tol: Option<f64>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            grad_tol: Some(1e-8),
            value_target: None,
            step_tol: None,
        }
    }
}

impl StoppingRule {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            grad_tol: None,
            value_target: None,
            step_tol: None,
        }
    }
}

/// Per-coordinate energy `r` and the shift `c` of `F(x) = √(f(x)+c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyState {
    pub r: DenseVector,
    pub c: f64,
}

impl EnergyState {
    /// `r₀ = √(f(x₀)+c)·𝟏`.
    pub fn init(f: &(impl Objective + ?Sized), x0: &DenseVector, c: f64) -> Result<Self> {
        let energy = shifted_root(f.value(x0), c)?;
        Ok(Self {
            r: DenseVector::filled(x0.dim(), energy),
            c,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x_new: DenseVector,
    /// `x_new − x_old`.
    pub residual: DenseVector,
    /// AEGD's per-coordinate effective step `η r_{k+1} / F(x_k)`.
    pub effective_step: Option<DenseVector>,
}

impl StepRecord {
    pub(crate) fn new(x_old: &DenseVector, x_new: DenseVector, effective_step: Option<DenseVector>) -> Self {
        Self {
            residual: x_new.sub(x_old),
            x_new,
            effective_step,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be positive, got {eta}")))
    }
}

fn check_gradient(g: &DenseVector) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient)
    }
}

/// `√(f + c)`, or an error if `f + c ≤ 0`.
fn shifted_root(value: f64, c: f64) -> Result<f64> {
    let s = value + c;
    if s > 0.0 && s.is_finite() {
        Ok(s.sqrt())
    } else {
        Err(Error::EnergyDomainViolation { value: s })
    }
}

/// `x_{k+1} = x_k − η∇f(x_k)`.
pub fn gd_step(f: &(impl Objective + ?Sized), x: &DenseVector, eta: f64) -> Result<StepRecord> {
    check_eta(eta)?;
    let g = f.gradient(x);
    let x_new = gd_update(x, &g, eta)?;
    Ok(StepRecord::new(x, x_new, None))
}

pub(crate) fn gd_update(x: &DenseVector, g: &DenseVector, eta: f64) -> Result<DenseVector> {
    check_gradient(g)?;
    Ok(x.add_scaled(-eta, g))
}

/// One AEGD step:
///
/// ```text
/// v       = ∇f(x) / (2√(f(x)+c))
/// r_new   = r / (1 + 2η v²)          (entrywise)
/// x_new   = x − 2η r_new v           (entrywise)
/// ```
pub fn aegd_step(
    f: &(impl Objective + ?Sized),
    x: &DenseVector,
    state: &EnergyState,
    eta: f64,
) -> Result<(StepRecord, EnergyState)> {
    check_eta(eta)?;
    let (value, g) = f.value_and_gradient(x);
    let (x_new, next, eff) = aegd_update(x, value, &g, state, eta)?;
    Ok((StepRecord::new(x, x_new, Some(eff)), next))
}

pub(crate) fn aegd_update(
    x: &DenseVector,
    value: f64,
    g: &DenseVector,
    state: &EnergyState,
    eta: f64,
) -> Result<(DenseVector, EnergyState, DenseVector)> {
    check_gradient(g)?;
    if state.r.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: state.r.dim(),
        });
    }
    // Entries may underflow to zero after many large steps; that only freezes
    // the coordinate.
    if let Some(index) = state.r.iter().position(|r| r.is_nan() || *r < 0.0) {
        return Err(Error::InvalidInput(format!("energy entry {index} is negative or NaN")));
    }
    let energy = shifted_root(value, state.c)?;
    let v = g.scaled(1.0 / (2.0 * energy));
    let r = state.r.zip_map(&v, |r, vi| r / (1.0 + 2.0 * eta * vi * vi));
    let x_new = DenseVector::from_fn(x.dim(), |i| x[i] - 2.0 * eta * r[i] * v[i]);
    let eff = r.scaled(eta / energy);
    Ok((x_new, EnergyState { r, c: state.c }, eff))
}

/// `η_k = η r_{k+1} / F(x_k)` entrywise, the step with which the AEGD update
/// equals `x_k − η_k ∘ ∇f(x_k)`.
pub fn effective_step(
    state_after: &EnergyState,
    f: &(impl Objective + ?Sized),
    x: &DenseVector,
    eta: f64,
) -> Result<DenseVector> {
    let energy = shifted_root(f.value(x), state_after.c)?;
    Ok(state_after.r.scaled(eta / energy))
}

/// The base update wrapped by the accelerators: GD, or AEGD carrying its
/// energy state between calls.
#[derive(Debug, Clone)]
pub(crate) enum Stepper {
    Gd,
    Aegd(EnergyState),
}

impl Stepper {
    pub fn new(method: Method, f: &(impl Objective + ?Sized), x0: &DenseVector) -> Result<Self> {
        Ok(match method {
            Method::Gd => Stepper::Gd,
            Method::Aegd => Stepper::Aegd(EnergyState::init(f, x0, f.energy_shift())?),
        })
    }

    pub fn step(&mut self, x: &DenseVector, value: f64, g: &DenseVector, eta: f64) -> Result<DenseVector> {
        match self {
            Stepper::Gd => gd_update(x, g, eta),
            Stepper::Aegd(state) => {
                let (x_new, next, _) = aegd_update(x, value, g, state, eta)?;
                *state = next;
                Ok(x_new)
            }
        }
    }

    pub fn energy(&self) -> Option<&DenseVector> {
        match self {
            Stepper::Gd => None,
            Stepper::Aegd(state) => Some(&state.r),
        }
    }
}

/// Runs GD or AEGD from `x0` until a stopping rule fires.
pub fn run_optimizer(
    method: Method,
    f: &(impl Objective + ?Sized),
    x0: &DenseVector,
    eta: f64,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    check_eta(eta)?;
    check_dim(f, x0)?;
    let mut stepper = Stepper::new(method, f, x0)?;
    let mut rec = Recorder::new(method.name(), method, eta, None, *stop, recording, x0);

    let mut x = x0.clone();
    let (mut value, mut g) = f.value_and_gradient(&x);
    let mut step_norm = 0.0;
    loop {
        let done = rec.record(Row {
            x: &x,
            value,
            gradient: &g,
            step_norm,
            aa_applied: false,
            aa_accepted: None,
            delta: None,
            energy: stepper.energy(),
        })?;
        if done.is_some() {
            break;
        }
        let next = stepper.step(&x, value, &g, eta)?;
        step_norm = next.distance(&x);
        x = next;
        (value, g) = f.value_and_gradient(&x);
    }
    Ok(rec.finish())
}

pub(crate) fn check_dim(f: &(impl Objective + ?Sized), x0: &DenseVector) -> Result<()> {
    if f.dim() == x0.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: x0.dim(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::objectives::{make_quadratic, rosenbrock_2d, Quadratic};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quad(diag: &[f64]) -> Quadratic {
        Quadratic::new(DenseMatrix::diagonal(diag), DenseVector::zeros(diag.len())).unwrap()
    }

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    /// f(x) = x²/2 in one dimension.
    fn half_square() -> Quadratic {
        quad(&[1.0])
    }

    #[test]
    fn gd_step_examples() {
        let s = gd_step(&quad(&[1.0, 1.0]), &v(&[3.0, 4.0]), 1.0).unwrap();
        assert_eq!(s.x_new.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.residual.as_slice(), &[-3.0, -4.0]);

        let s = gd_step(&quad(&[1.0, 10.0]), &v(&[1.0, 1.0]), 2.0 / 11.0).unwrap();
        assert_relative_eq!(s.x_new[0], 9.0 / 11.0, epsilon = 1e-15);
        assert_relative_eq!(s.x_new[1], -9.0 / 11.0, epsilon = 1e-15);

        assert!(gd_step(&quad(&[1.0]), &v(&[1.0]), 0.0).is_err());
        assert!(gd_step(&quad(&[1.0]), &v(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn aegd_step_hand_example() {
        let f = half_square();
        let state = EnergyState {
            r: v(&[3f64.sqrt()]),
            c: 1.0,
        };
        let (step, next) = aegd_step(&f, &v(&[2.0]), &state, 0.1).unwrap();
        let expected_r = 3f64.sqrt() / (1.0 + 0.2 / 3.0);
        assert_relative_eq!(next.r[0], expected_r, epsilon = 1e-15);
        assert_relative_eq!(next.r[0], 1.6237976, epsilon = 1e-7);
        assert_relative_eq!(step.x_new[0], 1.8125, epsilon = 1e-12);
        let eff = step.effective_step.unwrap();
        assert_relative_eq!(eff[0], 0.09375, epsilon = 1e-12);
        let eff2 = effective_step(&next, &f, &v(&[2.0]), 0.1).unwrap();
        assert_relative_eq!(eff2[0], 0.09375, epsilon = 1e-12);
    }

    #[test]
    fn exhausted_energy_freezes_coordinate() {
        let f = quad(&[1.0, 1.0]);
        let state = EnergyState {
            r: v(&[0.0, 1.0]),
            c: 1.0,
        };
        let (step, next) = aegd_step(&f, &v(&[1.0, 1.0]), &state, 0.5).unwrap();
        assert_eq!(step.x_new[0], 1.0);
        assert_eq!(next.r[0], 0.0);
        assert!(step.x_new[1] < 1.0);

        let bad = EnergyState {
            r: v(&[-1.0, 1.0]),
            c: 1.0,
        };
        assert!(aegd_step(&f, &v(&[1.0, 1.0]), &bad, 0.5).is_err());
    }

    #[test]
    fn aegd_fixed_point_at_zero_gradient() {
        let f = quad(&[2.0, 3.0]);
        let x = v(&[0.0, 0.0]);
        let state = EnergyState::init(&f, &x, 1.0).unwrap();
        let (step, next) = aegd_step(&f, &x, &state, 0.5).unwrap();
        assert_eq!(step.x_new, x);
        assert_eq!(next.r, state.r);
        let eff = effective_step(&next, &f, &x, 0.5).unwrap();
        assert!(eff.iter().all(|e| *e == 0.5));
    }

    #[test]
    fn aegd_energy_domain() {
        let f = quad(&[1.0]);
        let state = EnergyState { r: v(&[1.0]), c: -1.0 };
        assert!(matches!(
            aegd_step(&f, &v(&[0.5]), &state, 0.1),
            Err(Error::EnergyDomainViolation { .. })
        ));
        assert!(EnergyState::init(&f, &v(&[0.0]), 0.0).is_err());
        assert!(matches!(
            effective_step(&state, &f, &v(&[0.0]), 0.1),
            Err(Error::EnergyDomainViolation { .. })
        ));
    }

    #[test]
    fn max_iterations_zero_keeps_only_initial_record() {
        let f = rosenbrock_2d();
        let x0 = v(&[1.5, -0.5]);
        for method in [Method::Gd, Method::Aegd] {
            let t = run_optimizer(
                method,
                &f,
                &x0,
                1e-4,
                &StoppingRule::iterations(0),
                Recording::default(),
            )
            .unwrap();
            assert_eq!(t.records.len(), 1);
            assert_eq!(t.records[0].iteration, 0);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let f = quad(&[1.0, 100.0]);
        let x0 = v(&[1.0, 1.0]);
        let err = run_optimizer(
            Method::Gd,
            &f,
            &x0,
            1.0,
            &StoppingRule::iterations(1000),
            Recording::default(),
        );
        assert!(matches!(err, Err(Error::Diverged { .. })));
    }

    #[test]
    fn gd_matches_rho_rate_on_quadratic() {
        // b = 0 keeps x* = 0, so rounding stays relative to the shrinking error.
        let hessian = make_quadratic(10, 10.0, 4).unwrap().hessian().clone();
        let q = Quadratic::new(hessian, DenseVector::zeros(10)).unwrap();
        let (mu, l) = q.spectrum();
        let rho = (l - mu) / (l + mu);
        let x0 = DenseVector::from_fn(10, |i| 1.0 - 0.15 * i as f64);
        let t = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            q.optimal_step(),
            &StoppingRule::iterations(200),
            Recording::all(),
        )
        .unwrap();
        let e0 = x0.distance(q.minimizer());
        for (k, x) in t.iterates.as_ref().unwrap().iter().enumerate() {
            assert!(x.distance(q.minimizer()) <= rho.powi(k as i32) * e0 * (1.0 + 1e-8));
        }
    }

    #[test]
    fn gradient_stopping_rule_fires() {
        let q = make_quadratic(5, 10.0, 1).unwrap();
        let x0 = DenseVector::zeros(5);
        let t = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            q.optimal_step(),
            &StoppingRule::default(),
            Recording::default(),
        )
        .unwrap();
        assert_eq!(t.termination, crate::diagnostics::Termination::GradientTolerance);
        assert!(t.last().grad_norm <= 1e-8);
    }

    proptest! {
        #[test]
        fn aegd_energy_never_increases(seed in 0u64..1000, log_eta in -3.0f64..1.5) {
            let q = make_quadratic(6, 100.0, seed).unwrap();
            let eta = 10f64.powf(log_eta);
            let mut x = DenseVector::zeros(6);
            let mut state = EnergyState::init(&q, &x, q.energy_shift()).unwrap();
            for _ in 0..50 {
                let (step, next) = aegd_step(&q, &x, &state, eta).unwrap();
                for (a, b) in next.r.iter().zip(state.r.iter()) {
                    prop_assert!(a <= b);
                }
                // AEGD is a GD step with the per-coordinate step η_k.
                let g = q.gradient(&x);
                let eff = step.effective_step.clone().unwrap();
                let gd_like = DenseVector::from_fn(6, |i| x[i] - eff[i] * g[i]);
                prop_assert!(step.x_new.distance(&gd_like) <= 1e-12 * (1.0 + x.norm()));
                prop_assert_eq!(&step.residual, &step.x_new.sub(&x));
                x = step.x_new;
                state = next;
            }
        }
    }
}
