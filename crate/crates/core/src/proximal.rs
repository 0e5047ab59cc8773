//! Proximal operators and composite-objective solvers: PGA, Nesterov
//! accelerated APGA, and Anderson-accelerated AEGD/GD on the pre-prox
//! sequence with a sufficient-decrease safeguard.

use serde::{Deserialize, Serialize};

use crate::anderson::{attempt_mix, AaConfig, AndersonWindow, Attempt};
use crate::diagnostics::{AaEvent, AaOutcome, ConvergenceTrace, GuardCheck, Recorder, Recording, Row, WindowSource};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::objectives::CompositeProblem;
use crate::optimizers::{gd_update, Method, StepRecord, Stepper, StoppingRule};

/// Proximal operator of an indicator function (or of `h ≡ 0`). For
/// indicators `Prox_{ηh}` is the Euclidean projection and does not depend on
/// `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Prox {
    /// `h ≡ 0`.
    Zero,
    /// Indicator of `{‖x‖_∞ ≤ radius}`.
    LinfBall { radius: f64 },
    /// Indicator of `{x ≥ 0}`.
    NonNegative,
}

impl Prox {
    pub fn apply(&self, y: &DenseVector) -> DenseVector {
        match *self {
            Prox::Zero => y.clone(),
            Prox::LinfBall { radius } => prox_box_linf(y, radius),
            Prox::NonNegative => prox_nonneg(y),
        }
    }

    pub fn is_feasible(&self, x: &DenseVector) -> bool {
        match *self {
            Prox::Zero => true,
            Prox::LinfBall { radius } => x.iter().all(|v| v.abs() <= radius),
            Prox::NonNegative => x.iter().all(|v| *v >= 0.0),
        }
    }
}

/// Entrywise clamp to `[−radius, radius]`.
pub fn prox_box_linf(y: &DenseVector, radius: f64) -> DenseVector {
    debug_assert!(radius > 0.0);
    y.map(|v| v.clamp(-radius, radius))
}

/// Entrywise `max(y, 0)`.
pub fn prox_nonneg(y: &DenseVector) -> DenseVector {
    y.map(|v| v.max(0.0))
}

/// Momentum weight for APGA's extrapolation `y = x_k + w_k (x_k − x_{k−1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Momentum {
    /// `w_k = (k−1)/(k+2)`.
    Nesterov,
    Constant(f64),
}

impl Momentum {
    pub fn weight(&self, k: usize) -> f64 {
        match *self {
            Momentum::Nesterov => (k as f64 - 1.0) / (k as f64 + 2.0),
            Momentum::Constant(w) => w,
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

fn check_dim(p: &CompositeProblem, x: &DenseVector) -> Result<()> {
    if p.dim() == x.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: x.dim(),
        })
    }
}

/// `x_new = Prox(x − η∇f(x))`.
pub fn pga_step(p: &CompositeProblem, x: &DenseVector, eta: f64) -> Result<StepRecord> {
    check_eta(eta)?;
    let g = p.smooth.gradient(x);
    let y = gd_update(x, &g, eta)?;
    Ok(StepRecord::new(x, p.prox.apply(&y), None))
}

/// `y = x + ((k−1)/(k+2))(x − x_prev)`, `x_new = Prox(y − η∇f(y))`.
pub fn apga_step(
    p: &CompositeProblem,
    x: &DenseVector,
    x_prev: &DenseVector,
    k: usize,
    eta: f64,
) -> Result<StepRecord> {
    if k == 0 {
        return Err(Error::InvalidInput("APGA iteration index starts at 1".into()));
    }
    apga_step_with(p, x, x_prev, Momentum::Nesterov.weight(k), eta)
}

pub fn apga_step_with(
    p: &CompositeProblem,
    x: &DenseVector,
    x_prev: &DenseVector,
    weight: f64,
    eta: f64,
) -> Result<StepRecord> {
    check_eta(eta)?;
    let y = x.add_scaled(weight, &x.sub(x_prev));
    let g = p.smooth.gradient(&y);
    let z = gd_update(&y, &g, eta)?;
    Ok(StepRecord::new(x, p.prox.apply(&z), None))
}

pub fn run_pga(
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    run_momentum(p, x0, eta, None, stop, recording)
}

pub fn run_apga(
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    momentum: Momentum,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    run_momentum(p, x0, eta, Some(momentum), stop, recording)
}

fn run_momentum(
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    momentum: Option<Momentum>,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    check_eta(eta)?;
    check_dim(p, x0)?;
    let label = if momentum.is_some() { "APGA" } else { "PGA" };
    let mut rec = Recorder::new(label, Method::Gd, eta, None, *stop, recording, x0);
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut step_norm = 0.0;
    for k in 1.. {
        let (value, g) = p.smooth.value_and_gradient(&x);
        let done = rec.record(Row {
            x: &x,
            value,
            gradient: &g,
            step_norm,
            aa_applied: false,
            aa_accepted: None,
            delta: None,
            energy: None,
        })?;
        if done.is_some() {
            break;
        }
        let step = match momentum {
            Some(m) => apga_step_with(p, &x, &x_prev, m.weight(k), eta)?,
            None => StepRecord::new(&x, p.prox.apply(&gd_update(&x, &g, eta)?), None),
        };
        step_norm = step.residual.norm();
        x_prev = std::mem::replace(&mut x, step.x_new);
    }
    Ok(rec.finish())
}

/// Options for the guarded proximal accelerator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxAaOptions {
    /// After an accepted mix, also reset the auxiliary iterate `y_{k+1}` to
    /// the mixed point, so that `x_{k+1} = Prox(y_{k+1})` keeps holding.
    pub replace_auxiliary: bool,
}

impl Default for ProxAaOptions {
    fn default() -> Self {
        Self {
            replace_auxiliary: true,
        }
    }
}

/// AA-AEGD(m, q) for `f + h`:
///
/// 1. AEGD step from `x_k` gives the auxiliary point `y_{k+1}`; `x_{k+1} = Prox(y_{k+1})`.
/// 2. The window holds `(y_k, y_{k+1})`, so residuals are `y_{k+1} − y_k`.
/// 3. On scheduled steps the mixed `y^{AA}` is projected to `x^{AA}`, which is
///    kept only if `f(x^{AA}) ≤ f(x_k) − (η/2)‖∇f(x_k)‖²`.
pub fn run_aa_aegd_prox(
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    cfg: &AaConfig,
    stop: &StoppingRule,
    options: ProxAaOptions,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    run_aa_prox(Method::Aegd, p, x0, eta, cfg, stop, options, recording)
}

/// The same guarded scheme with a plain gradient step as the base update,
/// i.e. AA applied to `y ↦ Prox(y) − η∇f(Prox(y))`.
pub fn run_aa_pga(
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    cfg: &AaConfig,
    stop: &StoppingRule,
    options: ProxAaOptions,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    run_aa_prox(Method::Gd, p, x0, eta, cfg, stop, options, recording)
}

#[allow(clippy::too_many_arguments)]
fn run_aa_prox(
    method: Method,
    p: &CompositeProblem,
    x0: &DenseVector,
    eta: f64,
    cfg: &AaConfig,
    stop: &StoppingRule,
    options: ProxAaOptions,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    cfg.validate()?;
    check_eta(eta)?;
    check_dim(p, x0)?;
    let label = match method {
        Method::Gd => format!("AA-PGA({},{})", cfg.m, cfg.q),
        Method::Aegd => format!("AA-AEGD-prox({},{})", cfg.m, cfg.q),
    };
    let f = &p.smooth;
    let mut stepper = Stepper::new(method, f, x0)?;
    let mut rec = Recorder::new(label, method, eta, Some(*cfg), *stop, recording, x0);
    let mut window = AndersonWindow::new(cfg.m);

    let mut x = x0.clone();
    let mut y = x0.clone();
    let (mut value, mut g) = f.value_and_gradient(&x);
    let mut step_norm = 0.0;
    let mut applied = false;
    let mut accepted = None;
    let mut delta = None;
    for k in 0.. {
        let done = rec.record(Row {
            x: &x,
            value,
            gradient: &g,
            step_norm,
            aa_applied: applied,
            aa_accepted: accepted,
            delta,
            energy: stepper.energy(),
        })?;
        if done.is_some() {
            break;
        }

        let y_next = stepper.step(&x, value, &g, eta)?;
        let mut x_next = p.prox.apply(&y_next);
        window.push(y.clone(), y_next.clone())?;
        let mut y_carry = y_next;
        applied = false;
        accepted = None;
        delta = None;

        if cfg.fires_at(k) {
            let window_len = window.len();
            match attempt_mix(&window, cfg)? {
                Attempt::Mixed { point: y_aa, delta: d } => {
                    let x_aa = p.prox.apply(&y_aa);
                    let candidate_value = f.value(&x_aa);
                    let threshold = value - 0.5 * eta * g.dot(&g);
                    let ok = candidate_value <= threshold;
                    if ok {
                        x_next = x_aa;
                        if options.replace_auxiliary {
                            y_carry = y_aa;
                        }
                    }
                    applied = ok;
                    accepted = Some(ok);
                    delta = d;
                    rec.event(AaEvent {
                        iteration: k,
                        window_len,
                        outcome: if ok { AaOutcome::Accepted } else { AaOutcome::Rejected },
                        delta: d,
                        guard: Some(GuardCheck {
                            candidate_value,
                            threshold,
                        }),
                        source: WindowSource::Auxiliary,
                    });
                }
                Attempt::SolveFailed => rec.event(AaEvent {
                    iteration: k,
                    window_len,
                    outcome: AaOutcome::SolveFailed,
                    delta: None,
                    guard: None,
                    source: WindowSource::Auxiliary,
                }),
            }
        }

        step_norm = x_next.distance(&x);
        x = x_next;
        y = y_carry;
        (value, g) = f.value_and_gradient(&x);
    }
    Ok(rec.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseMatrix, DenseVector};
    use crate::objectives::{make_nnls, make_quadratic, CompositeProblem};
    use crate::optimizers::gd_step;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn box_examples() {
        assert_eq!(prox_box_linf(&v(&[1.5, -0.3]), 1.0).as_slice(), &[1.0, -0.3]);
        assert_eq!(prox_box_linf(&v(&[0.2, -0.9]), 1.0).as_slice(), &[0.2, -0.9]);
        assert_eq!(prox_box_linf(&v(&[-5.0, 5.0]), 1.0).as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn nonneg_examples() {
        assert_eq!(prox_nonneg(&v(&[-1.0, 2.0])).as_slice(), &[0.0, 2.0]);
        assert_eq!(prox_nonneg(&v(&[0.0, 3.0])).as_slice(), &[0.0, 3.0]);
        assert_eq!(prox_nonneg(&v(&[-3.0, -4.0])).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn prox_nonexpansive_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for prox in [Prox::LinfBall { radius: 1.0 }, Prox::NonNegative, Prox::Zero] {
            for _ in 0..100 {
                let a = DenseVector::from_fn(7, |_| rng.random_range(-3.0..3.0));
                let b = DenseVector::from_fn(7, |_| rng.random_range(-3.0..3.0));
                let (pa, pb) = (prox.apply(&a), prox.apply(&b));
                assert!(pa.distance(&pb) <= a.distance(&b) + 1e-12);
                assert_eq!(prox.apply(&pa), pa);
                assert!(prox.is_feasible(&pa));
            }
        }
    }

    #[test]
    fn pga_without_constraint_is_gd() {
        let q = make_quadratic(4, 10.0, 1).unwrap();
        let p = CompositeProblem::new(Box::new(q.clone()), Prox::Zero, 10.0).unwrap();
        let x = v(&[1.0, -2.0, 0.5, 0.0]);
        assert_eq!(pga_step(&p, &x, 0.1).unwrap(), gd_step(&q, &x, 0.1).unwrap());
        assert_eq!(
            apga_step(&p, &x, &v(&[0.0; 4]), 1, 0.1).unwrap(),
            gd_step(&q, &x, 0.1).unwrap()
        );
    }

    #[test]
    fn pga_nnls_hand_example() {
        let p = make_nnls(DenseMatrix::identity(1), v(&[-1.0]), 0.0).unwrap();
        let s = pga_step(&p, &v(&[0.0]), 1.0).unwrap();
        assert_eq!(s.x_new.as_slice(), &[0.0]);
        // A feasible stationary point is a fixed point.
        let p = make_nnls(DenseMatrix::identity(2), v(&[1.0, 2.0]), 0.0).unwrap();
        let s = pga_step(&p, &v(&[1.0, 2.0]), 0.7).unwrap();
        assert_eq!(s.x_new.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn momentum_weights() {
        assert_eq!(Momentum::Nesterov.weight(1), 0.0);
        assert_relative_eq!(Momentum::Nesterov.weight(3), 0.4);
        assert!(apga_step(
            &make_nnls(DenseMatrix::identity(1), v(&[1.0]), 0.0).unwrap(),
            &v(&[0.0]),
            &v(&[0.0]),
            0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn apga_beats_pga_on_ill_conditioned_quadratic() {
        let q = make_quadratic(30, 1e3, 8).unwrap();
        let f_star = q.min_value();
        let l = q.spectrum().1;
        let p = CompositeProblem::new(Box::new(q), Prox::Zero, l).unwrap();
        let x0 = DenseVector::zeros(30);
        let stop = StoppingRule::iterations(200);
        let pga = run_pga(&p, &x0, 1.0 / l, &stop, Recording::default()).unwrap();
        let apga = run_apga(&p, &x0, 1.0 / l, Momentum::Nesterov, &stop, Recording::default()).unwrap();
        assert!(apga.last().value - f_star < pga.last().value - f_star);
    }

    #[test]
    fn saturated_guard_rejects_everything() {
        // On a quadratic f(x_k) − f* ≤ ‖∇f(x_k)‖²/(2μ), so with η > 1/μ the
        // required decrease (η/2)‖∇f(x_k)‖² is unattainable.
        let q = make_quadratic(5, 10.0, 3).unwrap();
        let p = CompositeProblem::new(Box::new(q), Prox::Zero, 10.0).unwrap();
        let x0 = DenseVector::zeros(5);
        let stop = StoppingRule::iterations(40);
        let eta = 2.0;
        let cfg = AaConfig::new(2);
        let aa = run_aa_aegd_prox(
            &p,
            &x0,
            eta,
            &cfg,
            &stop,
            ProxAaOptions::default(),
            Recording::default(),
        )
        .unwrap();
        assert!(!aa.aa_events.is_empty());
        assert!(aa.aa_events.iter().all(|e| e.outcome == AaOutcome::Rejected));
        let plain = run_aa_aegd_prox(
            &p,
            &x0,
            eta,
            &AaConfig::disabled(2),
            &stop,
            ProxAaOptions::default(),
            Recording::default(),
        )
        .unwrap();
        for (a, b) in aa.records.iter().zip(&plain.records) {
            assert_eq!((a.value, a.step_norm, a.r_min), (b.value, b.step_norm, b.r_min));
        }
    }
}
