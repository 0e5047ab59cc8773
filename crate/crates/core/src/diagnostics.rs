//! Convergence traces and the quantities used to check the AA-GD gain bounds
//! against them: the projection gain `δ_k = ‖Π_k ∇f(x_k)‖ / ‖∇f(x_k)‖`, the
//! per-step bound `δ_k (1 − ημ)` and the cumulative iterate bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anderson::AaConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::optimizers::{Method, StoppingRule};

/// Objective values above this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e300;

/// Thresholds reported by [`summarize`].
pub const SUMMARY_THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-8];

/// One row of a trace. Row `k` describes the iterate `x_k`; the AA fields
/// describe the step that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    /// `‖x_k − x_{k−1}‖`, zero for the initial row.
    pub step_norm: f64,
    pub aa_applied: bool,
    /// Guarded variants only: whether the AA candidate was accepted.
    pub aa_accepted: Option<bool>,
    /// Mixed-residual ratio `‖Σα_j R_j‖ / ‖R_k‖` of the AA step, if any.
    pub delta: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    /// Wall-clock time spent since the previous row.
    pub time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AaOutcome {
    /// Unguarded mix, used as the next iterate.
    Applied,
    /// Guarded candidate passed the descent check.
    Accepted,
    /// Guarded candidate failed the descent check; the plain step was kept.
    Rejected,
    /// Coefficient solve failed; the plain step was kept.
    SolveFailed,
}

/// Which sequence the Anderson window was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSource {
    /// The iterates `x_k` themselves.
    Iterates,
    /// The pre-prox auxiliary sequence `y_k`.
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardCheck {
    /// `f(x^{AA})`.
    pub candidate_value: f64,
    /// `f(x_k) − (η/2)‖∇f(x_k)‖²`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaEvent {
    /// The `k` of the step `x_k → x_{k+1}` that attempted the mix.
    pub iteration: usize,
    pub window_len: usize,
    pub outcome: AaOutcome,
    pub delta: Option<f64>,
    pub guard: Option<GuardCheck>,
    pub source: WindowSource,
}

impl AaEvent {
    pub fn took_effect(&self) -> bool {
        matches!(self.outcome, AaOutcome::Applied | AaOutcome::Accepted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    ValueTarget,
    StepTolerance,
    MaxIterations,
}

/// What to store besides the scalar rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recording {
    pub gradients: bool,
    pub iterates: bool,
}

impl Recording {
    pub fn all() -> Self {
        Self {
            gradients: true,
            iterates: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub label: String,
    pub base: Method,
    pub eta: f64,
    pub aa: Option<AaConfig>,
    pub records: Vec<IterationRecord>,
    pub aa_events: Vec<AaEvent>,
    /// `∇f(x_k)` for every row, when requested.
    pub gradients: Option<Vec<DenseVector>>,
    /// `x_k` for every row, when requested.
    pub iterates: Option<Vec<DenseVector>>,
    pub termination: Termination,
    pub final_x: DenseVector,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace always has an initial record")
    }

    /// Parameters for reports: step size plus the AA settings when present.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        p.insert("eta".to_string(), self.eta);
        if let Some(cfg) = &self.aa {
            p.insert("m".to_string(), cfg.m as f64);
            if cfg.q != usize::MAX {
                p.insert("q".to_string(), cfg.q as f64);
            }
            p.insert("beta".to_string(), cfg.beta);
            p.insert("lambda".to_string(), cfg.lambda);
        }
        p
    }

    /// Fraction of AA attempts that changed the iterate.
    pub fn aa_accept_rate(&self) -> Option<f64> {
        if self.aa_events.is_empty() {
            return None;
        }
        let ok = self.aa_events.iter().filter(|e| e.took_effect()).count();
        Some(ok as f64 / self.aa_events.len() as f64)
    }
}

/// Shared bookkeeping for the solver loops: timing, stopping rules and
/// divergence detection.
pub(crate) struct Recorder {
    trace: ConvergenceTrace,
    stop: StoppingRule,
    grad_threshold: Option<f64>,
    recording: Recording,
    last: Instant,
}

pub(crate) struct Row<'a> {
    pub x: &'a DenseVector,
    pub value: f64,
    pub gradient: &'a DenseVector,
    pub step_norm: f64,
    pub aa_applied: bool,
    pub aa_accepted: Option<bool>,
    pub delta: Option<f64>,
    pub energy: Option<&'a DenseVector>,
}

impl Recorder {
    pub fn new(
        label: impl Into<String>,
        base: Method,
        eta: f64,
        aa: Option<AaConfig>,
        stop: StoppingRule,
        recording: Recording,
        x0: &DenseVector,
    ) -> Self {
        Self {
            trace: ConvergenceTrace {
                label: label.into(),
                base,
                eta,
                aa,
                records: Vec::new(),
                aa_events: Vec::new(),
                gradients: recording.gradients.then(Vec::new),
                iterates: recording.iterates.then(Vec::new),
                termination: Termination::MaxIterations,
                final_x: x0.clone(),
            },
            stop,
            grad_threshold: None,
            recording,
            last: Instant::now(),
        }
    }

    pub fn event(&mut self, event: AaEvent) {
        self.trace.aa_events.push(event);
    }

    /// Appends row `k` and returns the termination reason if the run should
    /// stop here.
    pub fn record(&mut self, row: Row<'_>) -> Result<Option<Termination>> {
        let k = self.trace.records.len();
        if !row.value.is_finite() || row.value > DIVERGENCE_THRESHOLD || !row.x.is_finite() {
            return Err(Error::Diverged {
                iteration: k,
                value: row.value,
            });
        }
        let grad_norm = row.gradient.norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        if k == 0 {
            self.grad_threshold = self.stop.grad_tol.map(|t| t * (1.0 + row.value.abs()));
        }
        let now = Instant::now();
        let time_ms = now.duration_since(self.last).as_secs_f64() * 1e3;
        self.last = now;

        self.trace.records.push(IterationRecord {
            iteration: k,
            value: row.value,
            grad_norm,
            step_norm: row.step_norm,
            aa_applied: row.aa_applied,
            aa_accepted: row.aa_accepted,
            delta: row.delta,
            r_min: row.energy.map(DenseVector::min),
            r_max: row.energy.map(DenseVector::max),
            time_ms,
        });
        if self.recording.gradients {
            self.trace
                .gradients
                .get_or_insert_with(Vec::new)
                .push(row.gradient.clone());
        }
        if self.recording.iterates {
            self.trace.iterates.get_or_insert_with(Vec::new).push(row.x.clone());
        }
        self.trace.final_x = row.x.clone();

        let reason = if self.grad_threshold.is_some_and(|t| grad_norm <= t) {
            Some(Termination::GradientTolerance)
        } else if self.stop.value_target.is_some_and(|t| row.value <= t) {
            Some(Termination::ValueTarget)
        } else if k > 0 && self.stop.step_tol.is_some_and(|t| row.step_norm <= t) {
            Some(Termination::StepTolerance)
        } else if k >= self.stop.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };
        if let Some(r) = reason {
            self.trace.termination = r;
        }
        Ok(reason)
    }

    pub fn finish(self) -> ConvergenceTrace {
        self.trace
    }
}

/// `δ_k = ‖Π_k g_k‖ / ‖g_k‖` with `Π_k = I − U_k(U_kᵀU_k + λI)⁻¹U_kᵀ` and
/// columns `U_{k,j} = g_k − g_j`, where `g_k` is the last entry of
/// `gradients`.
///
/// `Π_k` is applied implicitly through the regularized solve. With
/// `lambda = 0`, zero difference columns are dropped first (they do not change
/// the spanned subspace).
pub fn projection_gain(gradients: &[DenseVector], lambda: f64) -> Result<f64> {
    let Some(current) = gradients.last() else {
        return Err(Error::InvalidInput("gradient window is empty".into()));
    };
    let g_norm = current.norm();
    if g_norm == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let mut columns: Vec<DenseVector> = gradients[..gradients.len() - 1]
        .iter()
        .map(|g| current.sub(g))
        .collect();
    if lambda == 0.0 {
        columns.retain(|c| c.norm() > 0.0);
    }
    if columns.is_empty() {
        return Ok(1.0);
    }
    let u = DenseMatrix::from_columns(&columns)?;
    let w = linalg::solve_regularized_ls(&u, current, lambda)?;
    let projected = current.sub(&u.matvec(&w));
    Ok(projected.norm() / g_norm)
}

/// Inputs for the AA-GD bound checks.
#[derive(Debug, Clone)]
pub struct GainInputs {
    pub eta: f64,
    /// Strong-convexity constant (smallest Hessian eigenvalue).
    pub mu: f64,
    /// Smoothness constant (largest Hessian eigenvalue).
    pub l: f64,
    /// Known minimizer, enabling the cumulative iterate bound.
    pub minimizer: Option<DenseVector>,
    /// `true` when `mu` and `l` are user estimates rather than exact
    /// spectral bounds of a quadratic.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    /// Step `x_k → x_{k+1}`.
    pub iteration: usize,
    pub aa_applied: bool,
    pub delta: f64,
    pub bound: f64,
    pub observed_ratio: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateBound {
    /// Index `k + 1` of the bounded iterate.
    pub iteration: usize,
    pub error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub eta: f64,
    pub mu: f64,
    pub l: f64,
    pub estimated_constants: bool,
    /// Regularization applied to the gradient-difference solve.
    pub lambda_gradient: f64,
    pub entries: Vec<GainEntry>,
    pub iterate_bounds: Vec<IterateBound>,
}

impl GainReport {
    pub fn min_slack(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.slack).reduce(f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "eta={:e} mu={:e} L={:e}{}",
            self.eta,
            self.mu,
            self.l,
            if self.estimated_constants { " (estimated)" } else { "" }
        );
        let _ = writeln!(
            out,
            "{:>6} {:>3} {:>12} {:>12} {:>12} {:>12}",
            "k", "aa", "delta", "bound", "ratio", "slack"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:>6} {:>3} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}",
                e.iteration,
                if e.aa_applied { "y" } else { "n" },
                e.delta,
                e.bound,
                e.observed_ratio,
                e.slack
            );
        }
        out
    }
}

/// Computes `δ_k`, the per-step bound `δ_k(1−ημ)` and the observed gradient
/// ratio for every step of an AA-GD (or plain GD) trace.
///
/// The trace must carry gradients. For GD the residuals are `R_j = −η∇f(x_j)`,
/// so the coefficient solve with regularization `λ` on residuals equals the
/// gradient-difference solve with `λ/η²`; that value is used for `δ_k` so the
/// gain is the one the run actually realized. Steps without a mix use
/// `δ_k = 1`.
pub fn gain_report(trace: &ConvergenceTrace, inputs: &GainInputs) -> Result<GainReport> {
    let gradients = trace
        .gradients
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("trace was recorded without gradients".into()))?;
    if trace.base != Method::Gd {
        return Err(Error::InvalidInput(
            "gain bounds apply to gradient-descent traces".into(),
        ));
    }
    if let Some(cfg) = &trace.aa {
        if cfg.beta != 1.0 {
            return Err(Error::InvalidInput(format!(
                "gain bounds require beta = 1, trace used {}",
                cfg.beta
            )));
        }
    }
    if !(inputs.mu > 0.0 && inputs.l >= inputs.mu) {
        return Err(Error::InvalidInput(format!(
            "need 0 < mu <= L, got mu={} L={}",
            inputs.mu, inputs.l
        )));
    }
    let eta = inputs.eta;
    let eta_max = 2.0 / (inputs.l + inputs.mu);
    if !(eta > 0.0 && eta <= eta_max * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "step {eta:e} outside (0, 2/(L+mu)] = (0, {eta_max:e}]"
        )));
    }

    let (m, lambda) = trace.aa.as_ref().map_or((0, 0.0), |c| (c.m, c.lambda));
    let lambda_gradient = lambda / (eta * eta);
    let contraction = 1.0 - eta * inputs.mu;
    let applied: std::collections::BTreeSet<usize> = trace
        .aa_events
        .iter()
        .filter(|e| e.took_effect())
        .map(|e| e.iteration)
        .collect();

    let mut entries = Vec::new();
    let mut iterate_bounds = Vec::new();
    let initial_error = match (&inputs.minimizer, &trace.iterates) {
        (Some(xs), Some(iterates)) => Some((xs, iterates, iterates[0].distance(xs))),
        _ => None,
    };
    let ratio_l_mu = inputs.l / inputs.mu;
    let mut delta_product = 1.0;

    for k in 0..gradients.len().saturating_sub(1) {
        let g_norm = gradients[k].norm();
        if g_norm == 0.0 {
            break;
        }
        let aa_applied = applied.contains(&k);
        let delta = if aa_applied {
            let lo = k - k.min(m);
            projection_gain(&gradients[lo..=k], lambda_gradient)?
        } else {
            1.0
        };
        let bound = delta * contraction;
        let observed_ratio = gradients[k + 1].norm() / g_norm;
        entries.push(GainEntry {
            iteration: k,
            aa_applied,
            delta,
            bound,
            observed_ratio,
            slack: bound - observed_ratio,
        });

        delta_product *= delta;
        if let Some((xs, iterates, e0)) = initial_error {
            iterate_bounds.push(IterateBound {
                iteration: k + 1,
                error: iterates[k + 1].distance(xs),
                bound: delta_product * contraction.powi(k as i32 + 1) * ratio_l_mu * e0,
            });
        }
    }

    Ok(GainReport {
        eta,
        mu: inputs.mu,
        l: inputs.l,
        estimated_constants: inputs.estimated,
        lambda_gradient,
        entries,
        iterate_bounds,
    })
}

/// Checks the per-step gain bound and the cumulative iterate bound, each with
/// relative tolerance `tol`. Returns the first violation as
/// [`Error::BoundViolated`].
pub fn verify_theorem_3_1(trace: &ConvergenceTrace, inputs: &GainInputs, tol: f64) -> Result<GainReport> {
    let report = gain_report(trace, inputs)?;
    for e in &report.entries {
        if e.delta > 1.0 + 1e-10 || e.delta < 0.0 {
            return Err(Error::BoundViolated {
                iteration: e.iteration,
                slack: 1.0 - e.delta,
            });
        }
        if e.observed_ratio > e.bound * (1.0 + tol) {
            return Err(Error::BoundViolated {
                iteration: e.iteration,
                slack: e.slack,
            });
        }
    }
    for b in &report.iterate_bounds {
        if b.error > b.bound * (1.0 + tol) {
            return Err(Error::BoundViolated {
                iteration: b.iteration,
                slack: b.bound - b.error,
            });
        }
    }
    Ok(report)
}

/// What `iters_to` thresholds are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMetric {
    /// `f(x_k) − f*`.
    Suboptimality,
    /// `‖x_k − x_{k−1}‖`, used when `f*` is unknown.
    StepNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItersTo {
    #[serde(rename = "1e-2")]
    pub e2: Option<usize>,
    #[serde(rename = "1e-4")]
    pub e4: Option<usize>,
    #[serde(rename = "1e-8")]
    pub e8: Option<usize>,
}

impl ItersTo {
    pub fn as_array(&self) -> [Option<usize>; 3] {
        [self.e2, self.e4, self.e8]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub iters_to: ItersTo,
    pub final_f: f64,
    pub iterations: usize,
    pub aa_accept_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub metric: SummaryMetric,
    pub solvers: Vec<SummaryRow>,
}

/// First row index whose metric is below `threshold`.
pub fn iterations_to(records: &[IterationRecord], f_star: Option<f64>, threshold: f64) -> Option<usize> {
    match f_star {
        Some(fs) => records.iter().position(|r| r.value - fs < threshold),
        None => records
            .iter()
            .skip(1)
            .position(|r| r.step_norm < threshold)
            .map(|p| p + 1),
    }
}

/// One row per trace: iterations to reach each of [`SUMMARY_THRESHOLDS`],
/// final value and AA acceptance rate.
pub fn summarize(problem: &str, traces: &[ConvergenceTrace], f_star: Option<f64>) -> Result<Summary> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("nothing to summarize".into()));
    }
    let solvers = traces
        .iter()
        .map(|t| summary_row(&t.label, t.params(), &t.records, t.aa_accept_rate(), f_star))
        .collect();
    Ok(Summary {
        problem: problem.to_string(),
        metric: if f_star.is_some() {
            SummaryMetric::Suboptimality
        } else {
            SummaryMetric::StepNorm
        },
        solvers,
    })
}

pub fn summary_row(
    name: &str,
    params: BTreeMap<String, f64>,
    records: &[IterationRecord],
    aa_accept_rate: Option<f64>,
    f_star: Option<f64>,
) -> SummaryRow {
    let [e2, e4, e8] = SUMMARY_THRESHOLDS.map(|t| iterations_to(records, f_star, t));
    SummaryRow {
        name: name.to_string(),
        params,
        iters_to: ItersTo { e2, e4, e8 },
        final_f: records.last().map_or(f64::NAN, |r| r.value),
        iterations: records.len().saturating_sub(1),
        aa_accept_rate,
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_text(&self) -> String {
        let metric = match self.metric {
            SummaryMetric::Suboptimality => "f - f*",
            SummaryMetric::StepNorm => "|x_k - x_k-1|",
        };
        let name_w = self.solvers.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "problem: {}    metric: {}", self.problem, metric);
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>11} {:>11} {:>11} {:>10} {:>14} {:>8}",
            "solver", "iters@1e-2", "iters@1e-4", "iters@1e-8", "iters", "final f", "aa rate"
        );
        let cell = |v: Option<usize>| v.map_or_else(|| "not reached".to_string(), |n| n.to_string());
        for r in &self.solvers {
            let [a, b, c] = r.iters_to.as_array();
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>11} {:>11} {:>11} {:>10} {:>14.6e} {:>8}",
                r.name,
                cell(a),
                cell(b),
                cell(c),
                r.iterations,
                r.final_f,
                r.aa_accept_rate.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anderson::run_aa;
    use crate::objectives::{make_quadratic, Objective};
    use crate::optimizers::run_optimizer;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::new(xs.to_vec()).unwrap()
    }

    fn quad_inputs(q: &crate::objectives::Quadratic, eta: f64) -> GainInputs {
        let (mu, l) = q.spectrum();
        GainInputs {
            eta,
            mu,
            l,
            minimizer: Some(q.minimizer().clone()),
            estimated: false,
        }
    }

    #[test]
    fn identical_gradients_give_unit_gain() {
        let g = v(&[0.3, -1.0, 2.0]);
        assert_eq!(projection_gain(&[g.clone(), g.clone(), g.clone()], 0.0).unwrap(), 1.0);
        assert_relative_eq!(projection_gain(&[g.clone(), g.clone()], 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn single_gradient_gives_unit_gain() {
        assert_eq!(projection_gain(&[v(&[1.0, 2.0])], 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn gradient_in_span_is_removed() {
        let d = projection_gain(&[v(&[0.0, 0.0]), v(&[1.0, 0.0])], 0.0).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_difference_keeps_gradient() {
        // g_k = (1,0), difference (1,−1): projection leaves (½,½).
        let d = projection_gain(&[v(&[0.0, 1.0]), v(&[1.0, 0.0])], 0.0).unwrap();
        assert_relative_eq!(d, 0.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn zero_gradient_and_empty_window_are_errors() {
        assert!(matches!(
            projection_gain(&[v(&[1.0]), v(&[0.0])], 0.0),
            Err(Error::ZeroGradient)
        ));
        assert!(matches!(projection_gain(&[], 0.0), Err(Error::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn gain_is_a_contraction(seed in 0u64..10_000, len in 1usize..7, lambda_exp in -12i32..2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grads: Vec<DenseVector> = (0..len)
                .map(|_| DenseVector::from_fn(8, |_| rng.random_range(-1.0..1.0)))
                .collect();
            let d = projection_gain(&grads, 10f64.powi(lambda_exp)).unwrap();
            prop_assert!((0.0..=1.0 + 1e-10).contains(&d));
        }

        #[test]
        fn larger_nested_window_never_increases_gain(seed in 0u64..10_000, extra in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut grads: Vec<DenseVector> = (0..6)
                .map(|_| DenseVector::from_fn(10, |_| rng.random_range(-1.0..1.0)))
                .collect();
            let current = grads.pop().unwrap();
            let small: Vec<_> = grads[grads.len() - 1..].iter().cloned().chain([current.clone()]).collect();
            let large: Vec<_> = grads[grads.len() - 1 - extra.min(4)..].iter().cloned().chain([current]).collect();
            let ds = projection_gain(&small, 0.0).unwrap();
            let dl = projection_gain(&large, 0.0).unwrap();
            prop_assert!(dl <= ds + 1e-12);
        }
    }

    #[test]
    fn plain_gd_reduces_to_classical_contraction() {
        let q = make_quadratic(20, 100.0, 5).unwrap();
        let eta = q.optimal_step();
        let x0 = DenseVector::zeros(20);
        let t = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            eta,
            &StoppingRule::iterations(100),
            Recording::all(),
        )
        .unwrap();
        let report = verify_theorem_3_1(&t, &quad_inputs(&q, eta), 1e-6).unwrap();
        assert_eq!(report.entries.len(), 100);
        assert!(report.entries.iter().all(|e| e.delta == 1.0 && !e.aa_applied));
        assert_eq!(report.iterate_bounds.len(), 100);
    }

    #[test]
    fn aa_gd_trace_satisfies_gain_bounds() {
        let q = make_quadratic(30, 1e3, 8).unwrap();
        let eta = q.optimal_step();
        let x0 = DenseVector::zeros(30);
        let cfg = AaConfig::new(5).every(1);
        let t = run_aa(
            Method::Gd,
            &q,
            &x0,
            eta,
            &cfg,
            &StoppingRule::iterations(200),
            Recording::all(),
        )
        .unwrap();
        let report = verify_theorem_3_1(&t, &quad_inputs(&q, eta), 1e-6).unwrap();
        assert!(report.entries.iter().filter(|e| e.aa_applied).count() > 10);
        assert!(report.entries.iter().all(|e| e.delta <= 1.0 + 1e-10));
        assert_relative_eq!(report.lambda_gradient, cfg.lambda / (eta * eta));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(json["entries"].is_array());
        assert!(report.to_text().lines().count() >= report.entries.len() + 2);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let q = make_quadratic(5, 10.0, 2).unwrap();
        let (mu, l) = q.spectrum();
        let eta = 2.5 / (l + mu);
        let x0 = DenseVector::zeros(5);
        let t = run_optimizer(Method::Gd, &q, &x0, eta, &StoppingRule::iterations(5), Recording::all()).unwrap();
        assert!(matches!(
            gain_report(&t, &quad_inputs(&q, eta)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn missing_gradients_and_relaxed_mix_are_rejected() {
        let q = make_quadratic(5, 10.0, 2).unwrap();
        let eta = q.optimal_step();
        let x0 = DenseVector::zeros(5);
        let t = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            eta,
            &StoppingRule::iterations(5),
            Recording::default(),
        )
        .unwrap();
        assert!(gain_report(&t, &quad_inputs(&q, eta)).is_err());
        let cfg = AaConfig::new(2).with_beta(0.5);
        let t = run_aa(
            Method::Gd,
            &q,
            &x0,
            eta,
            &cfg,
            &StoppingRule::iterations(5),
            Recording::all(),
        )
        .unwrap();
        assert!(gain_report(&t, &quad_inputs(&q, eta)).is_err());
    }

    #[test]
    fn violated_bound_is_reported() {
        let q = make_quadratic(5, 10.0, 2).unwrap();
        let eta = q.optimal_step();
        let x0 = DenseVector::zeros(5);
        let t = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            eta,
            &StoppingRule::iterations(10),
            Recording::all(),
        )
        .unwrap();
        // Claiming a larger μ than the truth makes the contraction too optimistic.
        let mut inputs = quad_inputs(&q, eta);
        inputs.mu *= 3.0;
        inputs.l = inputs.l.max(inputs.mu);
        inputs.eta = eta.min(2.0 / (inputs.l + inputs.mu));
        assert!(matches!(
            verify_theorem_3_1(&t, &inputs, 1e-6),
            Err(Error::BoundViolated { .. })
        ));
    }

    fn record(iteration: usize, value: f64, step_norm: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            value,
            grad_norm: 1.0,
            step_norm,
            aa_applied: false,
            aa_accepted: None,
            delta: None,
            r_min: None,
            r_max: None,
            time_ms: 0.0,
        }
    }

    #[test]
    fn iterations_to_uses_suboptimality_or_step_norm() {
        let records: Vec<_> = (0..6)
            .map(|k| record(k, 10f64.powi(-2 * k as i32), 10f64.powi(-(k as i32))))
            .collect();
        assert_eq!(iterations_to(&records, Some(0.0), 1e-2), Some(2));
        assert_eq!(iterations_to(&records, Some(0.0), 1e-4), Some(3));
        assert_eq!(iterations_to(&records, Some(0.0), 1e-12), None);
        // The initial row's zero step never counts.
        assert_eq!(iterations_to(&records, None, 1e-2), Some(3));
    }

    #[test]
    fn summary_marks_unreached_thresholds() {
        let q = make_quadratic(10, 1e3, 3).unwrap();
        let x0 = DenseVector::zeros(10);
        let eta = q.optimal_step();
        let gd = run_optimizer(
            Method::Gd,
            &q,
            &x0,
            eta,
            &StoppingRule::iterations(50),
            Recording::default(),
        )
        .unwrap();
        let s = summarize("quadratic", &[gd], Some(q.min_value())).unwrap();
        assert_eq!(s.solvers.len(), 1);
        assert_eq!(s.solvers[0].iters_to.e8, None);
        assert!(s.to_text().contains("not reached"));
        let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert!(json["solvers"][0]["iters_to"]["1e-8"].is_null());
        assert_eq!(json["problem"], "quadratic");
    }

    #[test]
    fn summary_thresholds_are_monotone_and_aa_wins() {
        let q = make_quadratic(50, 1e3, 11).unwrap();
        let x0 = DenseVector::zeros(50);
        let eta = q.optimal_step();
        let stop = StoppingRule {
            max_iterations: 20_000,
            grad_tol: None,
            value_target: Some(q.min_value() + 1e-9),
            step_tol: None,
        };
        let gd = run_optimizer(Method::Gd, &q, &x0, eta, &stop, Recording::default()).unwrap();
        let aa = run_aa(Method::Gd, &q, &x0, eta, &AaConfig::new(5), &stop, Recording::default()).unwrap();
        let s = summarize("quadratic", &[gd, aa], Some(q.min_value())).unwrap();
        for row in &s.solvers {
            let [a, b, c] = row.iters_to.as_array().map(Option::unwrap);
            assert!(a <= b && b <= c);
        }
        assert!(s.solvers[1].iters_to.e8.unwrap() < s.solvers[0].iters_to.e8.unwrap());
        assert!(s.solvers[1].aa_accept_rate.is_some());
        assert!(s.solvers[0].aa_accept_rate.is_none());
        assert!(q.value(&x0).is_finite());
    }

    #[test]
    fn empty_summary_is_an_error() {
        assert!(summarize("x", &[], None).is_err());
    }
}
