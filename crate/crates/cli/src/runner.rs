//! Builds problems and solvers from a config, runs them and writes the
//! artifacts.

use std::path::{Path, PathBuf};

use aaegd::anderson::{run_aa, AaConfig, DEFAULT_LAMBDA};
use aaegd::diagnostics::{summarize, ConvergenceTrace, Recording, Summary, SUMMARY_THRESHOLDS};
use aaegd::linalg::{DenseMatrix, DenseVector};
use aaegd::objectives::{
    load_csv_dataset, synthetic_classification, synthetic_regression, CompositeProblem, LeastSquares, LogisticLoss,
    Objective, Quadratic, Rosenbrock,
};
use aaegd::optimizers::{run_optimizer, Method, StoppingRule};
use aaegd::proximal::{run_aa_aegd_prox, run_aa_pga, run_apga, run_pga, Momentum, Prox, ProxAaOptions};

use crate::config::{slug, ExperimentConfig, ProblemKind, SolverMethod, SolverSpec, StepSize};
use crate::error::{CliError, Result};
use crate::trace_io::{write_trace, TraceMeta};

/// Environment variable that replaces the default output root `runs/`.
pub const OUTPUT_ROOT_ENV: &str = "AAEGD_OUTPUT_ROOT";

/// Problem data generated once per experiment.
#[derive(Debug, Clone)]
pub enum ProblemData {
    Quadratic(Quadratic),
    Rosenbrock,
    Logistic { a: DenseMatrix, y: Vec<f64>, mu: f64 },
    Nnls { a: DenseMatrix, b: DenseVector, mu: f64 },
}

/// A problem ready to hand to a solver.
pub enum Instance {
    Smooth {
        f: Box<dyn Objective>,
        l: Option<f64>,
        mu: Option<f64>,
    },
    Composite(CompositeProblem),
}

impl Instance {
    pub fn dim(&self) -> usize {
        match self {
            Instance::Smooth { f, .. } => f.dim(),
            Instance::Composite(p) => p.dim(),
        }
    }

    /// `(L, mu)` used to resolve relative step sizes.
    pub fn constants(&self) -> (Option<f64>, Option<f64>) {
        match self {
            Instance::Smooth { l, mu, .. } => (*l, *mu),
            Instance::Composite(p) => (Some(p.lipschitz), None),
        }
    }
}

impl ProblemData {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.problem;
        let core = |e: aaegd::Error| CliError::config(format!("problem: {e}"));
        Ok(match p.kind {
            ProblemKind::Quadratic => {
                ProblemData::Quadratic(aaegd::objectives::make_quadratic(p.dim(), p.kappa(), cfg.seed).map_err(core)?)
            }
            ProblemKind::Rosenbrock => ProblemData::Rosenbrock,
            ProblemKind::Logistic => {
                let (a, y) = match &p.dataset {
                    Some(path) => {
                        let (a, y) = load_csv_dataset(path, p.label_column, p.header)
                            .map_err(|e| CliError::config(format!("dataset {}: {e}", path.display())))?;
                        (a, y.into_vec())
                    }
                    None => synthetic_classification(p.samples(), p.features(), p.kappa(), cfg.seed).map_err(core)?,
                };
                ProblemData::Logistic { a, y, mu: p.mu() }
            }
            ProblemKind::Nnls => {
                let (a, b) = match &p.dataset {
                    Some(path) => load_csv_dataset(path, p.label_column, p.header)
                        .map_err(|e| CliError::config(format!("dataset {}: {e}", path.display())))?,
                    None => synthetic_regression(p.samples(), p.features(), p.kappa(), cfg.seed).map_err(core)?,
                };
                ProblemData::Nnls { a, b, mu: p.mu() }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemData::Quadratic(q) => q.dim(),
            ProblemData::Rosenbrock => 2,
            ProblemData::Logistic { a, .. } | ProblemData::Nnls { a, .. } => a.cols(),
        }
    }

    /// Known optimal value, if any.
    pub fn f_star(&self) -> Option<f64> {
        match self {
            ProblemData::Quadratic(q) => Some(q.min_value()),
            ProblemData::Rosenbrock => Some(0.0),
            _ => None,
        }
    }

    /// Builds the objective, with energy shift `c` if given.
    pub fn instance(&self, c: Option<f64>) -> Result<Instance> {
        let core = |e: aaegd::Error| CliError::config(format!("problem: {e}"));
        Ok(match self {
            ProblemData::Quadratic(q) => {
                let (mu, l) = q.spectrum();
                let q = match c {
                    Some(c) => q.clone().with_energy_shift(c),
                    None => q.clone(),
                };
                Instance::Smooth {
                    f: Box::new(q),
                    l: Some(l),
                    mu: Some(mu),
                }
            }
            ProblemData::Rosenbrock => {
                let f = match c {
                    Some(c) => Rosenbrock::default().with_energy_shift(c),
                    None => Rosenbrock::default(),
                };
                Instance::Smooth {
                    f: Box::new(f),
                    l: None,
                    mu: None,
                }
            }
            ProblemData::Logistic { a, y, mu } => {
                let mut loss = LogisticLoss::new(a.clone(), y, *mu).map_err(core)?;
                if let Some(c) = c {
                    loss = loss.with_energy_shift(c);
                }
                let l = loss.data_lipschitz() + 2.0 * mu;
                Instance::Composite(
                    CompositeProblem::new(Box::new(loss), Prox::LinfBall { radius: 1.0 }, l).map_err(core)?,
                )
            }
            ProblemData::Nnls { a, b, mu } => {
                let mut loss = LeastSquares::new(a.clone(), b.clone(), *mu).map_err(core)?;
                if let Some(c) = c {
                    loss = loss.with_energy_shift(c);
                }
                let l = loss.data_lipschitz() + 2.0 * mu;
                Instance::Composite(CompositeProblem::new(Box::new(loss), Prox::NonNegative, l).map_err(core)?)
            }
        })
    }
}

/// Stopping rule for the config, with `f_tol` turned into an absolute target.
pub fn stopping_rule(cfg: &ExperimentConfig, f_star: Option<f64>) -> Result<StoppingRule> {
    let s = &cfg.stop;
    let value_target = match (s.f_tol, f_star) {
        (Some(tol), Some(fs)) => Some(s.value_target.map_or(fs + tol, |v| v.max(fs + tol))),
        (Some(_), None) => return Err(CliError::config("stop.f_tol needs a problem with known optimal value")),
        (None, _) => s.value_target,
    };
    Ok(StoppingRule {
        max_iterations: s.max_iterations,
        grad_tol: s.grad_tol,
        value_target,
        step_tol: s.step_tol,
    })
}

fn aa_config(spec: &SolverSpec) -> AaConfig {
    let m = spec.m.unwrap_or(1);
    AaConfig::new(m)
        .every(spec.q.unwrap_or(m))
        .with_beta(spec.beta.unwrap_or(1.0))
        .with_lambda(spec.lambda.unwrap_or(DEFAULT_LAMBDA))
}

/// Runs one solver. The trace label is replaced by the configured name.
pub fn run_solver(
    data: &ProblemData,
    spec: &SolverSpec,
    x0: &DenseVector,
    stop: &StoppingRule,
    recording: Recording,
) -> Result<ConvergenceTrace> {
    let instance = data.instance(spec.c)?;
    let (l, mu) = instance.constants();
    let eta = spec.eta.resolve(l, mu)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(CliError::config(format!(
            "solver {:?}: step size {eta} is not usable",
            spec.name
        )));
    }
    let solver_err = |source| CliError::Solver {
        solver: spec.name.clone(),
        source,
    };
    let cfg = aa_config(spec);
    let options = ProxAaOptions {
        replace_auxiliary: spec.replace_auxiliary.unwrap_or(true),
    };
    let mut trace = match (&instance, spec.method) {
        (Instance::Smooth { f, .. }, method) => match method {
            SolverMethod::Gd => run_optimizer(Method::Gd, f, x0, eta, stop, recording),
            SolverMethod::Aegd => run_optimizer(Method::Aegd, f, x0, eta, stop, recording),
            SolverMethod::AaGd => run_aa(Method::Gd, f, x0, eta, &cfg, stop, recording),
            SolverMethod::AaAegd => run_aa(Method::Aegd, f, x0, eta, &cfg, stop, recording),
            other => {
                return Err(CliError::config(format!(
                    "solver {:?}: {other:?} needs a constrained problem",
                    spec.name
                )))
            }
        },
        (Instance::Composite(p), method) => match method {
            SolverMethod::Gd | SolverMethod::Pga => run_pga(p, x0, eta, stop, recording),
            SolverMethod::Apga => {
                let momentum = spec.momentum.map_or(Momentum::Nesterov, Momentum::Constant);
                run_apga(p, x0, eta, momentum, stop, recording)
            }
            SolverMethod::Aegd => {
                // The guarded scheme with mixing switched off is plain AEGD + prox.
                run_aa_aegd_prox(p, x0, eta, &AaConfig::disabled(1), stop, options, recording).map(|mut t| {
                    t.aa = None;
                    t
                })
            }
            SolverMethod::AaGd | SolverMethod::AaPga => run_aa_pga(p, x0, eta, &cfg, stop, options, recording),
            SolverMethod::AaAegd => run_aa_aegd_prox(p, x0, eta, &cfg, stop, options, recording),
        },
    }
    .map_err(solver_err)?;
    trace.label = spec.name.clone();
    Ok(trace)
}

/// Starting point from the config, or the origin.
pub fn initial_point(cfg: &ExperimentConfig, data: &ProblemData) -> Result<DenseVector> {
    let n = data.dim();
    match &cfg.problem.x0 {
        Some(x0) if x0.len() != n => Err(CliError::config(format!(
            "problem.x0 has length {}, but the problem has dimension {n}",
            x0.len()
        ))),
        Some(x0) => DenseVector::new(x0.clone()).map_err(|e| CliError::config(format!("problem.x0: {e}"))),
        None => Ok(DenseVector::zeros(n)),
    }
}

/// Output directory: an explicit override, else `$AAEGD_OUTPUT_ROOT/<name>`,
/// else the config's `output_dir`, else `runs/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|r| !r.is_empty()) {
        return PathBuf::from(root).join(&cfg.name);
    }
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub summary: Summary,
    pub traces: Vec<ConvergenceTrace>,
    pub trace_files: Vec<PathBuf>,
}

/// Runs every solver (concurrently), writes one trace CSV per solver plus
/// `summary.json`, `summary.txt` and the resolved `config.toml` into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = ProblemData::build(cfg)?;
    let x0 = initial_point(cfg, &data)?;
    let f_star = data.f_star();
    let stop = stopping_rule(cfg, f_star)?;

    let results: Vec<Result<ConvergenceTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .solvers
            .iter()
            .map(|spec| {
                let (data, x0, stop) = (&data, &x0, &stop);
                scope.spawn(move || run_solver(data, spec, x0, stop, Recording::default()))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });

    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut traces = Vec::new();
    let mut trace_files = Vec::new();
    let mut first_error = None;
    for (index, (spec, result)) in cfg.solvers.iter().zip(results).enumerate() {
        match result {
            Ok(trace) => {
                let path = dir.join(format!("{}.csv", slug(&spec.name)));
                let meta = TraceMeta {
                    index,
                    problem: cfg.name.clone(),
                    solver: spec.name.clone(),
                    params: trace.params(),
                    f_star,
                    aa_accept_rate: trace.aa_accept_rate(),
                    termination: format!("{:?}", trace.termination),
                };
                write_trace(&path, &meta, &trace.records)?;
                trace_files.push(path);
                traces.push(trace);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let summary = summarize(&cfg.name, &traces, f_star).expect("at least one solver");
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
    };
    write("summary.json", summary.to_json())?;
    write("summary.txt", summary.to_text())?;
    write("config.toml", cfg.to_toml())?;
    Ok(ExperimentOutput {
        dir: dir.to_path_buf(),
        summary,
        traces,
        trace_files,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eta,
    M,
    Q,
}

impl std::str::FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepAxis::Eta),
            "m" => Ok(SweepAxis::M),
            "q" => Ok(SweepAxis::Q),
            _ => Err(CliError::config(format!(
                "unknown sweep axis {s:?}; expected eta, m or q"
            ))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Eta => "eta",
            SweepAxis::M => "m",
            SweepAxis::Q => "q",
        })
    }
}

#[derive(Debug)]
pub struct SweepOutput {
    pub aggregate: PathBuf,
    pub runs: Vec<(String, ExperimentOutput)>,
}

/// Copy of `cfg` with `axis` set to `value` on the targeted solvers: all
/// solvers for `eta`, the Anderson-accelerated ones for `m` and `q`, or only
/// the named solver when `only` is given. Solvers whose `q` was left unset
/// keep `q = m`.
pub fn with_axis_value(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    value: &str,
    only: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    let mut touched = 0;
    for s in out.solvers.iter_mut() {
        if only.is_some_and(|n| n != s.name) {
            continue;
        }
        match axis {
            SweepAxis::Eta => s.eta = value.parse::<StepSize>()?,
            SweepAxis::M | SweepAxis::Q => {
                if !s.method.uses_aa() {
                    continue;
                }
                let v: usize = value.parse().ok().filter(|v| *v >= 1).ok_or_else(|| {
                    CliError::config(format!("{axis} values must be positive integers, got {value:?}"))
                })?;
                if axis == SweepAxis::M {
                    s.m = Some(v);
                } else {
                    s.q = Some(v);
                }
            }
        }
        touched += 1;
    }
    if touched == 0 {
        return Err(CliError::config(match only {
            Some(n) => format!("no solver named {n:?} accepts the {axis} axis"),
            None => format!("no solver accepts the {axis} axis"),
        }));
    }
    out.validate()?;
    Ok(out)
}

/// One experiment per value under `dir/sweep-<axis>/<axis>=<value>/`, plus
/// `aggregate.csv` with iterations-to-threshold per solver and value.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    only: Option<&str>,
    dir: &Path,
) -> Result<SweepOutput> {
    if values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let configs: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| with_axis_value(cfg, axis, v, only).map(|c| (v.clone(), c)))
        .collect::<Result<_>>()?;
    let root = dir.join(format!("sweep-{axis}"));
    let mut runs = Vec::new();
    for (value, c) in configs {
        let sub = root.join(format!("{axis}={}", value.replace('/', "_over_")));
        let out = run_experiment(&c, &sub)?;
        runs.push((value, out));
    }

    let aggregate = root.join("aggregate.csv");
    let file = std::fs::File::create(&aggregate).map_err(|e| CliError::io(&aggregate, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::io(&aggregate, e.into());
    let mut header = vec!["axis".to_string(), "value".into(), "solver".into()];
    header.extend(SUMMARY_THRESHOLDS.iter().map(|t| format!("iters_{t:e}")));
    header.extend(["iterations".into(), "final_f".into(), "aa_accept_rate".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for (value, out) in &runs {
        for row in &out.summary.solvers {
            let mut rec = vec![axis.to_string(), value.clone(), row.name.clone()];
            rec.extend(
                row.iters_to
                    .as_array()
                    .map(|v| v.map_or_else(String::new, |n| n.to_string())),
            );
            rec.push(row.iterations.to_string());
            rec.push(row.final_f.to_string());
            rec.push(row.aa_accept_rate.map_or_else(String::new, |r| r.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&aggregate, e))?;
    Ok(SweepOutput { aggregate, runs })
}
