//! Experiment configuration: a TOML file with `[problem]`, `[stop]` and one
//! `[[solver]]` table per solver, plus `key.path=value` overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Where artifacts go; defaults to `runs/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(rename = "solver")]
    pub solvers: Vec<SolverSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Rosenbrock,
    Logistic,
    Nnls,
}

impl ProblemKind {
    pub fn is_constrained(self) -> bool {
        matches!(self, ProblemKind::Logistic | ProblemKind::Nnls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Quadratic dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Condition number of the quadratic Hessian or of the synthetic design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    /// Weight of the `μ‖x‖²` term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// CSV file used instead of synthetic data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub label_column: usize,
    #[serde(default)]
    pub header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(100)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or(1e3)
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(500)
    }

    pub fn features(&self) -> usize {
        self.features.unwrap_or(100)
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(match self.kind {
            ProblemKind::Logistic => 10.0,
            _ => 0.1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// `‖∇f(x_k)‖ ≤ grad_tol · (1 + |f(x_0)|)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    /// `f(x_k) − f* ≤ f_tol`; needs a problem with known `f*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_target: Option<f64>,
    /// `‖x_k − x_{k−1}‖ ≤ step_tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
}

fn default_max_iterations() -> usize {
    100_000
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            max_iterations: default_max_iterations(),
            grad_tol: Some(1e-8),
            f_tol: None,
            value_target: None,
            step_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Gd,
    Aegd,
    AaGd,
    AaAegd,
    Pga,
    Apga,
    AaPga,
}

impl SolverMethod {
    pub fn uses_aa(self) -> bool {
        matches!(self, SolverMethod::AaGd | SolverMethod::AaAegd | SolverMethod::AaPga)
    }

    pub fn uses_energy(self) -> bool {
        matches!(self, SolverMethod::Aegd | SolverMethod::AaAegd)
    }

    fn needs_constraints(self) -> bool {
        matches!(self, SolverMethod::Pga | SolverMethod::Apga | SolverMethod::AaPga)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub name: String,
    pub method: SolverMethod,
    pub eta: StepSize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Mixing period; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Energy shift for AEGD variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Constant APGA momentum weight instead of `(k−1)/(k+2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replace_auxiliary: Option<bool>,
}

/// A step size: a number, `"a/L"`, or `"a/(L+mu)"`, with `L` and `mu`
/// taken from the problem at load time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Absolute(f64),
    OverL(f64),
    OverLPlusMu(f64),
}

impl StepSize {
    pub fn resolve(&self, l: Option<f64>, mu: Option<f64>) -> Result<f64> {
        match *self {
            StepSize::Absolute(v) => Ok(v),
            StepSize::OverL(a) => l.map(|l| a / l).ok_or_else(|| {
                CliError::config(format!(
                    "step {self} needs a Lipschitz constant, which this problem lacks"
                ))
            }),
            StepSize::OverLPlusMu(a) => match (l, mu) {
                (Some(l), Some(mu)) => Ok(a / (l + mu)),
                _ => Err(CliError::config(format!(
                    "step {self} needs both L and mu, which this problem lacks"
                ))),
            },
        }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            StepSize::Absolute(v) | StepSize::OverL(v) | StepSize::OverLPlusMu(v) => v,
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Absolute(v) => write!(f, "{v}"),
            StepSize::OverL(a) => write!(f, "{a}/L"),
            StepSize::OverLPlusMu(a) => write!(f, "{a}/(L+mu)"),
        }
    }
}

impl FromStr for StepSize {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || {
            CliError::config(format!(
                "cannot parse step size {s:?}; expected a number, \"a/L\" or \"a/(L+mu)\""
            ))
        };
        let (num, den) = match compact.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (compact.as_str(), None),
        };
        let a: f64 = num.parse().map_err(|_| bad())?;
        match den {
            None => Ok(StepSize::Absolute(a)),
            Some("L") => Ok(StepSize::OverL(a)),
            Some("(L+mu)") | Some("L+mu") => Ok(StepSize::OverLPlusMu(a)),
            Some(_) => Err(bad()),
        }
    }
}

impl Serialize for StepSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Absolute(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(StepSize::Absolute(v)),
            Raw::Int(v) => Ok(StepSize::Absolute(v as f64)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Lower-case file-name stem for a solver name.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

impl ExperimentConfig {
    /// Reads a config file and applies `key.path=value` overrides. Relative
    /// dataset paths are resolved against the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let Some(ds) = &cfg.problem.dataset {
            if ds.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.problem.dataset = Some(base.join(ds));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML text with overrides, without validating.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.name.trim().is_empty() {
            return fail("name must not be empty".into());
        }
        if self.solvers.is_empty() {
            return fail("at least one [[solver]] is required".into());
        }
        self.validate_problem()?;
        self.validate_stop()?;
        let mut slugs = BTreeSet::new();
        for s in &self.solvers {
            let sl = slug(&s.name);
            if sl.is_empty() {
                return fail(format!("solver name {:?} has no usable characters", s.name));
            }
            if !slugs.insert(sl.clone()) {
                return fail(format!("solver names collide on file name {sl:?}"));
            }
            self.validate_solver(s)?;
        }
        Ok(())
    }

    fn validate_problem(&self) -> Result<()> {
        let p = &self.problem;
        let fail = |msg: String| Err(CliError::Config(msg));
        if let Some(k) = p.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                return fail(format!("problem.kappa must be >= 1, got {k}"));
            }
        }
        if let Some(mu) = p.mu {
            if !(mu >= 0.0 && mu.is_finite()) {
                return fail(format!("problem.mu must be >= 0, got {mu}"));
            }
        }
        match p.kind {
            ProblemKind::Quadratic => {
                if p.dim() == 0 {
                    return fail("problem.dim must be positive".into());
                }
            }
            ProblemKind::Rosenbrock => {}
            ProblemKind::Logistic | ProblemKind::Nnls => match &p.dataset {
                Some(path) => {
                    if !path.is_file() {
                        return fail(format!("dataset file {} does not exist", path.display()));
                    }
                }
                None => {
                    if p.features() == 0 || p.samples() < p.features() {
                        return fail(format!(
                            "need problem.samples >= problem.features >= 1, got {} and {}",
                            p.samples(),
                            p.features()
                        ));
                    }
                }
            },
        }
        if p.dataset.is_some() && !p.kind.is_constrained() {
            return fail(format!("problem.dataset is not used by {:?} problems", p.kind));
        }
        if let Some(x0) = &p.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return fail("problem.x0 must be finite".into());
            }
            let expected = match p.kind {
                ProblemKind::Quadratic => Some(p.dim()),
                ProblemKind::Rosenbrock => Some(2),
                _ if p.dataset.is_none() => Some(p.features()),
                _ => None,
            };
            if let Some(n) = expected {
                if x0.len() != n {
                    return fail(format!("problem.x0 has length {}, expected {n}", x0.len()));
                }
            }
        }
        Ok(())
    }

    fn validate_stop(&self) -> Result<()> {
        let s = &self.stop;
        for (name, v) in [("grad_tol", s.grad_tol), ("f_tol", s.f_tol), ("step_tol", s.step_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::config(format!("stop.{name} must be positive, got {v}")));
                }
            }
        }
        if s.f_tol.is_some() && self.problem.kind.is_constrained() {
            return Err(CliError::config(
                "stop.f_tol needs a known optimal value; use step_tol for constrained problems",
            ));
        }
        Ok(())
    }

    fn validate_solver(&self, s: &SolverSpec) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(format!("solver {:?}: {msg}", s.name)));
        let a = s.eta.coefficient();
        if !(a > 0.0 && a.is_finite()) {
            return fail(format!("eta must be positive, got {}", s.eta));
        }
        if s.method.needs_constraints() && !self.problem.kind.is_constrained() {
            return fail(format!("{:?} needs a constrained problem (logistic or nnls)", s.method));
        }
        if s.method.uses_aa() {
            match s.m {
                None => return fail("m is required for Anderson-accelerated methods".into()),
                Some(0) => return fail("m must be at least 1".into()),
                _ => {}
            }
            if s.q == Some(0) {
                return fail("q must be at least 1".into());
            }
            if let Some(b) = s.beta {
                if !(b > 0.0 && b <= 1.0) {
                    return fail(format!("beta must lie in (0, 1], got {b}"));
                }
            }
            if let Some(l) = s.lambda {
                if !(l >= 0.0 && l.is_finite()) {
                    return fail(format!("lambda must be >= 0, got {l}"));
                }
            }
        } else if s.m.is_some() || s.q.is_some() || s.beta.is_some() || s.lambda.is_some() {
            return fail("m, q, beta and lambda only apply to Anderson-accelerated methods".into());
        }
        if s.c.is_some() && !s.method.uses_energy() {
            return fail("c only applies to AEGD methods".into());
        }
        if let Some(c) = s.c {
            if !(c > 0.0 && c.is_finite()) {
                return fail(format!("c must be positive, got {c}"));
            }
        }
        if s.momentum.is_some() && s.method != SolverMethod::Apga {
            return fail("momentum only applies to apga".into());
        }
        if s.replace_auxiliary.is_some() && !(s.method.uses_aa() && self.problem.kind.is_constrained()) {
            return fail("replace_auxiliary only applies to guarded proximal AA methods".into());
        }
        Ok(())
    }
}

/// Applies `a.b.c=value`. Numeric path segments index arrays (so
/// `solver.0.eta=0.1` targets the first solver). The value is read as a TOML
/// literal, falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override {assignment:?} is not of the form key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::config(format!("override key {path:?} is malformed")));
    }
    let missing = || CliError::config(format!("override key {path:?} does not match the config structure"));
    let (last, parents) = segments.split_last().expect("split yields a segment");
    let mut cursor: &mut toml::Value = table
        .entry(segments[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parents.is_empty() {
        *cursor = value;
        return Ok(());
    }
    for seg in &parents[1..] {
        cursor = step(cursor, seg).ok_or_else(missing)?;
    }
    match cursor {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| missing())?;
            *a.get_mut(i).ok_or_else(missing)? = value;
        }
        _ => return Err(missing()),
    }
    Ok(())
}

fn step<'a>(v: &'a mut toml::Value, seg: &str) -> Option<&'a mut toml::Value> {
    match v {
        toml::Value::Table(t) => Some(
            t.entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
        ),
        toml::Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "demo"
seed = 3

[problem]
kind = "quadratic"
dim = 4
kappa = 10.0

[stop]
max_iterations = 50
f_tol = 1e-10

[[solver]]
name = "GD"
method = "gd"
eta = "2/(L+mu)"

[[solver]]
name = "AA-GD(2,2)"
method = "aa-gd"
eta = 0.1
m = 2
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::parse(BASIC, &[]).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.solvers[0].eta, StepSize::OverLPlusMu(2.0));
        assert_eq!(cfg.solvers[1].eta, StepSize::Absolute(0.1));
        assert_eq!(cfg.stop.grad_tol, None);
    }

    #[test]
    fn step_size_forms() {
        assert_eq!("9/L".parse::<StepSize>().unwrap(), StepSize::OverL(9.0));
        assert_eq!(
            " 2 / (L + mu) ".parse::<StepSize>().unwrap(),
            StepSize::OverLPlusMu(2.0)
        );
        assert_eq!("1e-3".parse::<StepSize>().unwrap(), StepSize::Absolute(1e-3));
        assert!("2/M".parse::<StepSize>().is_err());
        assert!("abc".parse::<StepSize>().is_err());
        assert_eq!(StepSize::OverL(3.0).resolve(Some(6.0), None).unwrap(), 0.5);
        assert!(StepSize::OverL(3.0).resolve(None, None).is_err());
        assert_eq!(StepSize::OverLPlusMu(2.0).resolve(Some(3.0), Some(1.0)).unwrap(), 0.5);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = ExperimentConfig::parse(
            BASIC,
            &[
                "seed=9".into(),
                "problem.kappa=100".into(),
                "solver.1.eta=9/L".into(),
                "solver.1.q=1".into(),
                "stop.step_tol=1e-12".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.problem.kappa, Some(100.0));
        assert_eq!(cfg.solvers[1].eta, StepSize::OverL(9.0));
        assert_eq!(cfg.solvers[1].q, Some(1));
        assert_eq!(cfg.stop.step_tol, Some(1e-12));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in ["seed", "solver.7.eta=1", "name.x=1", "problem..kind=1"] {
            assert!(
                matches!(ExperimentConfig::parse(BASIC, &[o.into()]), Err(CliError::Config(_))),
                "{o}"
            );
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::parse(BASIC, &[]).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_invalid_fields() {
        let cases = [
            "solver.0.eta=-1",
            "solver.1.m=0",
            "solver.1.beta=1.5",
            "solver.0.m=3",
            "solver.0.c=2",
            "solver.0.method=\"pga\"",
            "problem.kappa=0.5",
            "stop.f_tol=0",
            "solver.1.name=\"gd\"",
            "problem.x0=[1.0, 2.0]",
        ];
        for o in cases {
            let cfg = ExperimentConfig::parse(BASIC, &[o.into()]).unwrap();
            assert!(matches!(cfg.validate(), Err(CliError::Config(_))), "{o}");
        }
        assert!(ExperimentConfig::parse(BASIC, &["solver.0.typo=1".into()]).is_err());
    }

    #[test]
    fn missing_dataset_names_the_path() {
        let text = r#"
name = "x"
[problem]
kind = "nnls"
dataset = "/definitely/not/here.csv"
[[solver]]
name = "PGA"
method = "pga"
eta = "1/L"
"#;
        let err = ExperimentConfig::parse(text, &[]).unwrap().validate().unwrap_err();
        assert!(matches!(&err, CliError::Config(m) if m.contains("/definitely/not/here.csv")));
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("AA-GD(3,3)"), "aa-gd-3-3");
        assert_eq!(slug("  GD  "), "gd");
        assert_eq!(slug("AEGD η=2/L"), "aegd-2-l");
    }
}
