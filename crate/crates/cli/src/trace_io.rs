//! Trace CSV files: a few `# key: value` header lines followed by one row per
//! iterate.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use aaegd::diagnostics::{summary_row, IterationRecord, Summary, SummaryMetric};

use crate::error::{CliError, Result};

/// First line of every trace file.
pub const TRACE_VERSION: &str = "# aaegd-trace v1";

pub const COLUMNS: [&str; 10] = [
    "iteration",
    "f",
    "grad_norm",
    "step_norm",
    "aa_applied",
    "aa_accepted",
    "delta_k",
    "r_min",
    "r_max",
    "time_ms",
];

/// Everything a trace file carries besides its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    /// Position of the solver in its experiment, used to order summaries.
    pub index: usize,
    pub problem: String,
    pub solver: String,
    pub params: BTreeMap<String, f64>,
    pub f_star: Option<f64>,
    pub aa_accept_rate: Option<f64>,
    pub termination: String,
}

#[derive(Debug, Clone)]
pub struct TraceFile {
    pub meta: TraceMeta,
    pub records: Vec<IterationRecord>,
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_trace(path: &Path, meta: &TraceMeta, records: &[IterationRecord]) -> Result<()> {
    let io = |e| CliError::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "{TRACE_VERSION}").map_err(io)?;
    writeln!(out, "# index: {}", meta.index).map_err(io)?;
    writeln!(out, "# problem: {}", meta.problem).map_err(io)?;
    writeln!(out, "# solver: {}", meta.solver).map_err(io)?;
    let params = serde_json::to_string(&meta.params).expect("params serialize");
    writeln!(out, "# params: {params}").map_err(io)?;
    writeln!(out, "# f_star: {}", opt(meta.f_star)).map_err(io)?;
    writeln!(out, "# aa_accept_rate: {}", opt(meta.aa_accept_rate)).map_err(io)?;
    writeln!(out, "# termination: {}", meta.termination).map_err(io)?;

    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.value.to_string(),
            r.grad_norm.to_string(),
            r.step_norm.to_string(),
            u8::from(r.aa_applied).to_string(),
            opt(r.aa_accepted.map(u8::from)),
            opt(r.delta),
            opt(r.r_min),
            opt(r.r_max),
            format!("{:.3}", r.time_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_trace(path, &text)
}

fn malformed(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Trace {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_trace(path: &Path, text: &str) -> Result<TraceFile> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_VERSION) {
        return Err(malformed(path, format!("first line is not {TRACE_VERSION:?}")));
    }
    let mut header = BTreeMap::new();
    for line in text.lines().skip(1) {
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some((k, v)) = rest.split_once(':') {
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let field = |k: &str| {
        header
            .get(k)
            .cloned()
            .ok_or_else(|| malformed(path, format!("missing header {k:?}")))
    };
    let number = |k: &str, v: &str| -> Result<Option<f64>> {
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse()
                .map(Some)
                .map_err(|_| malformed(path, format!("bad {k} value {v:?}")))
        }
    };
    let meta = TraceMeta {
        index: field("index")?.parse().map_err(|_| malformed(path, "bad index"))?,
        problem: field("problem")?,
        solver: field("solver")?,
        params: serde_json::from_str(&field("params")?).map_err(|e| malformed(path, format!("params: {e}")))?,
        f_star: number("f_star", &field("f_star")?)?,
        aa_accept_rate: number("aa_accept_rate", &field("aa_accept_rate")?)?,
        termination: field("termination")?,
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(malformed(path, format!("unexpected columns {headers:?}")));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| malformed(path, e.to_string()))?;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            cell(c)
                .parse()
                .map_err(|_| malformed(path, format!("row {}: bad {} value {:?}", i + 1, COLUMNS[c], cell(c))))
        };
        let opt_num = |c: usize| -> Result<Option<f64>> {
            if cell(c).is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        let flag = |c: usize| -> Result<Option<bool>> {
            match cell(c) {
                "" => Ok(None),
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                other => Err(malformed(
                    path,
                    format!("row {}: bad {} flag {other:?}", i + 1, COLUMNS[c]),
                )),
            }
        };
        records.push(IterationRecord {
            iteration: num(0)? as usize,
            value: num(1)?,
            grad_norm: num(2)?,
            step_norm: num(3)?,
            aa_applied: flag(4)?.unwrap_or(false),
            aa_accepted: flag(5)?,
            delta: opt_num(6)?,
            r_min: opt_num(7)?,
            r_max: opt_num(8)?,
            time_ms: num(9)?,
        });
    }
    Ok(TraceFile { meta, records })
}

/// Trace files in `dir`, ordered by their recorded solver index.
pub fn read_traces(dir: &Path) -> Result<Vec<(PathBuf, TraceFile)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let first = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            if first.starts_with(TRACE_VERSION) {
                let t = parse_trace(&path, &first)?;
                out.push((path, t));
            }
        }
    }
    out.sort_by_key(|(p, t)| (t.meta.index, p.clone()));
    Ok(out)
}

/// Rebuilds the comparison table from the trace files in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let traces = read_traces(dir)?;
    let Some((_, first)) = traces.first() else {
        return Err(CliError::config(format!("no trace files in {}", dir.display())));
    };
    let problem = first.meta.problem.clone();
    let f_star = first.meta.f_star;
    let solvers = traces
        .iter()
        .map(|(_, t)| {
            summary_row(
                &t.meta.solver,
                t.meta.params.clone(),
                &t.records,
                t.meta.aa_accept_rate,
                f_star,
            )
        })
        .collect();
    Ok(Summary {
        problem,
        metric: if f_star.is_some() {
            SummaryMetric::Suboptimality
        } else {
            SummaryMetric::StepNorm
        },
        solvers,
    })
}

/// The trace text with the `time_ms` column blanked, for comparing runs.
pub fn without_timing(text: &str) -> String {
    text.lines()
        .map(|line| {
            if line.starts_with('#') {
                line.to_string()
            } else {
                match line.rfind(',') {
                    Some(i) => line[..i].to_string(),
                    None => line.to_string(),
                }
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
