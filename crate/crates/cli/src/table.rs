//! Long-format result tables and their CSV encoding.
//!
//! Columns: `sweep_var,value,metric,source,estimate,std_error,sessions,seed`.
//! Floats are written with 17 significant digits so a parse reproduces the
//! exact value; `std_error`, `sessions` and `seed` are empty for closed-form
//! rows.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

pub const HEADER: [&str; 8] = [
    "sweep_var",
    "value",
    "metric",
    "source",
    "estimate",
    "std_error",
    "sessions",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Sim,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Sim => "sim",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(Source::Analytic),
            "sim" => Ok(Source::Sim),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: f64,
    pub metric: String,
    pub source: Source,
    pub estimate: f64,
    pub std_error: Option<f64>,
    /// Sessions or trials behind a simulated estimate.
    pub sessions: Option<u64>,
    pub seed: Option<u64>,
}

impl ResultRow {
    pub fn analytic(sweep_var: &str, value: f64, metric: &str, estimate: f64) -> Self {
        Self {
            sweep_var: sweep_var.to_owned(),
            value,
            metric: metric.to_owned(),
            source: Source::Analytic,
            estimate,
            std_error: None,
            sessions: None,
            seed: None,
        }
    }

    pub fn sim(
        sweep_var: &str,
        value: f64,
        metric: &str,
        estimate: f64,
        std_error: Option<f64>,
        sessions: u64,
        seed: u64,
    ) -> Self {
        Self {
            sweep_var: sweep_var.to_owned(),
            value,
            metric: metric.to_owned(),
            source: Source::Sim,
            estimate,
            std_error,
            sessions: Some(sessions),
            seed: Some(seed),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `rows` as CSV with LF line endings.
pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_var.clone(),
            fmt_f64(r.value),
            r.metric.clone(),
            r.source.as_str().to_owned(),
            fmt_f64(r.estimate),
            r.std_error.map(fmt_f64).unwrap_or_default(),
            r.sessions.map(|s| s.to_string()).unwrap_or_default(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the table to `path`.
pub fn emit_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_results(rows, std::io::BufWriter::new(file)).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Parse {
            path: path.to_owned(),
            message: format!("{other:?}"),
        },
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_owned(),
        message: format!("line {line}: {message}"),
    };
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(HEADER) {
        return Err(parse_err(1, "unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != HEADER.len() {
            return Err(parse_err(line, "wrong number of fields".into()));
        }
        let f = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| parse_err(line, format!("{}: bad number `{}`", HEADER[j], &rec[j])))
        };
        let opt_f = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                f(j).map(Some)
            }
        };
        let opt_u = |j: usize| -> Result<Option<u64>> {
            if rec[j].is_empty() {
                return Ok(None);
            }
            rec[j]
                .parse()
                .map(Some)
                .map_err(|_| parse_err(line, format!("{}: bad integer `{}`", HEADER[j], &rec[j])))
        };
        rows.push(ResultRow {
            sweep_var: rec[0].to_owned(),
            value: f(1)?,
            metric: rec[2].to_owned(),
            source: rec[3].parse().map_err(|m| parse_err(line, m))?,
            estimate: f(4)?,
            std_error: opt_f(5)?,
            sessions: opt_u(6)?,
            seed: opt_u(7)?,
        });
    }
    Ok(rows)
}
