use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use slowmix::criteria::Verdict;
use slowmix::ScalingFit;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    /// Floats carry 17 significant digits so they round-trip exactly.
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// Rows of one experiment under a fixed column header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Everything an experiment run produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub table: Table,
    pub fits: Vec<(String, Option<ScalingFit>)>,
    pub checks: Vec<Verdict>,
    /// Experiment-specific values for `result.json` (derived constants,
    /// centring offsets, auxiliary estimates).
    pub extra: Map<String, Value>,
    /// Free-form lines for `summary.txt`.
    pub notes: Vec<String>,
    /// Additional CSV files written next to `result.csv`, by file name.
    pub aux: Vec<(&'static str, Table)>,
}

impl Outcome {
    pub fn extra(&mut self, key: &str, value: impl Serialize) {
        self.extra
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub struct RunInfo {
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

pub fn result_json(cfg: &ExperimentConfig, outcome: &Outcome, info: &RunInfo) -> Value {
    let fits: Map<String, Value> = outcome
        .fits
        .iter()
        .map(|(name, fit)| (name.clone(), serde_json::to_value(fit).unwrap_or(Value::Null)))
        .collect();
    json!({
        "experiment": cfg.experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "threads": info.threads,
        "wall_clock_seconds": info.wall_clock_seconds,
        "columns": outcome.table.columns,
        "rows": outcome.table.to_json(),
        "fits": fits,
        "checks": outcome.checks,
        "extra": outcome.extra,
    })
}

pub fn summary_text(cfg: &ExperimentConfig, outcome: &Outcome, info: &RunInfo) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", cfg.experiment.name());
    let _ = writeln!(s, "seed: {}  threads: {}  wall clock: {:.2} s", cfg.seed, info.threads, info.wall_clock_seconds);
    let _ = writeln!(s, "rows: {}", outcome.table.rows.len());
    for (name, fit) in &outcome.fits {
        match fit {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "fit {name}: exponent {:.4} (se {:.4}, r^2 {:.4}, {} points)",
                    f.exponent, f.exponent_std_error, f.r_squared, f.points.len()
                );
            }
            None => {
                let _ = writeln!(s, "fit {name}: not enough positive points");
            }
        }
    }
    for note in &outcome.notes {
        let _ = writeln!(s, "{note}");
    }
    if outcome.checks.is_empty() {
        let _ = writeln!(s, "checks: none apply to this configuration");
    }
    for c in &outcome.checks {
        let _ = writeln!(s, "{}", c.line());
    }
    s
}

pub fn write_all(dir: &Path, cfg: &ExperimentConfig, outcome: &Outcome, info: &RunInfo) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
    };
    write("result.csv", outcome.table.to_csv())?;
    let json = serde_json::to_string_pretty(&result_json(cfg, outcome, info))?;
    write("result.json", json + "\n")?;
    write("summary.txt", summary_text(cfg, outcome, info))?;
    for (name, table) in &outcome.aux {
        write(name, table.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&["n", "value", "ok", "label"]);
        t.push(vec![8u64.into(), 0.1f64.into(), true.into(), "a,b".into()]);
        assert_eq!(t.to_csv(), "n,value,ok,label\n8,1.0000000000000001e-1,true,\"a,b\"\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            let s = Cell::Float(x).csv();
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_rows_are_objects() {
        let mut t = Table::new(&["n", "value"]);
        t.push(vec![2u64.into(), f64::NAN.into()]);
        let j = t.to_json();
        assert_eq!(j[0]["n"], 2);
        assert_eq!(j[0]["value"], "NaN");
    }
}
