//! Grid sweeps over dotted config keys.
//!
//! An axis is written `key=v1,v2,...` where `key` is a dotted path into the
//! config (`optimizer.alpha`, `lr.value`) and each value is a TOML literal
//! (bare words are taken as strings). Commas inside `[...]` do not split.
//! Several axes form their cartesian product, first axis outermost.
//!
//! Every grid point runs with the base config's seed, so duplicate points
//! produce identical records and a one-point grid equals a plain run.

use rayon::prelude::*;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<Value>,
}

impl GridAxis {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, rest) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("grid axis {spec:?} is not key=v1,v2,...")))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(Error::config(format!("bad grid key {key:?}")));
        }
        let values: Vec<Value> = split_top_level(rest).into_iter().map(parse_value).collect();
        if values.is_empty() {
            return Err(Error::config(format!("grid axis {key} has no values")));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|v| !v.is_empty());
    out
}

fn parse_value(tok: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {tok}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(tok.to_string()))
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => super::emit::format_float(*f),
        other => other.to_string(),
    }
}

fn set_path(root: &mut Table, key: &str, value: &Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut table = root;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("grid key {key}: {p} is not a table")))?;
    }
    // integers written for float-valued fields are widened
    let value = match (table.get(last), value) {
        (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(*i as f64),
        _ => value.clone(),
    };
    table.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

/// Expands the cartesian product, validating every resulting config.
pub fn expand_grid(base: &ExperimentConfig, axes: &[GridAxis]) -> Result<Vec<GridPoint>> {
    if axes.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let base_value = Table::try_from(base).map_err(|e| Error::config(e.to_string()))?;
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut picks = vec![0usize; axes.len()];
        for (j, axis) in axes.iter().enumerate().rev() {
            picks[j] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        let mut table = base_value.clone();
        let mut assignments = Vec::with_capacity(axes.len());
        for (axis, &k) in axes.iter().zip(&picks) {
            let v = &axis.values[k];
            set_path(&mut table, &axis.key, v)?;
            assignments.push((axis.key.clone(), display_value(v)));
        }
        let config: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                Error::config(format!("grid point {index} ({assignments:?}): {e}"))
            })?;
        config
            .validate()
            .map_err(|e| Error::config(format!("grid point {index} ({assignments:?}): {e}")))?;
        points.push(GridPoint {
            index,
            assignments,
            config,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub final_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub keys: Vec<String>,
    /// One record per grid point, in grid order.
    pub records: Vec<RunRecord>,
    /// Completed runs by final loss, then diverged runs; ties keep grid order.
    pub summary: Vec<SummaryRow>,
}

pub fn run_sweep(base: &ExperimentConfig, axes: &[GridAxis]) -> Result<SweepResult> {
    let points = expand_grid(base, axes)?;
    let records = points
        .par_iter()
        .map(|p| run_experiment(&p.config))
        .collect::<Result<Vec<_>>>()?;
    let mut summary: Vec<SummaryRow> = points
        .iter()
        .zip(&records)
        .map(|(p, r)| SummaryRow {
            index: p.index,
            assignments: p.assignments.clone(),
            final_loss: r.final_loss(),
            best_loss: r.best_loss(),
            diverged: r.diverged(),
        })
        .collect();
    summary.sort_by(|a, b| {
        let key = |s: &SummaryRow| s.diverged || s.final_loss.is_none();
        key(a).cmp(&key(b)).then_with(|| match (a.final_loss, b.final_loss) {
            (Some(x), Some(y)) if !key(a) => x.total_cmp(&y),
            _ => std::cmp::Ordering::Equal,
        })
    });
    Ok(SweepResult {
        keys: axes.iter().map(|a| a.key.clone()).collect(),
        records,
        summary,
    })
}
