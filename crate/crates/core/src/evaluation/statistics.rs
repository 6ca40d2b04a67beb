//! Summary statistics of results over subjects.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evaluation::evaluator::EvaluationResult;
use crate::evaluation::writer::{format_value, render_table};
use crate::metrics::percentile;

type ReduceFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A named list-to-scalar function.
#[derive(Clone)]
pub struct Reducer {
    name: String,
    f: Arc<ReduceFn>,
}

impl fmt::Debug for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Reducer").field(&self.name).finish()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub const BUILTIN_REDUCERS: &[&str] = &["MEAN", "STD", "MEDIAN", "MIN", "MAX", "P25", "P75"];

impl Reducer {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Reducer {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn builtin(name: &str) -> Option<Reducer> {
        let name = name.trim().to_ascii_uppercase();
        let r = match name.as_str() {
            "MEAN" => Reducer::new(name, mean),
            "STD" => Reducer::new(name, std_dev),
            "MEDIAN" => Reducer::new(name, |v| percentile(v, 50.0)),
            "MIN" => Reducer::new(name, |v| v.iter().copied().fold(f64::INFINITY, f64::min)),
            "MAX" => Reducer::new(name, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            "P25" => Reducer::new(name, |v| percentile(v, 25.0)),
            "P75" => Reducer::new(name, |v| percentile(v, 75.0)),
            _ => return None,
        };
        Some(r)
    }

    /// Comma-separated built-in names.
    pub fn parse_list(list: &str) -> Result<Vec<Reducer>> {
        let out = list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                Reducer::builtin(t).ok_or_else(|| {
                    Error::Config(format!("unknown statistic {t:?}; valid: {}", BUILTIN_REDUCERS.join(", ")))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if out.is_empty() {
            return Err(Error::Config("no statistics requested".into()));
        }
        Ok(out)
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        (self.f)(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticRow {
    pub label: String,
    pub metric: String,
    pub statistic: String,
    pub value: f64,
    /// NaN values left out of the reduction.
    pub excluded: usize,
}

/// One row per (label, metric, reducer) over all subjects, in first-seen
/// label and metric order. NaN values are excluded and counted.
pub fn aggregate(results: &[EvaluationResult], reducers: &[Reducer]) -> Vec<StatisticRow> {
    let mut groups: Vec<((&str, &str), Vec<f64>)> = Vec::new();
    for r in results {
        let key = (r.label.as_str(), r.metric.as_str());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((key, vec![r.value])),
        }
    }
    let mut out = Vec::with_capacity(groups.len() * reducers.len());
    for ((label, metric), values) in groups {
        let kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        let excluded = values.len() - kept.len();
        for r in reducers {
            let value = if kept.is_empty() {
                log::warn!("{label} {metric}: no values left for {} after excluding NaN", r.name);
                f64::NAN
            } else {
                r.apply(&kept)
            };
            out.push(StatisticRow {
                label: label.to_string(),
                metric: metric.to_string(),
                statistic: r.name.clone(),
                value,
                excluded,
            });
        }
    }
    out
}

const STAT_HEADER: [&str; 5] = ["LABEL", "METRIC", "STATISTIC", "VALUE", "EXCLUDED"];

pub fn format_statistics_csv(rows: &[StatisticRow], delimiter: u8) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Writer("no statistics to write".into()));
    }
    let csv_err = |e: csv::Error| Error::Writer(e.to_string());
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    w.write_record(STAT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.metric.clone(),
            r.statistic.clone(),
            format_value(r.value),
            r.excluded.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Writer(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Writer(e.to_string()))
}

pub fn write_statistics_csv(rows: &[StatisticRow], path: &Path, delimiter: u8) -> Result<()> {
    let text = format_statistics_csv(rows, delimiter)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_statistics_console(rows: &[StatisticRow]) -> String {
    let header: Vec<String> = STAT_HEADER.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let value = if r.value.is_finite() { format!("{:.4}", r.value) } else { format_value(r.value) };
            vec![r.label.clone(), r.metric.clone(), r.statistic.clone(), value, r.excluded.to_string()]
        })
        .collect();
    render_table(&header, &body)
}
