//! Result tables: one row per (subject, label), one column per metric.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::evaluator::EvaluationResult;

pub const DEFAULT_DELIMITER: u8 = b';';

/// Shortest decimal that parses back to the same value; `NaN`, `inf`, `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn parse_value(s: &str) -> Result<f64> {
    match s.trim() {
        "NaN" | "nan" => Ok(f64::NAN),
        t => t.parse::<f64>().map_err(|_| Error::Writer(format!("{s:?} is not a number"))),
    }
}

/// A rectangular view of results: rows keyed by (subject, label) in
/// first-seen order, columns in the metric order of the first row.
pub struct ResultTable {
    pub metrics: Vec<String>,
    pub rows: Vec<(String, String, Vec<f64>)>,
}

impl ResultTable {
    pub fn from_results(results: &[EvaluationResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::Writer("no results to write".into()));
        }
        let mut rows: Vec<(String, String, Vec<(String, f64)>)> = Vec::new();
        for r in results {
            match rows.iter_mut().find(|(s, l, _)| *s == r.subject_id && *l == r.label) {
                Some(row) => row.2.push((r.metric.clone(), r.value)),
                None => rows.push((r.subject_id.clone(), r.label.clone(), vec![(r.metric.clone(), r.value)])),
            }
        }
        let metrics: Vec<String> = rows[0].2.iter().map(|(m, _)| m.clone()).collect();
        let mut out = Vec::with_capacity(rows.len());
        for (subject, label, values) in rows {
            let names: Vec<&String> = values.iter().map(|(m, _)| m).collect();
            if names.len() != metrics.len() || names.iter().zip(&metrics).any(|(a, b)| *a != b) {
                return Err(Error::Writer(format!(
                    "subject {subject} label {label} has metrics {names:?}, expected {metrics:?}"
                )));
            }
            out.push((subject, label, values.into_iter().map(|(_, v)| v).collect()));
        }
        Ok(ResultTable { metrics, rows: out })
    }

    pub fn into_results(self) -> Vec<EvaluationResult> {
        let mut out = Vec::new();
        for (subject, label, values) in self.rows {
            for (m, v) in self.metrics.iter().zip(values) {
                out.push(EvaluationResult {
                    subject_id: subject.clone(),
                    label: label.clone(),
                    metric: m.clone(),
                    value: v,
                });
            }
        }
        out
    }
}

pub fn format_csv(results: &[EvaluationResult], delimiter: u8) -> Result<String> {
    let table = ResultTable::from_results(results)?;
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Writer(e.to_string());
    let mut header = vec!["SUBJECT".to_string(), "LABEL".to_string()];
    header.extend(table.metrics.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (subject, label, values) in &table.rows {
        let mut rec = vec![subject.clone(), label.clone()];
        rec.extend(values.iter().map(|&v| format_value(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Writer(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Writer(e.to_string()))
}

pub fn write_csv(results: &[EvaluationResult], path: &Path, delimiter: u8) -> Result<()> {
    let text = format_csv(results, delimiter)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, delimiter: u8) -> Result<Vec<EvaluationResult>> {
    let mut r = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::Writer(e.to_string());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "SUBJECT" || header[1] != "LABEL" {
        return Err(Error::Writer(format!("expected header SUBJECT, LABEL, metrics..., got {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let values = rec.iter().skip(2).map(parse_value).collect::<Result<Vec<f64>>>()?;
        rows.push((rec[0].to_string(), rec[1].to_string(), values));
    }
    Ok(ResultTable {
        metrics: header[2..].to_vec(),
        rows,
    }
    .into_results())
}

pub fn read_csv(path: &Path, delimiter: u8) -> Result<Vec<EvaluationResult>> {
    parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?, delimiter)
}

/// Left-aligned text columns separated by two spaces.
pub(crate) fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn console_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        format_value(v)
    }
}

/// Aligned table with the same rows and columns as the CSV.
pub fn write_console(results: &[EvaluationResult]) -> Result<String> {
    let table = ResultTable::from_results(results)?;
    let mut header = vec!["SUBJECT".to_string(), "LABEL".to_string()];
    header.extend(table.metrics.iter().cloned());
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|(s, l, values)| {
            let mut row = vec![s.clone(), l.clone()];
            row.extend(values.iter().map(|&v| console_value(v)));
            row
        })
        .collect();
    Ok(render_table(&header, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, l: &str, m: &str, v: f64) -> EvaluationResult {
        EvaluationResult {
            subject_id: s.into(),
            label: l.into(),
            metric: m.into(),
            value: v,
        }
    }

    #[test]
    fn single_result_is_two_lines() {
        let text = format_csv(&[row("Subject_1", "GM", "DICE", 0.5)], b';').unwrap();
        assert_eq!(text, "SUBJECT;LABEL;DICE\nSubject_1;GM;0.5\n");
    }

    #[test]
    fn special_values_and_round_trip() {
        let rs = vec![
            row("a", "x", "DICE", f64::NAN),
            row("a", "x", "PSNR", f64::INFINITY),
            row("b", "x", "DICE", 0.1 + 0.2),
            row("b", "x", "PSNR", -3.0),
        ];
        let text = format_csv(&rs, b';').unwrap();
        assert_eq!(text, "SUBJECT;LABEL;DICE;PSNR\na;x;NaN;inf\nb;x;0.30000000000000004;-3\n");
        let back = parse_csv(&text, b';').unwrap();
        assert_eq!(format_csv(&back, b';').unwrap(), text);
        assert_eq!(format_csv(&back, b',').unwrap().lines().next(), Some("SUBJECT,LABEL,DICE,PSNR"));
    }

    #[test]
    fn heterogeneous_columns_are_rejected() {
        let rs = vec![row("a", "x", "DICE", 1.0), row("b", "x", "JACRD", 1.0)];
        assert!(matches!(format_csv(&rs, b';'), Err(Error::Writer(_))));
        assert!(format_csv(&[], b';').is_err());
    }

    #[test]
    fn console_aligns_columns() {
        let text = write_console(&[row("Subject_1", "GM", "DICE", 0.5), row("S2", "WhiteMatter", "DICE", 1.0)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "SUBJECT    LABEL        DICE");
        assert_eq!(lines[2], "S2         WhiteMatter  1.0000");
    }
}
