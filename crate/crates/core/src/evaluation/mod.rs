//! Per-subject, per-label evaluation and reporting.
//!
//! Results are flat `(subject, label, metric, value)` records. Writers pivot
//! them into one row per (subject, label) with one column per metric.

mod evaluator;
mod metric;
mod statistics;
mod writer;

pub use evaluator::{
    evaluate_continuous, evaluate_segmentation, EvaluationResult, LabelMap, NO_LABEL, SPACING_TOLERANCE,
};
pub use metric::{MetricParams, MetricSpec, Side, ABBREVIATIONS};
pub use statistics::{
    aggregate, format_statistics_csv, write_statistics_console, write_statistics_csv, Reducer, StatisticRow,
    BUILTIN_REDUCERS,
};
pub use writer::{
    format_csv, format_value, parse_csv, parse_value, read_csv, write_console, write_csv, ResultTable,
    DEFAULT_DELIMITER,
};
