//! Correlation tables, figure data and strength classification.
//!
//! Tables render as CSV with every number at two decimals and `NA` for
//! non-applicable cells, followed by footnote lines. A JSON sidecar carries
//! the full-precision value, p-value, pair count and NA reason of each cell.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{self, format_2dp, IngestError};
use crate::regress::{
    default_warmup, evaluate, full_period_nowcast, rolling_weekly_fit, NowcastMode, NowcastSeries,
    RegressError,
};
use crate::stats::{
    correlate, correlate_in_year, rank_queries, CorrelationResult, SignificanceConfig,
};
use crate::timeseries::{QueryPanel, ShiftSpec, WeeklySeries};

pub const NA_FOOTNOTE: &str = "NA: Not applicable";
pub const STRONG_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("OutOfRange: correlation {0} is not in [-1, 1]")]
    OutOfRange(f64),
    #[error("NoSeries: figure data needs at least one series")]
    NoSeries,
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    /// Shown value; `None` renders as `NA`.
    pub value: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    pub na_reason: Option<String>,
}

impl From<CorrelationResult> for Cell {
    fn from(c: CorrelationResult) -> Self {
        Cell {
            value: c.value(),
            p: c.p_value,
            n: c.n,
            na_reason: c.na_reason.map(|r| r.to_string()),
        }
    }
}

impl Cell {
    fn failed(err: &RegressError) -> Self {
        let text = err.to_string();
        let name = text.split(':').next().unwrap_or_default().to_string();
        Cell {
            value: None,
            p: None,
            n: 0,
            na_reason: Some(name),
        }
    }

    pub fn render(&self) -> String {
        self.value.map_or_else(|| "NA".to_string(), format_2dp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    /// Leading label columns (one or two, matching `Table::label_columns`).
    pub labels: Vec<String>,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub label_columns: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub footnotes: Vec<String>,
}

impl Table {
    fn new(label_columns: &[&str], columns: Vec<String>, alpha: f64, with_na_note: bool) -> Self {
        let mut footnotes = Vec::new();
        if with_na_note {
            footnotes.push(NA_FOOTNOTE.to_string());
        }
        footnotes.push(format!("p<{alpha}"));
        Table {
            label_columns: label_columns.iter().map(|s| s.to_string()).collect(),
            columns,
            rows: Vec::new(),
            footnotes,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self
            .label_columns
            .iter()
            .chain(&self.columns)
            .map(String::as_str)
            .collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for row in &self.rows {
            let fields: Vec<String> = row
                .labels
                .iter()
                .cloned()
                .chain(row.cells.iter().map(Cell::render))
                .collect();
            writeln!(out, "{}", fields.join(",")).unwrap();
        }
        for note in &self.footnotes {
            writeln!(out, "{note}").unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("table serializes");
        text.push('\n');
        text
    }

    pub fn row(&self, labels: &[&str]) -> Option<&Row> {
        self.rows.iter().find(|r| {
            r.labels
                .iter()
                .map(String::as_str)
                .eq(labels.iter().copied())
        })
    }
}

fn period_label(y: &WeeklySeries) -> String {
    format!("{}-{}", y.start().year(), y.end().year())
}

/// Builds a query × (overall, each year) table from already-scored cells.
pub fn correlation_table(
    years: &[i32],
    overall_label: &str,
    rows: Vec<(String, Vec<CorrelationResult>)>,
    alpha: f64,
) -> Table {
    let columns = std::iter::once(overall_label.to_string())
        .chain(years.iter().map(i32::to_string))
        .collect();
    let mut table = Table::new(&["query"], columns, alpha, true);
    table.rows = rows
        .into_iter()
        .map(|(label, cells)| Row {
            labels: vec![label],
            cells: cells.into_iter().map(Cell::from).collect(),
        })
        .collect();
    table
}

/// Per-query correlation over the whole period and within each year, rows in
/// rank order.
pub fn table_overall_annual(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    cfg: &SignificanceConfig,
) -> Table {
    let years = y.years();
    let rows = rank_queries(panel, y, s, cfg)
        .into_iter()
        .map(|q| {
            let x = panel
                .get(&q.label)
                .expect("ranked label comes from the panel");
            let mut cells = vec![q.result];
            cells.extend(years.iter().map(|&yr| correlate_in_year(x, y, s, yr, cfg)));
            (q.label, cells)
        })
        .collect();
    correlation_table(&years, &period_label(y), rows, cfg.alpha())
}

/// Period × shift rows, one column per query (columns in zero-shift rank
/// order). The first block covers the whole period, then one block per year.
pub fn table_shift_scan(
    panel: &QueryPanel,
    y: &WeeklySeries,
    shifts: &[ShiftSpec],
    cfg: &SignificanceConfig,
) -> Table {
    let order: Vec<String> = rank_queries(panel, y, ShiftSpec::ZERO, cfg)
        .into_iter()
        .map(|q| q.label)
        .collect();
    let mut table = Table::new(&["period", "shift"], order.clone(), cfg.alpha(), true);
    let series: Vec<&WeeklySeries> = order
        .iter()
        .map(|l| panel.get(l).expect("ranked label comes from the panel"))
        .collect();

    let mut blocks: Vec<(String, Option<i32>)> = vec![(period_label(y), None)];
    blocks.extend(y.years().into_iter().map(|yr| (yr.to_string(), Some(yr))));
    for (period, year) in blocks {
        for &s in shifts {
            let cells = series
                .iter()
                .map(|x| {
                    let c = match year {
                        None => correlate(x, y, s, cfg),
                        Some(yr) => correlate_in_year(x, y, s, yr, cfg),
                    };
                    Cell::from(c)
                })
                .collect();
            table.rows.push(Row {
                labels: vec![period.clone(), s.describe()],
                cells,
            });
        }
    }
    table
}

/// How a model is refit when scanning shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelScan {
    pub mode: NowcastMode,
    /// Rolling-mode warmup; `None` uses the default for the query count.
    pub warmup: Option<usize>,
    pub clamp_nonnegative: bool,
}

impl Default for ModelScan {
    fn default() -> Self {
        ModelScan {
            mode: NowcastMode::FullPeriod,
            warmup: None,
            clamp_nonnegative: false,
        }
    }
}

/// Estimates for the model on `panel` at shift `s`.
pub fn model_estimates(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    scan: &ModelScan,
    cfg: &SignificanceConfig,
) -> Result<NowcastSeries, RegressError> {
    match scan.mode {
        NowcastMode::FullPeriod => {
            full_period_nowcast(panel, y, s, cfg.alpha(), scan.clamp_nonnegative)
        }
        NowcastMode::RollingWeekly => {
            let warmup = scan
                .warmup
                .unwrap_or_else(|| default_warmup(panel.n_queries()));
            rolling_weekly_fit(panel, y, s, warmup, cfg.alpha(), scan.clamp_nonnegative)
        }
    }
}

/// One row: correlation of model estimates with cases, refit at every shift
/// using the selected queries.
pub fn table_model_by_shift<S: AsRef<str>>(
    panel: &QueryPanel,
    y: &WeeklySeries,
    selection: &[S],
    shifts: &[ShiftSpec],
    scan: &ModelScan,
    cfg: &SignificanceConfig,
) -> Result<Table, ReportError> {
    let sub = panel
        .subset(selection)
        .map_err(|e| ReportError::Ingest(IngestError::Series(e)))?;
    let columns = shifts.iter().map(|s| s.describe()).collect();
    let mut table = Table::new(&["model"], columns, cfg.alpha(), false);
    let cells = shifts
        .iter()
        .map(|&s| match model_estimates(&sub, y, s, scan, cfg) {
            Ok(est) => Cell::from(evaluate(&est, y, cfg).overall),
            Err(e) => Cell::failed(&e),
        })
        .collect();
    table.rows.push(Row {
        labels: vec![scan.mode.name().to_string()],
        cells,
    });
    Ok(table)
}

/// Long-format `week,label,value` CSV of the given series.
pub fn figure_data(series: &[WeeklySeries]) -> Result<String, ReportError> {
    if series.is_empty() {
        return Err(ReportError::NoSeries);
    }
    Ok(ingest::write_long_csv(series)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strength {
    Strong,
    NotStrong,
}

/// `Strong` iff `r` is strictly greater than 0.7.
pub fn classify_strength(r: f64) -> Result<Strength, ReportError> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(ReportError::OutOfRange(r));
    }
    Ok(if r > STRONG_THRESHOLD {
        Strength::Strong
    } else {
        Strength::NotStrong
    })
}
