//! Readers and writers for the weekly interchange files.
//!
//! All formats are UTF-8, comma-separated, unquoted, LF-terminated:
//!
//! * search panel: `week,<label1>,<label2>,...` then `YYYY-Www,<int>,...`
//!   rows with integer volumes in 0–100; omitted weeks are zero-filled.
//! * cases: `week,cases` then `YYYY-Www,<int>` rows; every week must be
//!   present.
//! * lexicon: `query,language,source` with language `en`/`ar` and source
//!   `prior`/`wikipedia`/`related`.
//! * long-format series (figure data): `week,label,value`.
//!
//! Field text is taken verbatim; nothing is trimmed or normalized.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::timeseries::{QueryPanel, SeriesError, WeekStamp, WeeklySeries};

pub const TRENDS_HEADER_FIRST: &str = "week";
pub const CASES_HEADER: &str = "week,cases";
pub const LEXICON_HEADER: &str = "query,language,source";
pub const LONG_HEADER: &str = "week,label,value";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("InvalidUtf8: input is not valid UTF-8 (byte {0})")]
    InvalidUtf8(usize),
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("NoRows: file has a header but no data rows")]
    NoRows,
    #[error("NonContiguousAfterFill: line {line}: week {week} does not follow {previous}")]
    NonContiguousAfterFill {
        line: usize,
        week: WeekStamp,
        previous: WeekStamp,
    },
    #[error("ValueOutOfRange: line {line}: {value} is outside 0-100")]
    ValueOutOfRange { line: usize, value: i64 },
    #[error("GapInCases: line {line}: expected {expected}, found {found}")]
    GapInCases {
        line: usize,
        expected: WeekStamp,
        found: WeekStamp,
    },
    #[error("NegativeCount: line {line}: {value}")]
    NegativeCount { line: usize, value: i64 },
    #[error("DuplicateEntry: line {line}: `{query}` ({language}) already listed")]
    DuplicateEntry {
        line: usize,
        query: String,
        language: &'static str,
    },
    #[error("EmptyQuery: line {line}")]
    EmptyQuery { line: usize },
    #[error("NotInteger: `{label}` week {week} holds {value}, which cannot be written as an integer count")]
    NotInteger {
        label: String,
        week: WeekStamp,
        value: f64,
    },
    #[error("InvalidLabel: `{0}` cannot be used as a column or series label")]
    InvalidLabel(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

type NumberedLines<'a> = (&'a str, Vec<(usize, &'a str)>);

/// Splits into header and numbered data lines, enforcing LF-only endings.
/// Line numbers are 1-based and count the header.
fn lines(bytes: &[u8]) -> Result<NumberedLines<'_>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::InvalidUtf8(e.valid_up_to()))?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut it = body.split('\n');
    let header = it.next().unwrap_or_default();
    if header.contains('\r') {
        return Err(IngestError::MalformedHeader(
            "carriage return in header".into(),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in it.enumerate() {
        let n = i + 2;
        if line.contains('\r') {
            return Err(malformed(n, "carriage return (LF endings required)"));
        }
        if line.is_empty() {
            return Err(malformed(n, "blank line"));
        }
        rows.push((n, line));
    }
    Ok((header, rows))
}

fn parse_week(line: usize, field: &str) -> Result<WeekStamp, IngestError> {
    field
        .parse()
        .map_err(|e: SeriesError| malformed(line, e.to_string()))
}

/// Strict decimal integer: optional leading `-`, then ASCII digits.
fn parse_int(line: usize, field: &str) -> Result<i64, IngestError> {
    let digits = field.strip_prefix('-').unwrap_or(field);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(line, format!("`{field}` is not an integer")));
    }
    field
        .parse()
        .map_err(|_| malformed(line, format!("`{field}` does not fit in 64 bits")))
}

fn valid_label(label: &str) -> bool {
    !label.is_empty() && !label.contains([',', '\n', '\r'])
}

/// Parses a search-volume panel, zero-filling omitted weeks.
pub fn parse_trends_csv(bytes: &[u8]) -> Result<QueryPanel, IngestError> {
    let (header, rows) = lines(bytes)?;
    let mut fields = header.split(',');
    if fields.next() != Some(TRENDS_HEADER_FIRST) {
        return Err(IngestError::MalformedHeader(format!(
            "first column must be `{TRENDS_HEADER_FIRST}`"
        )));
    }
    let labels: Vec<&str> = fields.collect();
    if labels.is_empty() {
        return Err(IngestError::MalformedHeader("no query columns".into()));
    }
    let mut seen = HashSet::new();
    for l in &labels {
        if l.is_empty() {
            return Err(IngestError::MalformedHeader("empty query label".into()));
        }
        if !seen.insert(*l) {
            return Err(IngestError::MalformedHeader(format!(
                "duplicate query label `{l}`"
            )));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut first: Option<WeekStamp> = None;
    let mut previous: Option<WeekStamp> = None;
    for (line, row) in rows {
        let mut fields = row.split(',');
        let week = parse_week(line, fields.next().unwrap_or_default())?;
        let values: Vec<&str> = fields.collect();
        if values.len() != labels.len() {
            return Err(malformed(
                line,
                format!("expected {} values, found {}", labels.len(), values.len()),
            ));
        }
        if let Some(prev) = previous {
            if week <= prev {
                return Err(IngestError::NonContiguousAfterFill {
                    line,
                    week,
                    previous: prev,
                });
            }
            let gap = prev.weeks_until(week) - 1;
            for col in &mut columns {
                col.extend(std::iter::repeat_n(0.0, gap as usize));
            }
        } else {
            first = Some(week);
        }
        for (col, field) in columns.iter_mut().zip(values) {
            let v = parse_int(line, field)?;
            if !(0..=100).contains(&v) {
                return Err(IngestError::ValueOutOfRange { line, value: v });
            }
            col.push(v as f64);
        }
        previous = Some(week);
    }
    let start = first.ok_or(IngestError::NoRows)?;
    let series = labels
        .iter()
        .zip(columns)
        .map(|(l, v)| WeeklySeries::new(*l, start, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QueryPanel::new(series)?)
}

/// Parses a complete weekly case series.
pub fn parse_cases_csv(bytes: &[u8]) -> Result<WeeklySeries, IngestError> {
    let (header, rows) = lines(bytes)?;
    if header != CASES_HEADER {
        return Err(IngestError::MalformedHeader(format!(
            "expected `{CASES_HEADER}`"
        )));
    }
    let mut start = None;
    let mut values = Vec::with_capacity(rows.len());
    let mut expected: Option<WeekStamp> = None;
    for (line, row) in rows {
        let (week, count) = row
            .split_once(',')
            .ok_or_else(|| malformed(line, "expected `week,cases`"))?;
        let week = parse_week(line, week)?;
        let count = parse_int(line, count)?;
        if let Some(exp) = expected {
            if week != exp {
                return Err(IngestError::GapInCases {
                    line,
                    expected: exp,
                    found: week,
                });
            }
        } else {
            start = Some(week);
        }
        if count < 0 {
            return Err(IngestError::NegativeCount { line, value: count });
        }
        values.push(count as f64);
        expected = week.next();
    }
    let start = start.ok_or(IngestError::NoRows)?;
    Ok(WeeklySeries::new("cases", start, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    English,
    Arabic,
}

impl Language {
    pub fn tag(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Arabic => "ar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuerySource {
    PriorResearch,
    Wikipedia,
    RelatedSearches,
}

impl QuerySource {
    pub fn tag(self) -> &'static str {
        match self {
            QuerySource::PriorResearch => "prior",
            QuerySource::Wikipedia => "wikipedia",
            QuerySource::RelatedSearches => "related",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub query: String,
    pub language: Language,
    pub source: QuerySource,
}

/// The candidate search queries, already translated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryLexicon {
    pub entries: Vec<LexiconEntry>,
}

impl QueryLexicon {
    pub fn count(&self, language: Language) -> usize {
        self.entries
            .iter()
            .filter(|e| e.language == language)
            .count()
    }
}

pub fn load_lexicon(bytes: &[u8]) -> Result<QueryLexicon, IngestError> {
    let (header, rows) = lines(bytes)?;
    if header != LEXICON_HEADER {
        return Err(IngestError::MalformedHeader(format!(
            "expected `{LEXICON_HEADER}`"
        )));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let [query, language, source] = fields[..] else {
            return Err(malformed(
                line,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        if query.is_empty() {
            return Err(IngestError::EmptyQuery { line });
        }
        let language = match language {
            "en" => Language::English,
            "ar" => Language::Arabic,
            other => return Err(malformed(line, format!("unknown language `{other}`"))),
        };
        let source = match source {
            "prior" => QuerySource::PriorResearch,
            "wikipedia" => QuerySource::Wikipedia,
            "related" => QuerySource::RelatedSearches,
            other => return Err(malformed(line, format!("unknown source `{other}`"))),
        };
        if !seen.insert((query, language)) {
            return Err(IngestError::DuplicateEntry {
                line,
                query: query.to_string(),
                language: language.tag(),
            });
        }
        entries.push(LexiconEntry {
            query: query.to_string(),
            language,
            source,
        });
    }
    Ok(QueryLexicon { entries })
}

fn as_count(series: &WeeklySeries, week: WeekStamp, value: f64) -> Result<i64, IngestError> {
    if value.fract() != 0.0 || value.abs() > 9.0e15 {
        return Err(IngestError::NotInteger {
            label: series.label().to_string(),
            week,
            value,
        });
    }
    Ok(value as i64)
}

/// Writes a panel in the search-volume format. Values must be integers in
/// 0–100.
pub fn write_trends_csv(panel: &QueryPanel) -> Result<String, IngestError> {
    let mut out = String::from(TRENDS_HEADER_FIRST);
    for l in panel.labels() {
        if !valid_label(l) {
            return Err(IngestError::InvalidLabel(l.to_string()));
        }
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for t in 0..panel.weeks() {
        let week = panel.series()[0].week_at(t);
        write!(out, "{week}").unwrap();
        for s in panel.series() {
            let v = as_count(s, week, s.values()[t])?;
            if !(0..=100).contains(&v) {
                return Err(IngestError::ValueOutOfRange {
                    line: t + 2,
                    value: v,
                });
            }
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a case series. Values must be non-negative integers.
pub fn write_cases_csv(cases: &WeeklySeries) -> Result<String, IngestError> {
    let mut out = format!("{CASES_HEADER}\n");
    for (i, (week, v)) in cases.iter().enumerate() {
        let v = as_count(cases, week, v)?;
        if v < 0 {
            return Err(IngestError::NegativeCount {
                line: i + 2,
                value: v,
            });
        }
        writeln!(out, "{week},{v}").unwrap();
    }
    Ok(out)
}

pub fn write_lexicon(lexicon: &QueryLexicon) -> Result<String, IngestError> {
    let mut out = format!("{LEXICON_HEADER}\n");
    for e in &lexicon.entries {
        if !valid_label(&e.query) {
            return Err(IngestError::InvalidLabel(e.query.clone()));
        }
        writeln!(out, "{},{},{}", e.query, e.language.tag(), e.source.tag()).unwrap();
    }
    Ok(out)
}

/// Formats a value with exactly two decimals, never printing `-0.00`.
pub fn format_2dp(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Long-format `week,label,value` rows, sorted by (week, label), values to two
/// decimals.
pub fn write_long_csv(series: &[WeeklySeries]) -> Result<String, IngestError> {
    let mut labels = HashSet::new();
    for s in series {
        if !valid_label(s.label()) || !labels.insert(s.label()) {
            return Err(IngestError::InvalidLabel(s.label().to_string()));
        }
    }
    let mut rows: Vec<(WeekStamp, &str, f64)> = series
        .iter()
        .flat_map(|s| s.iter().map(move |(w, v)| (w, s.label(), v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let mut out = format!("{LONG_HEADER}\n");
    for (week, label, v) in rows {
        writeln!(out, "{week},{label},{}", format_2dp(v)).unwrap();
    }
    Ok(out)
}

/// Reads long-format rows back into one series per label (sorted by label).
pub fn parse_long_csv(bytes: &[u8]) -> Result<Vec<WeeklySeries>, IngestError> {
    let (header, rows) = lines(bytes)?;
    if header != LONG_HEADER {
        return Err(IngestError::MalformedHeader(format!(
            "expected `{LONG_HEADER}`"
        )));
    }
    let mut by_label: BTreeMap<&str, Vec<(usize, WeekStamp, f64)>> = BTreeMap::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let [week, label, value] = fields[..] else {
            return Err(malformed(
                line,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        };
        let week = parse_week(line, week)?;
        if label.is_empty() {
            return Err(malformed(line, "empty label"));
        }
        let is_number = !value.is_empty()
            && value
                .bytes()
                .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-');
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| is_number && v.is_finite())
            .ok_or_else(|| malformed(line, format!("`{value}` is not a number")))?;
        by_label.entry(label).or_default().push((line, week, v));
    }
    if by_label.is_empty() {
        return Err(IngestError::NoRows);
    }
    by_label
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by_key(|p| p.1);
            for w in points.windows(2) {
                if w[0].1.next() != Some(w[1].1) {
                    return Err(IngestError::NonContiguousAfterFill {
                        line: w[1].0,
                        week: w[1].1,
                        previous: w[0].1,
                    });
                }
            }
            let start = points[0].1;
            let values = points.into_iter().map(|p| p.2).collect();
            Ok(WeeklySeries::new(label, start, values)?)
        })
        .collect()
}
