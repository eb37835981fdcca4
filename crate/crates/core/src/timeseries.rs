//! Date-anchored weekly series.
//!
//! Weeks are ISO-8601 (year, week) pairs. A [`WeeklySeries`] is a contiguous
//! run of weeks starting at `start`; gaps must be resolved before a series is
//! built. Shifts follow the surveillance vocabulary used throughout the crate:
//!
//! * `+k` (**lagging**): case data is moved behind the search data, so search
//!   week `t` is paired with case week `t + k`. Searches lead cases.
//! * `-k` (**preceding**): search week `t` is paired with case week `t - k`.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use thiserror::Error;

/// Largest shift accepted by [`ShiftSpec::new`].
pub const DEFAULT_MAX_SHIFT: i32 = 2;

/// Minimum number of (search, case) pairs a shifted comparison needs.
pub const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("InvalidWeek: {year}-W{week:02} is not an ISO week")]
    InvalidWeek { year: i32, week: u32 },
    #[error("MalformedWeek: `{0}` is not of the form YYYY-Www")]
    MalformedWeek(String),
    #[error("EmptySeries: a weekly series needs at least one value")]
    EmptySeries,
    #[error("NonFinite: value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("EmptyOverlap: series `{a}` and `{b}` share no weeks")]
    EmptyOverlap { a: String, b: String },
    #[error("InsufficientOverlap: only {pairs} pairs remain after shifting (need {MIN_PAIRS})")]
    InsufficientOverlap { pairs: usize },
    #[error("EmptySlice: series `{label}` has no weeks in {year}")]
    EmptySlice { label: String, year: i32 },
    #[error("NegativeValue: value {value} at index {index} is negative")]
    NegativeValue { index: usize, value: f64 },
    #[error("ShiftOutOfRange: shift {weeks} exceeds the maximum of {max} weeks")]
    ShiftOutOfRange { weeks: i32, max: i32 },
    #[error("EmptyPanel: a query panel needs at least one query")]
    EmptyPanel,
    #[error("DuplicateLabel: query `{0}` appears more than once")]
    DuplicateLabel(String),
    #[error("MisalignedPanel: query `{0}` does not share the panel's week range")]
    MisalignedPanel(String),
}

/// An ISO-8601 week. Ordering is lexicographic on (year, week).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekStamp {
    year: i32,
    week: u32,
}

impl WeekStamp {
    pub fn new(year: i32, week: u32) -> Result<Self, SeriesError> {
        if !(1..=9999).contains(&year) || week == 0 || week > weeks_in_year(year) {
            return Err(SeriesError::InvalidWeek { year, week });
        }
        Ok(Self { year, week })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn week(self) -> u32 {
        self.week
    }

    /// Monday of this ISO week.
    pub fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon).expect("validated ISO week")
    }

    /// The week `n` weeks after this one (`n` may be negative).
    ///
    /// Returns `None` when the result falls outside years 1..=9999.
    pub fn offset(self, n: i64) -> Option<Self> {
        let date = self
            .monday()
            .checked_add_signed(chrono::Duration::try_weeks(n)?)?;
        let iso = date.iso_week();
        Self::new(iso.year(), iso.week()).ok()
    }

    /// Signed number of weeks from `self` to `other`.
    pub fn weeks_until(self, other: Self) -> i64 {
        (other.monday() - self.monday()).num_days() / 7
    }

    pub fn next(self) -> Option<Self> {
        self.offset(1)
    }
}

/// Number of ISO weeks (52 or 53) in `year`.
pub fn weeks_in_year(year: i32) -> u32 {
    // Dec 28 always falls in the last ISO week of its year.
    NaiveDate::from_ymd_opt(year, 12, 28)
        .map(|d| d.iso_week().week())
        .unwrap_or(0)
}

impl fmt::Display for WeekStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-W{:02}", self.year, self.week)
    }
}

impl serde::Serialize for WeekStamp {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for WeekStamp {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for WeekStamp {
    type Err = SeriesError;

    /// Parses the strict `YYYY-Www` form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        let malformed = || SeriesError::MalformedWeek(s.to_string());
        if bytes.len() != 8 || bytes[4] != b'-' || bytes[5] != b'W' {
            return Err(malformed());
        }
        let digits = |r: std::ops::Range<usize>| -> Option<u32> {
            let part = &bytes[r];
            if !part.iter().all(u8::is_ascii_digit) {
                return None;
            }
            part.iter()
                .try_fold(0u32, |acc, b| Some(acc * 10 + u32::from(b - b'0')))
        };
        let year = digits(0..4).ok_or_else(malformed)?;
        let week = digits(6..8).ok_or_else(malformed)?;
        WeekStamp::new(year as i32, week)
    }
}

/// A contiguous run of weekly values with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklySeries {
    start: WeekStamp,
    values: Vec<f64>,
    label: String,
}

impl WeeklySeries {
    pub fn new(
        label: impl Into<String>,
        start: WeekStamp,
        values: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::EmptySeries);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite { index });
        }
        if start.offset(values.len() as i64 - 1).is_none() {
            return Err(SeriesError::InvalidWeek {
                year: 9999,
                week: 53,
            });
        }
        Ok(Self {
            start,
            values,
            label: label.into(),
        })
    }

    pub fn start(&self) -> WeekStamp {
        self.start
    }

    /// Last week covered by the series.
    pub fn end(&self) -> WeekStamp {
        self.week_at(self.values.len() - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn week_at(&self, index: usize) -> WeekStamp {
        self.start
            .offset(index as i64)
            .expect("index validated at construction")
    }

    /// Position of `week` in the series, if covered.
    pub fn index_of(&self, week: WeekStamp) -> Option<usize> {
        let idx = self.start.weeks_until(week);
        (0..self.values.len() as i64)
            .contains(&idx)
            .then_some(idx as usize)
    }

    pub fn get(&self, week: WeekStamp) -> Option<f64> {
        self.index_of(week).map(|i| self.values[i])
    }

    pub fn weeks(&self) -> impl Iterator<Item = WeekStamp> + '_ {
        (0..self.values.len()).map(|i| self.week_at(i))
    }

    /// Iterates `(week, value)` in order.
    pub fn iter(&self) -> impl Iterator<Item = (WeekStamp, f64)> + '_ {
        self.weeks().zip(self.values.iter().copied())
    }

    /// Distinct ISO years covered, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = (self.start.year()..=self.end().year()).collect();
        years.retain(|&y| self.weeks().any(|w| w.year() == y));
        years
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Sub-series of `len` weeks starting at position `from`.
    pub(crate) fn window(&self, from: usize, len: usize) -> WeeklySeries {
        WeeklySeries {
            start: self.week_at(from),
            values: self.values[from..from + len].to_vec(),
            label: self.label.clone(),
        }
    }
}

/// Signed week offset between search data and case data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ShiftSpec {
    weeks: i32,
}

impl ShiftSpec {
    pub const ZERO: ShiftSpec = ShiftSpec { weeks: 0 };

    /// A shift within the default ±2-week range.
    pub fn new(weeks: i32) -> Result<Self, SeriesError> {
        Self::with_max(weeks, DEFAULT_MAX_SHIFT)
    }

    pub fn with_max(weeks: i32, max: i32) -> Result<Self, SeriesError> {
        if weeks.unsigned_abs() > max.unsigned_abs() {
            return Err(SeriesError::ShiftOutOfRange { weeks, max });
        }
        Ok(Self { weeks })
    }

    pub fn weeks(self) -> i32 {
        self.weeks
    }

    /// The scan used by the surveillance tables: −2, −1, 0, +1, +2.
    pub fn default_scan() -> Vec<ShiftSpec> {
        (-DEFAULT_MAX_SHIFT..=DEFAULT_MAX_SHIFT)
            .map(|weeks| ShiftSpec { weeks })
            .collect()
    }

    /// Table row label: `2-week preceding`, `0-week lagging`, `1-week lagging`.
    pub fn describe(self) -> String {
        if self.weeks < 0 {
            format!("{}-week preceding", -self.weeks)
        } else {
            format!("{}-week lagging", self.weeks)
        }
    }
}

impl fmt::Display for ShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.weeks)
    }
}

/// One (search, case) observation produced by a shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedPair {
    pub search_week: WeekStamp,
    pub case_week: WeekStamp,
    pub search: f64,
    pub cases: f64,
}

/// All pairs `(x_t, y_{t+k})` for which both weeks exist, in search-week order.
///
/// Unlike [`shift_pair`] this never fails; it may return fewer than
/// [`MIN_PAIRS`] pairs.
pub fn shifted_pairs(x: &WeeklySeries, y: &WeeklySeries, s: ShiftSpec) -> Vec<ShiftedPair> {
    // Index range of x whose shifted case week lands inside y.
    let k = i64::from(s.weeks());
    let lo = x.start().weeks_until(y.start()) - k;
    let hi = x.start().weeks_until(y.end()) - k;
    let lo = lo.max(0);
    let hi = hi.min(x.len() as i64 - 1);
    if lo > hi {
        return Vec::new();
    }
    let y_offset = y.start().weeks_until(x.start()) + k;
    (lo..=hi)
        .map(|i| {
            let yi = (i + y_offset) as usize;
            let i = i as usize;
            ShiftedPair {
                search_week: x.week_at(i),
                case_week: y.week_at(yi),
                search: x.values[i],
                cases: y.values[yi],
            }
        })
        .collect()
}

/// Truncates both series to their common week range.
pub fn align(
    a: &WeeklySeries,
    b: &WeeklySeries,
) -> Result<(WeeklySeries, WeeklySeries), SeriesError> {
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    if start > end {
        return Err(SeriesError::EmptyOverlap {
            a: a.label().to_string(),
            b: b.label().to_string(),
        });
    }
    let len = start.weeks_until(end) as usize + 1;
    let ai = a.index_of(start).expect("start inside a");
    let bi = b.index_of(start).expect("start inside b");
    Ok((a.window(ai, len), b.window(bi, len)))
}

/// Pairs search week `t` with case week `t + s` (see module docs for the sign).
pub fn shift_pair(
    x: &WeeklySeries,
    y: &WeeklySeries,
    s: ShiftSpec,
) -> Result<Vec<(f64, f64)>, SeriesError> {
    let pairs = shifted_pairs(x, y, s);
    if pairs.len() < MIN_PAIRS {
        return Err(SeriesError::InsufficientOverlap { pairs: pairs.len() });
    }
    Ok(pairs.into_iter().map(|p| (p.search, p.cases)).collect())
}

/// The weeks of `s` that fall in ISO year `year`.
pub fn slice_year(s: &WeeklySeries, year: i32) -> Result<WeeklySeries, SeriesError> {
    let mut idx = s.weeks().enumerate().filter(|(_, w)| w.year() == year);
    let Some((first, _)) = idx.next() else {
        return Err(SeriesError::EmptySlice {
            label: s.label().to_string(),
            year,
        });
    };
    let len = 1 + idx.count();
    Ok(s.window(first, len))
}

/// Rescales so the maximum maps to 100, rounding half up to integers.
///
/// An all-zero series is returned unchanged.
pub fn scale_0_100(s: &WeeklySeries) -> Result<WeeklySeries, SeriesError> {
    if let Some((index, &value)) = s.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(SeriesError::NegativeValue { index, value });
    }
    let max = s.values().iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return Ok(s.clone());
    }
    let values = s
        .values()
        .iter()
        .map(|v| (100.0 * v / max + 0.5).floor())
        .collect();
    Ok(WeeklySeries {
        start: s.start,
        values,
        label: s.label.clone(),
    })
}

/// Named, aligned search-volume series: the regressors of the nowcast model.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPanel {
    series: Vec<WeeklySeries>,
}

impl QueryPanel {
    /// Builds a panel; every series must share one start week and length and
    /// carry a distinct label.
    pub fn new(series: Vec<WeeklySeries>) -> Result<Self, SeriesError> {
        let first = series.first().ok_or(SeriesError::EmptyPanel)?;
        let (start, len) = (first.start(), first.len());
        for (i, s) in series.iter().enumerate() {
            if series[..i].iter().any(|o| o.label() == s.label()) {
                return Err(SeriesError::DuplicateLabel(s.label().to_string()));
            }
            if s.start() != start || s.len() != len {
                return Err(SeriesError::MisalignedPanel(s.label().to_string()));
            }
        }
        Ok(Self { series })
    }

    pub fn start(&self) -> WeekStamp {
        self.series[0].start()
    }

    pub fn end(&self) -> WeekStamp {
        self.series[0].end()
    }

    /// Number of weeks.
    pub fn weeks(&self) -> usize {
        self.series[0].len()
    }

    /// Number of queries.
    pub fn n_queries(&self) -> usize {
        self.series.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.label())
    }

    pub fn series(&self) -> &[WeeklySeries] {
        &self.series
    }

    pub fn get(&self, label: &str) -> Option<&WeeklySeries> {
        self.series.iter().find(|s| s.label() == label)
    }

    /// Panel restricted to `labels`, in the given order.
    pub fn subset<S: AsRef<str>>(&self, labels: &[S]) -> Result<QueryPanel, SeriesError> {
        let series = labels
            .iter()
            .map(|l| {
                self.get(l.as_ref())
                    .cloned()
                    .ok_or_else(|| SeriesError::MisalignedPanel(l.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        QueryPanel::new(series)
    }
}
