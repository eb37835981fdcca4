//! Pearson correlation, significance, and query ranking.

mod dist;

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use dist::{inc_beta, ln_gamma, student_t_critical, student_t_two_sided_p};

use crate::timeseries::{
    shifted_pairs, QueryPanel, ShiftSpec, ShiftedPair, WeeklySeries, MIN_PAIRS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("TooFewPairs: {0} pairs, need at least {MIN_PAIRS}")]
    TooFewPairs(usize),
    #[error("ZeroVariance: one coordinate is constant")]
    ZeroVariance,
    #[error("InvalidDof: {0} degrees of freedom")]
    InvalidDof(u32),
    #[error("NonFiniteStatistic: test statistic is not finite")]
    NonFiniteStatistic,
    #[error("InvalidAlpha: significance level {0} is outside (0, 1)")]
    InvalidAlpha(f64),
}

/// Significance level for the `p < alpha` gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceConfig {
    alpha: f64,
}

impl SignificanceConfig {
    pub fn new(alpha: f64) -> Result<Self, StatsError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(StatsError::InvalidAlpha(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

/// Why a correlation cell is reported as `NA`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NaReason {
    ZeroVariance,
    TooFewPairs,
    NotSignificant,
}

impl fmt::Display for NaReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NaReason::ZeroVariance => "ZeroVariance",
            NaReason::TooFewPairs => "TooFewPairs",
            NaReason::NotSignificant => "NotSignificant",
        })
    }
}

/// A correlation with its significance and NA status.
///
/// `r` and `p_value` are present whenever they can be computed, including
/// for `NotSignificant` cells; they are absent for zero-variance or too-short
/// inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub na_reason: Option<NaReason>,
}

impl CorrelationResult {
    pub fn is_na(&self) -> bool {
        self.na_reason.is_some()
    }

    /// The table value: `r` when the cell is not NA.
    pub fn value(&self) -> Option<f64> {
        if self.is_na() {
            None
        } else {
            self.r
        }
    }

    /// A significant result with the given values; used for pre-scored tables.
    pub fn scored(r: f64, p_value: f64, n: usize) -> Self {
        Self {
            r: Some(r),
            p_value: Some(p_value),
            n,
            na_reason: None,
        }
    }

    pub fn na(reason: NaReason, n: usize) -> Self {
        Self {
            r: None,
            p_value: None,
            n,
            na_reason: Some(reason),
        }
    }
}

/// Product-moment correlation of `pairs`.
///
/// Two passes: the means (refined by the mean residual), then centred sums.
pub fn pearson(pairs: &[(f64, f64)]) -> Result<(f64, usize), StatsError> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs(n));
    }
    let k = n as f64;
    let (sx, sy) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mut mx, mut my) = (sx / k, sy / k);
    let (rx, ry) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx), b + (y - my)));
    mx += rx / k;
    my += ry / k;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok((r.clamp(-1.0, 1.0), n))
}

/// Two-sided p-value of H0: ρ = 0 via t = r·sqrt((n−2)/(1−r²)).
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64, StatsError> {
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewPairs(n));
    }
    let one_minus = 1.0 - r * r;
    if one_minus <= 0.0 {
        return Ok(0.0);
    }
    let dof = (n - 2) as f64;
    let t = r * (dof / one_minus).sqrt();
    student_t_two_sided_p(t, (n - 2) as u32)
}

/// Correlation of arbitrary pairs with NA semantics; never fails.
pub fn correlation_from_pairs(pairs: &[(f64, f64)], cfg: &SignificanceConfig) -> CorrelationResult {
    let n = pairs.len();
    let r = match pearson(pairs) {
        Ok((r, _)) => r,
        Err(StatsError::ZeroVariance) => return CorrelationResult::na(NaReason::ZeroVariance, n),
        Err(_) => return CorrelationResult::na(NaReason::TooFewPairs, n),
    };
    // Finite r and n ≥ 3 cannot fail here.
    let p = correlation_p_value(r, n).unwrap_or(1.0);
    CorrelationResult {
        r: Some(r),
        p_value: Some(p),
        n,
        na_reason: (p >= cfg.alpha()).then_some(NaReason::NotSignificant),
    }
}

/// Correlates search series `x` with case series `y` under shift `s`.
pub fn correlate(
    x: &WeeklySeries,
    y: &WeeklySeries,
    s: ShiftSpec,
    cfg: &SignificanceConfig,
) -> CorrelationResult {
    let pairs: Vec<_> = shifted_pairs(x, y, s)
        .into_iter()
        .map(|p| (p.search, p.cases))
        .collect();
    correlation_from_pairs(&pairs, cfg)
}

/// Like [`correlate`] but restricted to pairs whose case week falls in `year`.
pub fn correlate_in_year(
    x: &WeeklySeries,
    y: &WeeklySeries,
    s: ShiftSpec,
    year: i32,
    cfg: &SignificanceConfig,
) -> CorrelationResult {
    let pairs: Vec<_> = shifted_pairs(x, y, s)
        .into_iter()
        .filter(|p: &ShiftedPair| p.case_week.year() == year)
        .map(|p| (p.search, p.cases))
        .collect();
    correlation_from_pairs(&pairs, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    pub label: String,
    pub result: CorrelationResult,
}

/// Orders pre-scored queries: non-NA by descending `r`, ties by label
/// code-point order, NA entries last (by label).
pub fn rank_results(mut scored: Vec<RankedQuery>) -> Vec<RankedQuery> {
    scored.sort_by(|a, b| match (a.result.value(), b.result.value()) {
        (Some(ra), Some(rb)) => rb
            .partial_cmp(&ra)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.label.cmp(&b.label),
    });
    scored
}

/// Scores every query in `panel` against `y` at shift `s` and ranks them.
pub fn rank_queries(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    cfg: &SignificanceConfig,
) -> Vec<RankedQuery> {
    let scored = panel
        .series()
        .iter()
        .map(|x| RankedQuery {
            label: x.label().to_string(),
            result: correlate(x, y, s, cfg),
        })
        .collect();
    rank_results(scored)
}
