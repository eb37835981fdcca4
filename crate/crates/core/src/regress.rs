//! The multi-query linear nowcast model
//! `y_t = β0 + β1·x_1t + … + βn·x_nt`, fit by least squares.
//!
//! Search week `t` is paired with case week `t + shift` (see
//! [`crate::timeseries`]); fitted values and estimates are indexed by the
//! case week they estimate.

use serde::Serialize;
use thiserror::Error;

use crate::stats::{
    correlation_from_pairs, student_t_critical, student_t_two_sided_p, CorrelationResult,
    SignificanceConfig, StatsError,
};
use crate::timeseries::{shifted_pairs, SeriesError, ShiftSpec, WeekStamp, WeeklySeries};

pub use crate::timeseries::QueryPanel;

/// Relative pivot size below which a design column counts as collinear.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("Underdetermined: {rows} fitted weeks for {queries} queries (need at least {})", queries + 2)]
    Underdetermined { rows: usize, queries: usize },
    #[error("SingularDesign: column `{column}` is collinear with earlier columns")]
    SingularDesign { column: String },
    #[error("MissingQuery: fitted query `{0}` is absent from the panel")]
    MissingQuery(String),
    #[error("InvalidWarmup: warmup {warmup} is below the minimum of {min} weeks")]
    InvalidWarmup { warmup: usize, min: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientStats {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// A fitted model with coefficient inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub intercept: CoefficientStats,
    pub coefficients: Vec<(String, CoefficientStats)>,
    pub r_squared: f64,
    pub residual_dof: usize,
    pub rss: f64,
    pub shift: ShiftSpec,
    pub alpha: f64,
    /// In-sample fitted values, indexed by case week.
    pub fitted: WeeklySeries,
}

impl ModelFit {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().map(|(l, _)| l.as_str())
    }

    fn betas(&self) -> Vec<f64> {
        self.coefficients.iter().map(|(_, c)| c.estimate).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NowcastMode {
    FullPeriod,
    RollingWeekly,
}

impl NowcastMode {
    pub fn name(self) -> &'static str {
        match self {
            NowcastMode::FullPeriod => "full",
            NowcastMode::RollingWeekly => "rolling",
        }
    }
}

/// Model estimates by case week; `None` marks weeks without an estimate
/// (rolling warmup, or no search data for that week).
#[derive(Debug, Clone, PartialEq)]
pub struct NowcastSeries {
    pub label: String,
    pub start: WeekStamp,
    pub values: Vec<Option<f64>>,
    pub mode: NowcastMode,
    pub clamp_nonnegative: bool,
}

impl NowcastSeries {
    pub fn iter(&self) -> impl Iterator<Item = (WeekStamp, Option<f64>)> + '_ {
        self.values.iter().enumerate().map(|(i, v)| {
            let week = self.start.offset(i as i64).expect("week in range");
            (week, *v)
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn estimate_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// The estimated weeks as a plain series, or `None` if there are none.
    ///
    /// Missing weeks are only ever a prefix or suffix of the span; anything
    /// else yields `None`.
    pub fn to_weekly_series(&self) -> Option<WeeklySeries> {
        let first = self.values.iter().position(Option::is_some)?;
        let last = self.values.iter().rposition(Option::is_some)?;
        let values: Option<Vec<f64>> = self.values[first..=last].iter().copied().collect();
        let start = self.start.offset(first as i64)?;
        WeeklySeries::new(self.label.clone(), start, values?).ok()
    }
}

/// Rows of the regression problem for one shift.
struct Design {
    case_weeks: Vec<WeekStamp>,
    /// Row-major, `rows × n_queries`.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn build_design(panel: &QueryPanel, y: &WeeklySeries, s: ShiftSpec) -> Design {
    let pairs = shifted_pairs(&panel.series()[0], y, s);
    let mut design = Design {
        case_weeks: Vec::with_capacity(pairs.len()),
        x: Vec::with_capacity(pairs.len()),
        y: Vec::with_capacity(pairs.len()),
    };
    for p in pairs {
        let t = panel.start().weeks_until(p.search_week) as usize;
        design.case_weeks.push(p.case_week);
        design
            .x
            .push(panel.series().iter().map(|q| q.values()[t]).collect());
        design.y.push(p.cases);
    }
    design
}

/// β0 + Σ βi·xi, always summed in column order so fits and predictions agree
/// bit for bit.
fn linear_predictor(intercept: f64, betas: &[f64], xs: &[f64]) -> f64 {
    betas
        .iter()
        .zip(xs)
        .fold(intercept, |acc, (b, x)| acc + b * x)
}

/// Householder QR of a column-major `rows × cols` matrix.
struct Qr {
    rows: usize,
    cols: usize,
    /// Householder vectors below the diagonal, R on and above it.
    a: Vec<Vec<f64>>,
    r_diag: Vec<f64>,
}

impl Qr {
    /// Factorizes, reporting the first column whose pivot falls under the
    /// relative tolerance.
    fn factor(mut a: Vec<Vec<f64>>, rows: usize) -> Result<Qr, usize> {
        let cols = a.len();
        let norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
        let mut r_diag = vec![0.0; cols];
        for k in 0..cols {
            let alpha = norm(&a[k][k..]);
            if alpha <= PIVOT_TOLERANCE * norms[k] || norms[k] == 0.0 {
                return Err(k);
            }
            let alpha = if a[k][k] > 0.0 { -alpha } else { alpha };
            // v = x − alpha·e1, stored in place and normalized so vᵀv = 2.
            a[k][k] -= alpha;
            let vnorm = norm(&a[k][k..]);
            let scale = std::f64::consts::SQRT_2 / vnorm;
            for v in &mut a[k][k..] {
                *v *= scale;
            }
            r_diag[k] = alpha;
            let (head, tail) = a.split_at_mut(k + 1);
            let v = &head[k][k..];
            for col in tail.iter_mut() {
                reflect(v, &mut col[k..]);
            }
        }
        Ok(Qr {
            rows,
            cols,
            a,
            r_diag,
        })
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.r_diag[i]
        } else {
            self.a[j][i]
        }
    }

    /// Least-squares solution for right-hand side `b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.rows);
        let mut qtb = b.to_vec();
        for k in 0..self.cols {
            reflect(&self.a[k][k..], &mut qtb[k..]);
        }
        let mut x = vec![0.0; self.cols];
        for i in (0..self.cols).rev() {
            let mut acc = qtb[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                acc -= self.r(i, j) * xj;
            }
            x[i] = acc / self.r_diag[i];
        }
        x
    }

    /// Diagonal of (XᵀX)⁻¹ = R⁻¹R⁻ᵀ.
    fn unscaled_variances(&self) -> Vec<f64> {
        let p = self.cols;
        // Columns of R⁻¹, by back substitution on unit vectors.
        let mut rinv = vec![vec![0.0; p]; p];
        for j in 0..p {
            rinv[j][j] = 1.0 / self.r_diag[j];
            for i in (0..j).rev() {
                let mut acc = 0.0;
                for k in i + 1..=j {
                    acc += self.r(i, k) * rinv[j][k];
                }
                rinv[j][i] = -acc / self.r_diag[i];
            }
        }
        (0..p)
            .map(|i| (i..p).map(|j| rinv[j][i] * rinv[j][i]).sum())
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// x ← (I − v vᵀ) x, for vᵀv = 2.
fn reflect(v: &[f64], x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= dot * vi;
    }
}

/// Intercept followed by the query coefficients.
fn solve_rows(
    x: &[Vec<f64>],
    y: &[f64],
    labels: &[String],
) -> Result<(Vec<f64>, Qr), RegressError> {
    let rows = y.len();
    let n = labels.len();
    if rows < n + 2 {
        return Err(RegressError::Underdetermined { rows, queries: n });
    }
    let mut cols = Vec::with_capacity(n + 1);
    cols.push(vec![1.0; rows]);
    for j in 0..n {
        cols.push(x.iter().map(|r| r[j]).collect());
    }
    let qr = Qr::factor(cols, rows).map_err(|k| RegressError::SingularDesign {
        column: if k == 0 {
            "intercept".to_string()
        } else {
            labels[k - 1].clone()
        },
    })?;
    Ok((qr.solve(y), qr))
}

fn coefficient_stats(
    estimate: f64,
    variance: f64,
    sigma2: f64,
    t_crit: f64,
    dof: u32,
) -> Result<CoefficientStats, RegressError> {
    let std_error = (variance * sigma2).max(0.0).sqrt();
    let p_value = if std_error == 0.0 {
        if estimate == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        student_t_two_sided_p(estimate / std_error, dof)?
    };
    Ok(CoefficientStats {
        estimate,
        std_error,
        ci_low: estimate - t_crit * std_error,
        ci_high: estimate + t_crit * std_error,
        p_value,
    })
}

/// Ordinary least squares over all weeks available under shift `s`.
///
/// The solve goes through a Householder QR of the design matrix; a pivot
/// smaller than [`PIVOT_TOLERANCE`] times its column norm is reported as
/// [`RegressError::SingularDesign`].
pub fn fit_ols(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    alpha: f64,
) -> Result<ModelFit, RegressError> {
    let cfg = SignificanceConfig::new(alpha)?;
    let labels: Vec<String> = panel.labels().map(String::from).collect();
    let design = build_design(panel, y, s);
    let (beta, qr) = solve_rows(&design.x, &design.y, &labels)?;

    let fitted: Vec<f64> = design
        .x
        .iter()
        .map(|row| linear_predictor(beta[0], &beta[1..], row))
        .collect();
    let rss: f64 = design
        .y
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    let m = design.y.len();
    let mean = design.y.iter().sum::<f64>() / m as f64;
    let tss: f64 = design.y.iter().map(|v| (v - mean).powi(2)).sum();
    // A constant target has nothing to explain.
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let residual_dof = m - labels.len() - 1;
    let sigma2 = rss / residual_dof as f64;
    let dof = residual_dof as u32;
    let t_crit = student_t_critical(cfg.alpha(), dof)?;
    let variances = qr.unscaled_variances();
    let mut stats = beta
        .iter()
        .zip(&variances)
        .map(|(&b, &v)| coefficient_stats(b, v, sigma2, t_crit, dof))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();

    let intercept = stats.next().expect("intercept column");
    let coefficients = labels.into_iter().zip(stats).collect();
    let fitted = WeeklySeries::new("fitted", design.case_weeks[0], fitted)?;
    Ok(ModelFit {
        intercept,
        coefficients,
        r_squared,
        residual_dof,
        rss,
        shift: s,
        alpha: cfg.alpha(),
        fitted,
    })
}

/// Evaluates the fitted model on `panel`.
///
/// The estimate for case week `t + shift` uses search week `t`. Negative
/// estimates are kept unless `clamp_nonnegative` is set.
pub fn predict(
    fit: &ModelFit,
    panel: &QueryPanel,
    clamp_nonnegative: bool,
) -> Result<NowcastSeries, RegressError> {
    let columns = fit
        .labels()
        .map(|l| {
            panel
                .get(l)
                .map(|s| s.values())
                .ok_or_else(|| RegressError::MissingQuery(l.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let betas = fit.betas();
    let mut row = vec![0.0; columns.len()];
    let values = (0..panel.weeks())
        .map(|t| {
            for (slot, col) in row.iter_mut().zip(&columns) {
                *slot = col[t];
            }
            let v = linear_predictor(fit.intercept.estimate, &betas, &row);
            Some(if clamp_nonnegative { v.max(0.0) } else { v })
        })
        .collect();
    let start =
        panel
            .start()
            .offset(i64::from(fit.shift.weeks()))
            .ok_or(SeriesError::InvalidWeek {
                year: panel.start().year(),
                week: panel.start().week(),
            })?;
    Ok(NowcastSeries {
        label: "estimate".to_string(),
        start,
        values,
        mode: NowcastMode::FullPeriod,
        clamp_nonnegative,
    })
}

/// Re-indexes estimates onto the week range of `y`.
fn onto_target(est: NowcastSeries, y: &WeeklySeries) -> NowcastSeries {
    let values = y
        .weeks()
        .map(|w| {
            let i = est.start.weeks_until(w);
            if (0..est.values.len() as i64).contains(&i) {
                est.values[i as usize]
            } else {
                None
            }
        })
        .collect();
    NowcastSeries {
        start: y.start(),
        values,
        ..est
    }
}

/// Minimum warmup for `n` queries.
pub fn min_warmup(n_queries: usize) -> usize {
    n_queries + 2
}

/// Default warmup for `n` queries: identifiability plus a little slack.
pub fn default_warmup(n_queries: usize) -> usize {
    n_queries + 4
}

/// Single fit over the whole period, evaluated over the weeks of `y`.
pub fn full_period_nowcast(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    alpha: f64,
    clamp_nonnegative: bool,
) -> Result<NowcastSeries, RegressError> {
    let fit = fit_ols(panel, y, s, alpha)?;
    let est = predict(&fit, panel, clamp_nonnegative)?;
    Ok(onto_target(est, y))
}

/// Weekly-updated estimates: the estimate for each fitted week comes from a
/// fit on all strictly earlier weeks (an expanding window).
///
/// The first `warmup` fitted weeks carry no estimate, nor does any week whose
/// earlier window is singular (for example, a query that is still all
/// zeros). An estimate for case week `u` (search week `u − shift`) depends
/// only on case data before `u` and search data up to `u − shift`.
pub fn rolling_weekly_fit(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    warmup: usize,
    alpha: f64,
    clamp_nonnegative: bool,
) -> Result<NowcastSeries, RegressError> {
    SignificanceConfig::new(alpha)?;
    let n = panel.n_queries();
    if warmup < min_warmup(n) {
        return Err(RegressError::InvalidWarmup {
            warmup,
            min: min_warmup(n),
        });
    }
    let labels: Vec<String> = panel.labels().map(String::from).collect();
    let design = build_design(panel, y, s);
    let rows = design.y.len();
    let mut values = vec![None; rows];
    for t in warmup..rows {
        let beta = match solve_rows(&design.x[..t], &design.y[..t], &labels) {
            Ok((beta, _)) => beta,
            Err(RegressError::SingularDesign { .. }) => continue,
            Err(e) => return Err(e),
        };
        let v = linear_predictor(beta[0], &beta[1..], &design.x[t]);
        values[t] = Some(if clamp_nonnegative { v.max(0.0) } else { v });
    }
    let start = design.case_weeks.first().copied().unwrap_or(y.start());
    let est = NowcastSeries {
        label: "estimate".to_string(),
        start,
        values,
        mode: NowcastMode::RollingWeekly,
        clamp_nonnegative,
    };
    Ok(onto_target(est, y))
}

/// Correlation of estimates with actual cases, overall and per ISO year.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub overall: CorrelationResult,
    pub per_year: Vec<(i32, CorrelationResult)>,
}

pub fn evaluate(
    estimates: &NowcastSeries,
    y: &WeeklySeries,
    cfg: &SignificanceConfig,
) -> Evaluation {
    let points: Vec<(i32, (f64, f64))> = estimates
        .iter()
        .filter_map(|(week, est)| Some((week.year(), (est?, y.get(week)?))))
        .collect();
    let all: Vec<_> = points.iter().map(|(_, p)| *p).collect();
    let per_year = y
        .years()
        .into_iter()
        .map(|year| {
            let pairs: Vec<_> = points
                .iter()
                .filter(|(y, _)| *y == year)
                .map(|(_, p)| *p)
                .collect();
            (year, correlation_from_pairs(&pairs, cfg))
        })
        .collect();
    Evaluation {
        overall: correlation_from_pairs(&all, cfg),
        per_year,
    }
}
