//! Greedy forward selection of a query subset, and the top-N prefix sweep.
//!
//! The objective throughout is the Pearson correlation between the in-sample
//! (full-period) model estimates and the case series.

use serde::Serialize;
use thiserror::Error;

use crate::regress::{fit_ols, RegressError};
use crate::stats::{pearson, rank_queries, RankedQuery, SignificanceConfig};
use crate::timeseries::{QueryPanel, ShiftSpec, WeeklySeries};

/// Minimum objective gain for a candidate to be added.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("NoUsableQuery: no query has a significant positive correlation at any shift")]
    NoUsableQuery,
    #[error("EmptyShiftList: at least one shift is required")]
    EmptyShiftList,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub significance: SignificanceConfig,
    pub epsilon: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            significance: SignificanceConfig::default(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SelectConfig {
    pub fn with_alpha(significance: SignificanceConfig) -> Self {
        Self {
            significance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub label_added: String,
    pub objective_after: f64,
}

/// Greedy outcome at one shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSelection {
    #[serde(serialize_with = "ser_shift")]
    pub shift: ShiftSpec,
    pub chosen_labels: Vec<String>,
    pub objective: f64,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub chosen_labels: Vec<String>,
    #[serde(serialize_with = "ser_shift")]
    pub best_shift: ShiftSpec,
    pub objective: f64,
    pub trace: Vec<TraceStep>,
    /// Greedy outcome for every shift that had usable queries, in input order.
    pub per_shift: Vec<ShiftSelection>,
}

fn ser_shift<S: serde::Serializer>(s: &ShiftSpec, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_i32(s.weeks())
}

/// Correlation between the full-period fitted values of the model on
/// `labels` and the case series.
pub fn model_objective<S: AsRef<str>>(
    panel: &QueryPanel,
    y: &WeeklySeries,
    labels: &[S],
    s: ShiftSpec,
    alpha: f64,
) -> Result<Option<f64>, RegressError> {
    let sub = panel.subset(labels)?;
    let fit = fit_ols(&sub, y, s, alpha)?;
    let pairs: Vec<(f64, f64)> = fit
        .fitted
        .iter()
        .filter_map(|(week, f)| Some((f, y.get(week)?)))
        .collect();
    Ok(pearson(&pairs).ok().map(|(r, _)| r))
}

/// Queries eligible for selection: significant and positively correlated,
/// in rank order.
fn candidate_pool(ranked: &[RankedQuery]) -> Vec<&str> {
    ranked
        .iter()
        .filter(|q| q.result.value().is_some_and(|r| r > 0.0))
        .map(|q| q.label.as_str())
        .collect()
}

/// Greedy forward selection at a single shift.
///
/// Returns `None` when no query is usable at this shift.
pub fn greedy_at_shift(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    cfg: &SelectConfig,
) -> Option<ShiftSelection> {
    let alpha = cfg.significance.alpha();
    let ranked = rank_queries(panel, y, s, &cfg.significance);
    let pool = candidate_pool(&ranked);
    let objective = |labels: &[&str]| model_objective(panel, y, labels, s, alpha).ok().flatten();

    let (seed_idx, seed_obj) = pool
        .iter()
        .enumerate()
        .find_map(|(i, l)| objective(&[l]).map(|o| (i, o)))?;
    let mut chosen = vec![pool[seed_idx]];
    let mut current = seed_obj;
    let mut trace = vec![TraceStep {
        step: 1,
        label_added: pool[seed_idx].to_string(),
        objective_after: current,
    }];

    loop {
        let mut best: Option<(&str, f64)> = None;
        for &cand in pool.iter().filter(|c| !chosen.contains(c)) {
            let mut trial = chosen.clone();
            trial.push(cand);
            let Some(obj) = objective(&trial) else {
                continue;
            };
            // Strict comparison keeps the higher-ranked candidate on ties.
            if best.is_none_or(|(_, b)| obj > b) {
                best = Some((cand, obj));
            }
        }
        match best {
            Some((cand, obj)) if obj > current + cfg.epsilon => {
                chosen.push(cand);
                current = obj;
                trace.push(TraceStep {
                    step: trace.len() + 1,
                    label_added: cand.to_string(),
                    objective_after: obj,
                });
            }
            _ => break,
        }
    }

    Some(ShiftSelection {
        shift: s,
        chosen_labels: chosen.into_iter().map(String::from).collect(),
        objective: current,
        trace,
    })
}

/// Runs greedy selection at every shift and keeps the shift with the highest
/// final objective (the earliest listed shift wins ties).
pub fn greedy_select(
    panel: &QueryPanel,
    y: &WeeklySeries,
    shifts: &[ShiftSpec],
    cfg: &SelectConfig,
) -> Result<SelectionResult, SelectError> {
    if shifts.is_empty() {
        return Err(SelectError::EmptyShiftList);
    }
    let per_shift: Vec<ShiftSelection> = shifts
        .iter()
        .filter_map(|&s| greedy_at_shift(panel, y, s, cfg))
        .collect();
    let best = per_shift
        .iter()
        .fold(None::<&ShiftSelection>, |best, cur| match best {
            Some(b) if b.objective >= cur.objective => Some(b),
            _ => Some(cur),
        })
        .ok_or(SelectError::NoUsableQuery)?
        .clone();
    Ok(SelectionResult {
        chosen_labels: best.chosen_labels,
        best_shift: best.shift,
        objective: best.objective,
        trace: best.trace,
        per_shift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub label_added: String,
    /// `None` once the fit is underdetermined or singular.
    pub objective: Option<f64>,
}

/// Objective of the model on the top-N ranked queries, for N = 1..=n.
pub fn prefix_sweep(
    panel: &QueryPanel,
    y: &WeeklySeries,
    s: ShiftSpec,
    cfg: &SelectConfig,
) -> Vec<SweepPoint> {
    let ranked = rank_queries(panel, y, s, &cfg.significance);
    let labels: Vec<&str> = ranked.iter().map(|q| q.label.as_str()).collect();
    (1..=labels.len())
        .map(|n| SweepPoint {
            n,
            label_added: labels[n - 1].to_string(),
            objective: model_objective(panel, y, &labels[..n], s, cfg.significance.alpha())
                .ok()
                .flatten(),
        })
        .collect()
}
