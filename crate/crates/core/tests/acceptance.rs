//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use flunow::ingest;
use flunow::regress::{fit_ols, rolling_weekly_fit};
use flunow::report::{table_model_by_shift, table_overall_annual, ModelScan};
use flunow::select::{greedy_select, model_objective, SelectConfig};
use flunow::stats::{correlate, correlation_p_value, pearson, SignificanceConfig};
use flunow::synth::{generate, ScenarioConfig};
use flunow::timeseries::{QueryPanel, ShiftSpec, WeekStamp, WeeklySeries};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn scenario(name: &str) -> ScenarioConfig {
    serde_json::from_slice(&fs::read(fixture(name)).unwrap()).unwrap()
}

fn normal(rng: &mut StdRng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

/// Two-pass textbook correlation.
fn definitional_r(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn correlation_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.gen_range(10..=261);
        let scale = 10f64.powi(rng.gen_range(-2..=3));
        let offset = rng.gen_range(-500.0..500.0);
        let slope = rng.gen_range(-2.0..2.0);
        let xs: Vec<f64> = (0..n).map(|_| offset + scale * normal(&mut rng)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| slope * x + scale * normal(&mut rng))
            .collect();
        let pairs: Vec<_> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let (r, m) = pearson(&pairs).map_err(|e| format!("series {i}: {e}"))?;
        if m != n {
            return Err(format!("series {i}: pair count {m} != {n}"));
        }
        let diff = (r - definitional_r(&xs, &ys)).abs();
        worst = worst.max(diff);
        if diff > 1e-12 {
            return Err(format!("series {i}: |diff| = {diff:e}"));
        }
    }
    within(started.elapsed(), Duration::from_secs(5))?;
    Ok(format!("max |diff| {worst:.1e}, {:.2?}", started.elapsed()))
}

fn significance_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let draws = 10_000;
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = rng.gen_range(20..=80);
        let rho = rng.gen_range(0.0..0.5);
        let xs: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| rho * x + (1.0 - rho * rho).sqrt() * normal(&mut rng))
            .collect();
        let observed = definitional_r(&xs, &ys).abs();
        let p_t = correlation_p_value(definitional_r(&xs, &ys), n).map_err(|e| e.to_string())?;
        let mut shuffled = ys.clone();
        let mut extreme = 0usize;
        for _ in 0..draws {
            shuffled.shuffle(&mut rng);
            if definitional_r(&xs, &shuffled).abs() >= observed - 1e-12 {
                extreme += 1;
            }
        }
        let p_perm = extreme as f64 / draws as f64;
        let diff = (p_t - p_perm).abs();
        worst = worst.max(diff);
        if diff > 0.02 {
            return Err(format!(
                "fixture {i} (n={n}): t-test {p_t:.4} vs permutation {p_perm:.4}"
            ));
        }
    }
    within(started.elapsed(), Duration::from_secs(60))?;
    Ok(format!("max |diff| {worst:.4}, {:.2?}", started.elapsed()))
}

/// Least squares through the normal equations with partial-pivot Gaussian
/// elimination. Column 0 is the intercept.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len() + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &yv) in x.iter().zip(y) {
        let full: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += full[i] * full[j];
            }
            a[i][k] += full[i] * yv;
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..=k {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][k] - s) / a[i][i];
    }
    beta
}

fn ols_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst_rel = 0.0f64;
    let mut worst_dot = 0.0f64;
    for i in 0..200 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(n + 10..=200);
        let k: i32 = rng.gen_range(-2..=2);
        let start = WeekStamp::new(rng.gen_range(2005..2015), rng.gen_range(1..=52)).unwrap();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let beta: Vec<f64> = (0..=n)
            .map(|_| rng.gen_range(0.5..2.0) * if rng.gen() { 1.0 } else { -1.0 })
            .collect();
        // Case week u pairs with search week u - k.
        let y: Vec<f64> = (0..m)
            .map(|u| {
                let t = u as i64 - i64::from(k);
                let signal = if (0..m as i64).contains(&t) {
                    beta[0]
                        + (0..n)
                            .map(|j| beta[j + 1] * cols[j][t as usize])
                            .sum::<f64>()
                } else {
                    0.0
                };
                signal + normal(&mut rng)
            })
            .collect();
        let panel = QueryPanel::new(
            cols.iter()
                .enumerate()
                .map(|(j, c)| WeeklySeries::new(format!("q{j}"), start, c.clone()).unwrap())
                .collect(),
        )
        .unwrap();
        let ys = WeeklySeries::new("cases", start, y.clone()).unwrap();
        let fit = fit_ols(&panel, &ys, ShiftSpec::new(k).unwrap(), 0.05)
            .map_err(|e| format!("panel {i}: {e}"))?;

        let ts: Vec<usize> = (0..m)
            .filter(|&t| (0..m as i64).contains(&(t as i64 + i64::from(k))))
            .collect();
        let rows: Vec<Vec<f64>> = ts
            .iter()
            .map(|&t| cols.iter().map(|c| c[t]).collect())
            .collect();
        let targets: Vec<f64> = ts
            .iter()
            .map(|&t| y[(t as i64 + i64::from(k)) as usize])
            .collect();
        let oracle = normal_equations(&rows, &targets);
        let got: Vec<f64> = std::iter::once(fit.intercept.estimate)
            .chain(fit.coefficients.iter().map(|(_, c)| c.estimate))
            .collect();
        for (g, o) in got.iter().zip(&oracle) {
            let rel = (g - o).abs() / o.abs();
            worst_rel = worst_rel.max(rel);
            if rel > 1e-9 {
                return Err(format!("panel {i}: coefficient {g} vs {o} (rel {rel:e})"));
            }
        }
        let resid: Vec<f64> = ts
            .iter()
            .zip(&targets)
            .map(|(&t, yv)| {
                let case_week = start.offset(t as i64 + i64::from(k)).unwrap();
                yv - fit.fitted.get(case_week).unwrap()
            })
            .collect();
        let mut dots = vec![resid.iter().sum::<f64>()];
        dots.extend((0..n).map(|j| rows.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>()));
        for d in dots {
            worst_dot = worst_dot.max(d.abs());
            if d.abs() > 1e-8 {
                return Err(format!("panel {i}: residual dot {d:e}"));
            }
        }
    }
    within(started.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "max rel {worst_rel:.1e}, max |dot| {worst_dot:.1e}, {:.2?}",
        started.elapsed()
    ))
}

fn exhaustive_best(panel: &QueryPanel, y: &WeeklySeries, alpha: f64) -> f64 {
    let labels: Vec<&str> = panel.labels().collect();
    let mut best = f64::NEG_INFINITY;
    for s in ShiftSpec::default_scan() {
        for mask in 1u32..(1 << labels.len()) {
            let subset: Vec<&str> = (0..labels.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| labels[i])
                .collect();
            if let Ok(Some(obj)) = model_objective(panel, y, &subset, s, alpha) {
                best = best.max(obj);
            }
        }
    }
    best
}

/// Reachable fixtures are noise-free sums of two or three independent queries
/// with comparable weights, so every contributing query is individually a
/// significant positive candidate and each greedy step toward the full sum
/// improves the fit. Other instances add heavy noise to an arbitrary mix.
fn greedy_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(4);
    let start = WeekStamp::new(2009, 1).unwrap();
    let cfg = SelectConfig::default();
    let mut reachable = 0;
    let mut skipped = 0;
    for i in 0..100 {
        let constructed = i % 2 == 0;
        let n_cand = rng.gen_range(3..=10);
        let m = rng.gen_range(60..=120);
        let cols: Vec<Vec<f64>> = (0..n_cand)
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..100.0)).collect())
            .collect();
        let (n_true, weights, noise_sd) = if constructed {
            let k = rng.gen_range(2..=3);
            (
                k,
                (0..k)
                    .map(|_| rng.gen_range(1.0..1.3))
                    .collect::<Vec<f64>>(),
                0.0,
            )
        } else {
            let k = rng.gen_range(1..=n_cand.min(4));
            let w = (0..k).map(|_| rng.gen_range(-1.0..3.0)).collect();
            (k, w, rng.gen_range(20.0..200.0))
        };
        let y: Vec<f64> = (0..m)
            .map(|t| {
                (0..n_true).map(|j| weights[j] * cols[j][t]).sum::<f64>()
                    + noise_sd * normal(&mut rng)
            })
            .collect();
        let panel = QueryPanel::new(
            cols.into_iter()
                .enumerate()
                .map(|(j, c)| WeeklySeries::new(format!("q{j}"), start, c).unwrap())
                .collect(),
        )
        .unwrap();
        let ys = WeeklySeries::new("cases", start, y).unwrap();
        if constructed {
            let scored =
                flunow::stats::rank_queries(&panel, &ys, ShiftSpec::ZERO, &cfg.significance);
            for j in 0..n_true {
                let label = format!("q{j}");
                let q = scored.iter().find(|q| q.label == label).unwrap();
                if !q.result.value().is_some_and(|r| r > 0.0) {
                    return Err(format!(
                        "instance {i}: fixture query {label} is not a candidate"
                    ));
                }
            }
        }
        let sel = match greedy_select(&panel, &ys, &ShiftSpec::default_scan(), &cfg) {
            Ok(sel) => sel,
            Err(_) if !constructed => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(format!("instance {i}: {e}")),
        };
        for s in &sel.per_shift {
            if !s
                .trace
                .windows(2)
                .all(|w| w[1].objective_after > w[0].objective_after)
            {
                return Err(format!(
                    "instance {i}: trace not increasing at shift {}",
                    s.shift
                ));
            }
        }
        let best = exhaustive_best(&panel, &ys, cfg.significance.alpha());
        if sel.objective > best + 1e-12 {
            return Err(format!(
                "instance {i}: greedy {} above exhaustive {best}",
                sel.objective
            ));
        }
        if constructed {
            reachable += 1;
            if (best - sel.objective).abs() > 1e-9 {
                return Err(format!(
                    "instance {i}: greedy {} vs exhaustive {best} on a reachable fixture",
                    sel.objective
                ));
            }
        }
    }
    Ok(format!(
        "{reachable} reachable fixtures exact, {} others bounded ({skipped} without candidates), {:.2?}",
        100 - reachable - skipped,
        started.elapsed()
    ))
}

fn shift_structure() -> Outcome {
    let started = Instant::now();
    let cfg = SignificanceConfig::default();
    let (cases, panel) = generate(&scenario("scenario_lead2.json")).map_err(|e| e.to_string())?;
    if cases.len() != 261 {
        return Err(format!("scenario has {} weeks", cases.len()));
    }
    let shifts = ShiftSpec::default_scan();
    for q in panel
        .series()
        .iter()
        .filter(|q| q.label().starts_with("signal"))
    {
        let r: Vec<f64> = shifts
            .iter()
            .map(|&s| correlate(q, &cases, s, &cfg).r.unwrap_or(f64::NAN))
            .collect();
        if !r.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!("{}: r across shifts {r:?}", q.label()));
        }
    }
    let sel = greedy_select(&panel, &cases, &shifts, &SelectConfig::default())
        .map_err(|e| e.to_string())?;
    let table = table_model_by_shift(
        &panel,
        &cases,
        &sel.chosen_labels,
        &shifts,
        &ModelScan::default(),
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let row: Vec<f64> = table.rows[0]
        .cells
        .iter()
        .map(|c| c.value.unwrap_or(f64::NAN))
        .collect();
    let last = row[row.len() - 1];
    if !row[..row.len() - 1].iter().all(|v| *v < last) {
        return Err(format!("model row {row:?} not maximized at +2"));
    }
    within(started.elapsed(), Duration::from_secs(5))?;
    let shown: Vec<String> = table.rows[0].cells.iter().map(|c| c.render()).collect();
    Ok(format!(
        "model row {}, {:.2?}",
        shown.join(" "),
        started.elapsed()
    ))
}

fn model_strength() -> Outcome {
    let cfg = scenario("scenario_lead2.json");
    let run = || -> Result<(f64, f64), String> {
        let (cases, panel) = generate(&cfg).map_err(|e| e.to_string())?;
        let sel = greedy_select(
            &panel,
            &cases,
            &ShiftSpec::default_scan(),
            &SelectConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let at = |k: i32| {
            sel.per_shift
                .iter()
                .find(|s| s.shift.weeks() == k)
                .map(|s| s.objective)
                .ok_or(format!("no selection at shift {k}"))
        };
        Ok((at(2)?, at(-2)?))
    };
    let (plus, minus) = run()?;
    let (plus2, minus2) = run()?;
    if plus.to_bits() != plus2.to_bits() || minus.to_bits() != minus2.to_bits() {
        return Err("objectives differ between identical runs".into());
    }
    if !(plus > 0.70) {
        return Err(format!("+2 objective {plus:.4} does not exceed 0.70"));
    }
    if minus > 0.70 {
        return Err(format!("-2 objective {minus:.4} exceeds 0.70"));
    }
    Ok(format!("+2 objective {plus:.4}, -2 objective {minus:.4}"))
}

fn failure_mode() -> Outcome {
    // The fixture holds only tracked queries: pure-noise columns are
    // significant by chance at rate alpha in any year.
    let cfg = scenario("scenario_decay.json");
    if cfg.attention_decay != 0.2 {
        return Err(format!("fixture decay is {}", cfg.attention_decay));
    }
    let (cases, panel) = generate(&cfg).map_err(|e| e.to_string())?;
    let s = ShiftSpec::new(cfg.lead_weeks.clamp(-2, 2)).unwrap();
    let table = table_overall_annual(&panel, &cases, s, &SignificanceConfig::default());
    let years = cases.years();
    let year_col = |y: i32| {
        table
            .columns
            .iter()
            .position(|c| *c == y.to_string())
            .unwrap()
    };
    let first = year_col(years[0]);
    let late: Vec<usize> = years[years.len() - 2..]
        .iter()
        .map(|&y| year_col(y))
        .collect();
    let mut min_first = f64::INFINITY;
    for row in &table.rows {
        let label = &row.labels[0];
        for &c in &late {
            if let Some(v) = row.cells[c].value {
                if v >= 0.3 {
                    return Err(format!("{label}: r {v:.3} in {}", table.columns[c]));
                }
            }
        }
        if label.starts_with("signal") {
            let v = row.cells[first].value.unwrap_or(f64::NAN);
            if !(v > 0.6) {
                return Err(format!("{label}: first-year r {v:.3}"));
            }
            min_first = min_first.min(v);
        }
    }
    Ok(format!(
        "final two years NA or < 0.3 for {} queries, first-year min r {min_first:.3}",
        table.rows.len()
    ))
}

fn no_lookahead() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let (cases, panel) = generate(&scenario("scenario_lead2.json")).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = panel.labels().take(3).collect();
    let panel = panel.subset(&labels).unwrap();
    let warmup = 10;
    let shift = ShiftSpec::new(2).unwrap();
    let base = rolling_weekly_fit(&panel, &cases, shift, warmup, 0.05, false)
        .map_err(|e| e.to_string())?;
    let n = cases.len();
    let estimated: Vec<usize> = (0..n).filter(|&t| base.values[t].is_some()).collect();
    if estimated.is_empty() {
        return Err("no rolling estimates to check".into());
    }
    for draw in 0..20 {
        let t = *estimated.choose(&mut rng).unwrap();
        let mut y = cases.values().to_vec();
        let mut cols: Vec<Vec<f64>> = panel.series().iter().map(|s| s.values().to_vec()).collect();
        for u in t..n {
            if rng.gen_bool(0.5) {
                y[u] += rng.gen_range(-50.0..50.0);
            }
            for c in &mut cols {
                if rng.gen_bool(0.5) {
                    c[u] = rng.gen_range(0.0..100.0);
                }
            }
        }
        let y2 = WeeklySeries::new("cases", cases.start(), y).unwrap();
        let p2 = QueryPanel::new(
            panel
                .series()
                .iter()
                .zip(cols)
                .map(|(s, c)| WeeklySeries::new(s.label(), s.start(), c).unwrap())
                .collect(),
        )
        .unwrap();
        let est =
            rolling_weekly_fit(&p2, &y2, shift, warmup, 0.05, false).map_err(|e| e.to_string())?;
        let (a, b) = (base.values[t], est.values[t]);
        if a.map(f64::to_bits) != b.map(f64::to_bits) {
            return Err(format!(
                "draw {draw}: estimate at week index {t} changed {a:?} -> {b:?}"
            ));
        }
    }
    Ok("20 perturbations at +2 leave the estimate unchanged".into())
}

fn round_trip_and_fuzz() -> Outcome {
    let read = |name: &str| fs::read(fixture(name)).unwrap();
    let cases = ingest::parse_cases_csv(&read("cases.csv")).map_err(|e| e.to_string())?;
    let panel = ingest::parse_trends_csv(&read("panel.csv")).map_err(|e| e.to_string())?;
    let lexicon = ingest::load_lexicon(&read("lexicon.csv")).map_err(|e| e.to_string())?;
    let figure = ingest::parse_long_csv(&read("figure.csv")).map_err(|e| e.to_string())?;
    let text = ingest::write_cases_csv(&cases).unwrap();
    if ingest::parse_cases_csv(text.as_bytes()).unwrap() != cases
        || text.as_bytes() != read("cases.csv")
    {
        return Err("cases fixture does not round-trip".into());
    }
    let text = ingest::write_trends_csv(&panel).unwrap();
    if ingest::parse_trends_csv(text.as_bytes()).unwrap() != panel
        || text.as_bytes() != read("panel.csv")
    {
        return Err("panel fixture does not round-trip".into());
    }
    let text = ingest::write_lexicon(&lexicon).unwrap();
    if ingest::load_lexicon(text.as_bytes()).unwrap() != lexicon
        || text.as_bytes() != read("lexicon.csv")
    {
        return Err("lexicon fixture does not round-trip".into());
    }
    let text = ingest::write_long_csv(&figure).unwrap();
    if ingest::parse_long_csv(text.as_bytes()).unwrap() != figure
        || text.as_bytes() != read("figure.csv")
    {
        return Err("figure fixture does not round-trip".into());
    }
    for seed in 0..5 {
        let (c, p) = generate(&ScenarioConfig::five_seasons(seed)).unwrap();
        let ct = ingest::write_cases_csv(&c).unwrap();
        let pt = ingest::write_trends_csv(&p).unwrap();
        if ingest::parse_cases_csv(ct.as_bytes()).unwrap() != c
            || ingest::parse_trends_csv(pt.as_bytes()).unwrap() != p
        {
            return Err(format!("generated scenario {seed} does not round-trip"));
        }
    }

    let parsers: [(&str, fn(&[u8]) -> bool); 4] = [
        ("trends", |b| ingest::parse_trends_csv(b).is_ok()),
        ("cases", |b| ingest::parse_cases_csv(b).is_ok()),
        ("lexicon", |b| ingest::load_lexicon(b).is_ok()),
        ("long", |b| ingest::parse_long_csv(b).is_ok()),
    ];
    let seeds = [
        read("panel.csv"),
        read("cases.csv"),
        read("lexicon.csv"),
        read("figure.csv"),
    ];
    let mut rng = StdRng::seed_from_u64(9);
    panic::set_hook(Box::new(|_| {}));
    let mut tally = BTreeMap::new();
    for ((name, parse), seed) in parsers.iter().zip(&seeds) {
        let mut accepted = 0;
        for i in 0..20_000 {
            let input: Vec<u8> = if i < 10_000 {
                let len = rng.gen_range(0..256);
                (0..len).map(|_| rng.gen()).collect()
            } else {
                mutate(&mut rng, seed)
            };
            match panic::catch_unwind(AssertUnwindSafe(|| parse(&input))) {
                Ok(ok) => accepted += usize::from(ok),
                Err(_) => {
                    let _ = panic::take_hook();
                    return Err(format!(
                        "{name} parser panicked on {:?}",
                        String::from_utf8_lossy(&input)
                    ));
                }
            }
        }
        tally.insert(*name, accepted);
    }
    let _ = panic::take_hook();
    Ok(format!(
        "4 fixtures round-trip; 10000 random + 10000 mutated inputs per parser, accepted {tally:?}"
    ))
}

fn mutate(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    let mut v = seed[..seed.len().min(400)].to_vec();
    for _ in 0..rng.gen_range(1..6) {
        let at = rng.gen_range(0..=v.len());
        match rng.gen_range(0..4) {
            0 if at < v.len() => v[at] = rng.gen(),
            1 if at < v.len() => {
                v.remove(at);
            }
            2 => v.insert(at, *b",\n-0123456789W".choose(rng).unwrap()),
            _ => v.insert(at, rng.gen()),
        }
    }
    v
}

struct RunOutput {
    code: Option<i32>,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    files: BTreeMap<String, Vec<u8>>,
}

fn run_cli(args: &[&str], out_dir: &Path) -> RunOutput {
    let out = Command::new(env!("CARGO_BIN_EXE_flunow"))
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .expect("binary runs");
    let mut files = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(out_dir) {
        for e in entries.flatten() {
            files.insert(
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            );
        }
    }
    RunOutput {
        code: out.status.code(),
        stdout: out.stdout,
        stderr: out.stderr,
        files,
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = fixture("cases.csv");
    let panel = fixture("panel.csv");
    let lexicon = fixture("lexicon.csv");
    let (c, p, l) = (
        cases.to_str().unwrap(),
        panel.to_str().unwrap(),
        lexicon.to_str().unwrap(),
    );
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("synth", vec!["synth", "--seed", "42", "--weeks", "261"]),
        (
            "correlate",
            vec!["correlate", "--cases", c, "--panel", p, "--shift", "2"],
        ),
        (
            "shift-scan",
            vec![
                "shift-scan",
                "--cases",
                c,
                "--panel",
                p,
                "--shifts",
                "-2..2",
            ],
        ),
        (
            "select",
            vec!["select", "--cases", c, "--panel", p, "--lexicon", l],
        ),
        (
            "fit",
            vec![
                "fit",
                "--cases",
                c,
                "--panel",
                p,
                "--shift",
                "2",
                "--queries",
                "signal_1,signal_2",
            ],
        ),
        (
            "nowcast-full",
            vec!["nowcast", "--cases", c, "--panel", p, "--mode", "full"],
        ),
        (
            "nowcast-rolling",
            vec![
                "nowcast", "--cases", c, "--panel", p, "--mode", "rolling", "--clamp",
            ],
        ),
        ("report-fig", vec!["report-fig", "--cases", c, "--panel", p]),
    ];
    let mut checked = Vec::new();
    for (name, args) in commands {
        let a = run_cli(&args, &tmp.path().join(format!("{name}-a")));
        let b = run_cli(&args, &tmp.path().join(format!("{name}-b")));
        if a.code != Some(0) {
            return Err(format!(
                "{name}: exit {:?}: {}",
                a.code,
                String::from_utf8_lossy(&a.stderr)
            ));
        }
        if a.files.is_empty() {
            return Err(format!("{name}: wrote no files"));
        }
        if a.code != b.code || a.stdout != b.stdout || a.stderr != b.stderr || a.files != b.files {
            return Err(format!("{name}: outputs differ between runs"));
        }
        checked.push(format!("{name}({})", a.files.len()));
    }
    Ok(format!("byte-identical: {}", checked.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 correlation oracle", correlation_oracle),
        ("2 significance oracle", significance_oracle),
        ("3 least-squares oracle", ols_oracle),
        ("4 greedy oracle", greedy_oracle),
        ("5 shift structure", shift_structure),
        ("6 model strength", model_strength),
        ("7 attention failure mode", failure_mode),
        ("8 no lookahead", no_lookahead),
        ("9 round trip and fuzz", round_trip_and_fuzz),
        ("10 cli determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
