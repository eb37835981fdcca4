//! Seeded synthetic case and search-volume series.
//!
//! Cases follow a sum of Gaussian bumps with rounded, level-dependent
//! Gaussian noise. Each signal query tracks the bump sum `lead_weeks` ahead of
//! the cases, fades by `attention_decay` per calendar year and picks up
//! media-driven surges unrelated to incidence. Noise queries are independent
//! of everything.
//!
//! Random numbers come from xoshiro256** seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Uniforms take the top 53 bits of
//! each draw; normals use the cosine branch of Box–Muller, one normal per two
//! uniforms. Draw order is cases, then signal queries (gain, then one normal
//! per week), then noise queries.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{scale_0_100, QueryPanel, SeriesError, WeekStamp, WeeklySeries};

pub const MIN_WEEKS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicPeak {
    /// Week index (0 = first generated week); may be fractional.
    pub center: f64,
    pub height: f64,
    /// Standard deviation of the bump, in weeks.
    pub width: f64,
}

/// A search surge that jumps at `week` and decays exponentially.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaSpike {
    pub week: usize,
    /// Jump size as a multiple of the tallest epidemic peak.
    pub magnitude: f64,
    /// e-folding time of the decay.
    pub decay_weeks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub weeks: usize,
    pub start: WeekStamp,
    pub epidemic_peaks: Vec<EpidemicPeak>,
    /// How many weeks search activity runs ahead of reported cases.
    pub lead_weeks: i32,
    pub media_spikes: Vec<MediaSpike>,
    pub attention_decay: f64,
    pub noise_sd: f64,
    pub n_signal_queries: usize,
    pub n_noise_queries: usize,
}

impl ScenarioConfig {
    /// Five seasons from 2009-W01 (261 weeks) with a two-week search lead, a
    /// large first-year media surge and fading interest.
    pub fn five_seasons(seed: u64) -> Self {
        let peak = |center, height, width| EpidemicPeak {
            center,
            height,
            width,
        };
        ScenarioConfig {
            seed,
            weeks: 261,
            start: WeekStamp::new(2009, 1).expect("valid week"),
            epidemic_peaks: vec![
                peak(30.0, 120.0, 2.5),
                peak(48.0, 400.0, 3.0),
                peak(58.0, 220.0, 2.5),
                peak(104.0, 260.0, 3.0),
                peak(154.0, 180.0, 3.0),
                peak(205.0, 150.0, 3.0),
                peak(252.0, 120.0, 3.0),
            ],
            lead_weeks: 2,
            media_spikes: vec![MediaSpike {
                week: 16,
                magnitude: 0.6,
                decay_weeks: 2.0,
            }],
            attention_decay: 0.8,
            noise_sd: 1.5,
            n_signal_queries: 8,
            n_noise_queries: 4,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.weeks < MIN_WEEKS {
            return bad(format!(
                "weeks must be at least {MIN_WEEKS}, got {}",
                self.weeks
            ));
        }
        if self.start.offset(self.weeks as i64 - 1).is_none() {
            return bad("scenario runs past the last representable week".into());
        }
        for p in &self.epidemic_peaks {
            if !(p.width > 0.0 && p.width.is_finite()) {
                return bad(format!("peak width must be positive, got {}", p.width));
            }
            if !(p.height >= 0.0 && p.height.is_finite() && p.center.is_finite()) {
                return bad(format!(
                    "peak at {} has invalid height {}",
                    p.center, p.height
                ));
            }
        }
        for s in &self.media_spikes {
            if !(s.magnitude >= 0.0 && s.magnitude.is_finite()) {
                return bad(format!(
                    "spike magnitude must be non-negative, got {}",
                    s.magnitude
                ));
            }
            if !(s.decay_weeks > 0.0 && s.decay_weeks.is_finite()) {
                return bad(format!(
                    "spike decay must be positive, got {}",
                    s.decay_weeks
                ));
            }
        }
        if !(self.attention_decay > 0.0 && self.attention_decay <= 1.0) {
            return bad(format!(
                "attention_decay must be in (0, 1], got {}",
                self.attention_decay
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            ));
        }
        if self.n_signal_queries + self.n_noise_queries == 0 {
            return bad("at least one query is required".into());
        }
        Ok(())
    }
}

struct Normals(Xoshiro256StarStar);

impl Normals {
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn bump_sum(peaks: &[EpidemicPeak], t: f64) -> f64 {
    peaks
        .iter()
        .map(|p| {
            let z = (t - p.center) / p.width;
            p.height * (-0.5 * z * z).exp()
        })
        .sum()
}

/// Generates `(cases, panel)` for `cfg`. Output depends only on `cfg`.
pub fn generate(cfg: &ScenarioConfig) -> Result<(WeeklySeries, QueryPanel), SynthError> {
    cfg.validate()?;
    let mut rng = Normals(Xoshiro256StarStar::seed_from_u64(cfg.seed));
    let n = cfg.weeks;

    let cases: Vec<f64> = (0..n)
        .map(|u| {
            let level = bump_sum(&cfg.epidemic_peaks, u as f64);
            let noisy = level + cfg.noise_sd * (level + 1.0).sqrt() * rng.normal();
            noisy.round().max(0.0)
        })
        .collect();
    let cases = WeeklySeries::new("cases", cfg.start, cases)?;

    let tallest = cfg
        .epidemic_peaks
        .iter()
        .map(|p| p.height)
        .fold(0.0, f64::max);
    let start_year = cfg.start.year();
    let weeks: Vec<WeekStamp> = cases.weeks().collect();
    let media = |t: usize| -> f64 {
        cfg.media_spikes
            .iter()
            .filter(|s| t >= s.week)
            .map(|s| s.magnitude * tallest * (-((t - s.week) as f64) / s.decay_weeks).exp())
            .sum()
    };

    let mut series = Vec::with_capacity(cfg.n_signal_queries + cfg.n_noise_queries);
    for i in 0..cfg.n_signal_queries {
        let gain = 0.5 + rng.uniform();
        let values: Vec<f64> = (0..n)
            .map(|t| {
                let years_in = weeks[t].year() - start_year;
                let attention = cfg.attention_decay.powi(years_in);
                let epidemic = bump_sum(
                    &cfg.epidemic_peaks,
                    (t as i64 + i64::from(cfg.lead_weeks)) as f64,
                );
                let level = gain * epidemic * attention + media(t);
                (level + cfg.noise_sd * (level + 1.0).sqrt() * rng.normal()).max(0.0)
            })
            .collect();
        let raw = WeeklySeries::new(format!("signal_{}", i + 1), cfg.start, values)?;
        series.push(scale_0_100(&raw)?);
    }
    for i in 0..cfg.n_noise_queries {
        let values: Vec<f64> = (0..n)
            .map(|_| (50.0 + 15.0 * rng.normal()).max(0.0))
            .collect();
        let raw = WeeklySeries::new(format!("noise_{}", i + 1), cfg.start, values)?;
        series.push(scale_0_100(&raw)?);
    }
    Ok((cases, QueryPanel::new(series)?))
}
