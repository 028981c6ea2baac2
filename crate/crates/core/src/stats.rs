//! Batch statistics over gap results: distribution summaries, one-predictor
//! regression with ANOVA, radar cross-validation and POV appearance rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::event::Direction;

/// Half the 2 Hz frame gap.
pub const RADAR_PAIRING_WINDOW_S: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("predictor is constant; slope undetermined")]
    ConstantPredictor,
    #[error("no camera sample has a radar sample within 0.25 s")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); zero for a singleton.
    pub std: f64,
    pub percentiles: Percentiles,
}

/// Percentile by linear interpolation between closest ranks: rank
/// `h = (n - 1) p`, value `x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

pub fn distribution_summary(values: &[f64]) -> Result<DistributionSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, std) = mean_std(values);
    Ok(DistributionSummary {
        n: values.len(),
        mean,
        std,
        percentiles: Percentiles {
            p10: percentile(&sorted, 0.10),
            p50: percentile(&sorted, 0.50),
            p90: percentile(&sorted, 0.90),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub adjusted_r2: f64,
    /// `+inf` for a perfect fit.
    pub f_stat: f64,
    pub df: (usize, usize),
    pub p_value: f64,
    pub n: usize,
}

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of
/// freedom, via the regularized incomplete beta function
/// `I_{d2 / (d2 + d1 f)}(d2 / 2, d1 / 2)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Ordinary least squares `y = slope x + intercept` with the one-predictor
/// ANOVA F test of the slope.
pub fn linear_regression_anova(x: &[f64], y: &[f64]) -> Result<RegressionReport, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let x_scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if !(sxx > (f64::EPSILON * x_scale).powi(2) * nf) {
        return Err(StatsError::ConstantPredictor);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let perfect = sse <= 1e-24 * syy.max(f64::MIN_POSITIVE) || r2 >= 1.0;
    let r2 = if perfect { 1.0 } else { r2 };
    let d2 = n - 2;
    let adjusted_r2 = 1.0 - (1.0 - r2) * (nf - 1.0) / d2 as f64;
    let f_stat = if perfect {
        f64::INFINITY
    } else {
        r2 / (1.0 - r2) * d2 as f64
    };
    Ok(RegressionReport {
        slope,
        intercept,
        r2,
        adjusted_r2,
        f_stat,
        df: (1, d2),
        p_value: f_upper_tail(f_stat, 1.0, d2 as f64),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedRange {
    pub t: f64,
    pub range: f64,
}

impl TimedRange {
    pub const fn new(t: f64, range: f64) -> Self {
        Self { t, range }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarComparison {
    pub n_pairs: usize,
    pub mean_err_m: f64,
    pub std_err_m: f64,
    pub mean_err_pct: f64,
    pub std_err_pct: f64,
}

/// Pairs each camera sample with the nearest radar sample within
/// [`RADAR_PAIRING_WINDOW_S`] and summarizes `camera - radar`, in meters and
/// in percent of the radar value.
pub fn radar_error_stats(camera: &[TimedRange], radar: &[TimedRange]) -> Result<RadarComparison, StatsError> {
    if camera.is_empty() || radar.is_empty() {
        return Err(StatsError::Empty);
    }
    let (err_m, err_pct): (Vec<f64>, Vec<f64>) = camera
        .iter()
        .filter_map(|c| {
            radar
                .iter()
                .min_by(|a, b| (a.t - c.t).abs().total_cmp(&(b.t - c.t).abs()))
                .filter(|r| (r.t - c.t).abs() <= RADAR_PAIRING_WINDOW_S + 1e-12)
                .map(|r| (c.range - r.range, (c.range - r.range) / r.range * 100.0))
        })
        .unzip();
    if err_m.is_empty() {
        return Err(StatsError::NoOverlap);
    }
    let (mean_err_m, std_err_m) = mean_std(&err_m);
    let (mean_err_pct, std_err_pct) = mean_std(&err_pct);
    Ok(RadarComparison {
        n_pairs: err_m.len(),
        mean_err_m,
        std_err_m,
        mean_err_pct,
        std_err_pct,
    })
}

/// Minimal view of a catalog row for appearance statistics.
pub trait AppearanceRow {
    fn direction(&self) -> Direction;
    fn has_video(&self) -> bool;
    fn has_pov(&self) -> bool;
}

/// Fraction of events with video in which a POV is present, per direction.
/// Directions without any video event map to `None`.
pub fn pov_appearance_rate<R: AppearanceRow>(rows: &[R]) -> BTreeMap<Direction, Option<f64>> {
    [Direction::Left, Direction::Right]
        .into_iter()
        .map(|d| {
            let video: Vec<&R> = rows.iter().filter(|r| r.direction() == d && r.has_video()).collect();
            let with_pov = video.iter().filter(|r| r.has_pov()).count();
            let rate = (!video.is_empty()).then(|| with_pov as f64 / video.len() as f64);
            (d, rate)
        })
        .collect()
}
