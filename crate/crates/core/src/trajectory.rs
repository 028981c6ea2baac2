//! Weighted first-order smoothing of a range series and extrapolation to the
//! lane-change instant.
//!
//! The camera captures at 2 Hz, so the lane-change time generally falls
//! between frames; frames after it are unusable because the trailer occludes
//! the lane markers. Ranges are fitted with `R(t) = a1 t + a2` under weights
//! `R_min / R_i` and the fitted line is carried forward to `t_LC`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::conflict::{self, WarningFlags, WarningThresholds};
use crate::event::{Direction, LaneChangeEvent};
use crate::gap::{estimate_frame_range, RangeEstimate};

/// Minimum number of consecutive qualified frames.
pub const MIN_QUALIFIED_FRAMES: usize = 7;
/// Longest extrapolation allowed: one 2 Hz frame gap plus slack.
pub const MAX_EXTRAPOLATION_S: f64 = 0.6;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("range {0} is not positive")]
    NonPositiveRange(f64),
    #[error("empty series")]
    Empty,
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("series lengths differ: {times} times, {ranges} ranges, {weights} weights")]
    LengthMismatch {
        times: usize,
        ranges: usize,
        weights: usize,
    },
    #[error("weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("all sample times identical; slope is undetermined")]
    SingularDesign,
    #[error("extrapolation interval {0} s outside [0, 0.6] s")]
    StaleFrame(f64),
}

/// `R(t) = a1 t + a2` with `a1` the range rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub a1: f64,
    pub a2: f64,
    /// Mean sample time the normal equations were centered on.
    pub t_ref: f64,
    pub n: usize,
    pub weighted_sse: f64,
}

impl LineFit {
    pub fn value_at(&self, t: f64) -> f64 {
        self.a1 * t + self.a2
    }
}

/// `w_i = R_min / R_i`; the closest sample gets weight 1.
pub fn compute_weights(ranges: &[f64]) -> Result<Vec<f64>, FitError> {
    if ranges.is_empty() {
        return Err(FitError::Empty);
    }
    if let Some(&bad) = ranges.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(FitError::NonPositiveRange(bad));
    }
    let r_min = ranges.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ranges.iter().map(|r| r_min / r).collect())
}

/// Minimizes `sum w_i (R_i - a1 t_i - a2)^2` through the 2x2 weighted normal
/// equations in times shifted by their mean.
pub fn weighted_line_fit(times: &[f64], ranges: &[f64], weights: &[f64]) -> Result<LineFit, FitError> {
    let n = times.len();
    if ranges.len() != n || weights.len() != n {
        return Err(FitError::LengthMismatch {
            times: n,
            ranges: ranges.len(),
            weights: weights.len(),
        });
    }
    if n < 2 {
        return Err(FitError::TooFewSamples(n));
    }
    if let Some(&w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(FitError::NonPositiveWeight(w));
    }
    let t_ref = times.iter().sum::<f64>() / n as f64;

    let (mut s0, mut s1, mut s2, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&t, &r), &w) in times.iter().zip(ranges).zip(weights) {
        let tc = t - t_ref;
        s0 += w;
        s1 += w * tc;
        s2 += w * tc * tc;
        b0 += w * r;
        b1 += w * tc * r;
    }
    let det = s0 * s2 - s1 * s1;
    let spread = times.iter().map(|t| (t - t_ref).abs()).fold(0.0, f64::max);
    if !(spread > 0.0) || !(det > f64::EPSILON * s0 * s0 * spread * spread) {
        return Err(FitError::SingularDesign);
    }
    let a1 = (s0 * b1 - s1 * b0) / det;
    let level = (s2 * b0 - s1 * b1) / det;
    let a2 = level - a1 * t_ref;

    let weighted_sse = times
        .iter()
        .zip(ranges)
        .zip(weights)
        .map(|((&t, &r), &w)| {
            let e = r - (a1 * (t - t_ref) + level);
            w * e * e
        })
        .sum();
    Ok(LineFit {
        a1,
        a2,
        t_ref,
        n,
        weighted_sse,
    })
}

/// `R(t_LC) = a1 * dt + R(t_n)` with `R(t_n)` taken from the fitted line.
pub fn extrapolate_to_lane_change(fit: &LineFit, t_n: f64, t_lc: f64) -> Result<f64, FitError> {
    let dt = t_lc - t_n;
    if !(-TIME_EPS..=MAX_EXTRAPOLATION_S + TIME_EPS).contains(&dt) {
        return Err(FitError::StaleFrame(dt));
    }
    Ok(fit.a1 * dt.max(0.0) + fit.value_at(t_n))
}

/// Kinematics of the gap at the lane-change time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub event_id: String,
    pub direction: Direction,
    pub r_lc: f64,
    pub rdot: f64,
    pub delta_t: f64,
    pub t_n: f64,
    pub frames_used: usize,
    pub ttc: Option<f64>,
    pub d_req: f64,
    pub warning: WarningFlags,
    pub fit: LineFit,
    /// Qualified per-frame estimates in ascending time.
    pub estimates: Vec<RangeEstimate>,
}

/// Why an event produced no gap result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GapOutcome {
    Computed(GapResult),
    DiscardedInsufficientFrames { qualified: usize },
    NoFrameBeforeLaneChange,
    StaleLastFrame { delta_t: f64 },
    MalformedEvent { reason: String },
    OverlapAtLaneChange { r_lc: f64 },
}

impl GapOutcome {
    pub fn code(&self) -> &'static str {
        match self {
            GapOutcome::Computed(_) => "ok",
            GapOutcome::DiscardedInsufficientFrames { .. } => "discarded_insufficient_frames",
            GapOutcome::NoFrameBeforeLaneChange => "no_frame_before_lane_change",
            GapOutcome::StaleLastFrame { .. } => "stale_last_frame",
            GapOutcome::MalformedEvent { .. } => "malformed_event",
            GapOutcome::OverlapAtLaneChange { .. } => "overlap_at_lane_change",
        }
    }

    pub fn result(&self) -> Option<&GapResult> {
        match self {
            GapOutcome::Computed(r) => Some(r),
            _ => None,
        }
    }
}

/// Walks frames backward from the last one at or before `t_LC`, collecting
/// qualified range estimates until the first disqualified (or unannotated)
/// frame. Seven or more consecutive estimates are fitted and extrapolated.
pub fn process_event_gap(
    event: &LaneChangeEvent,
    cam: &CameraIntrinsics,
    lane_width: f64,
    trailer_length: f64,
    thresholds: &WarningThresholds,
) -> GapOutcome {
    let Some(t_lc) = event.t_lc.filter(|t| t.is_finite()) else {
        return GapOutcome::MalformedEvent {
            reason: "missing t_lc".into(),
        };
    };
    let before: Vec<_> = event.frames.iter().filter(|f| f.t <= t_lc + TIME_EPS).collect();
    let Some(last) = before.last() else {
        return GapOutcome::NoFrameBeforeLaneChange;
    };
    let t_n = last.t;
    let delta_t = t_lc - t_n;
    if delta_t > MAX_EXTRAPOLATION_S + TIME_EPS {
        return GapOutcome::StaleLastFrame { delta_t };
    }

    let mut estimates: Vec<RangeEstimate> = Vec::new();
    for frame in before.iter().rev() {
        let Some(fa) = frame.annotation() else { break };
        let est = estimate_frame_range(&fa, cam, lane_width, trailer_length);
        if !est.qualified {
            break;
        }
        estimates.push(est);
    }
    if estimates.len() < MIN_QUALIFIED_FRAMES {
        return GapOutcome::DiscardedInsufficientFrames {
            qualified: estimates.len(),
        };
    }
    estimates.reverse();

    let times: Vec<f64> = estimates.iter().map(|e| e.t).collect();
    let ranges: Vec<f64> = estimates.iter().map(|e| e.r).collect();
    let fit = match compute_weights(&ranges).and_then(|w| weighted_line_fit(&times, &ranges, &w)) {
        Ok(f) => f,
        Err(e) => return GapOutcome::MalformedEvent { reason: e.to_string() },
    };
    let r_lc = match extrapolate_to_lane_change(&fit, t_n, t_lc) {
        Ok(r) => r,
        Err(FitError::StaleFrame(dt)) => return GapOutcome::StaleLastFrame { delta_t: dt },
        Err(e) => return GapOutcome::MalformedEvent { reason: e.to_string() },
    };
    let (d_req, warning) = match conflict::required_deceleration(r_lc, fit.a1)
        .and_then(|d| conflict::warning_decision(event.direction, r_lc, fit.a1, thresholds).map(|w| (d, w)))
    {
        Ok(v) => v,
        Err(_) => return GapOutcome::OverlapAtLaneChange { r_lc },
    };
    GapOutcome::Computed(GapResult {
        event_id: event.event_id.clone(),
        direction: event.direction,
        r_lc,
        rdot: fit.a1,
        delta_t: delta_t.max(0.0),
        t_n,
        frames_used: estimates.len(),
        ttc: conflict::time_to_collision(r_lc, fit.a1),
        d_req,
        warning,
        fit,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Derivative-free oracle: coordinate-wise golden-section search on the
    /// weighted SSE, alternating over a1 and a2 until the bracket collapses.
    fn brute_force_fit(t: &[f64], r: &[f64], w: &[f64]) -> (f64, f64) {
        let sse = |a1: f64, a2: f64| -> f64 {
            t.iter()
                .zip(r)
                .zip(w)
                .map(|((t, r), w)| w * (r - a1 * t - a2).powi(2))
                .sum()
        };
        let golden = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| -> f64 {
            let g = (5.0_f64.sqrt() - 1.0) / 2.0;
            while hi - lo > 1e-11 {
                let a = hi - g * (hi - lo);
                let b = lo + g * (hi - lo);
                if f(a) < f(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            (lo + hi) / 2.0
        };
        let (mut a1, mut a2) = (0.0, 0.0);
        for _ in 0..400 {
            a2 = golden(&|x| sse(a1, x), -200.0, 200.0);
            a1 = golden(&|x| sse(x, a2), -50.0, 50.0);
        }
        (a1, a2)
    }

    #[test]
    fn weights_examples() {
        assert_eq!(compute_weights(&[10.0, 20.0, 40.0]).unwrap(), vec![1.0, 0.5, 0.25]);
        assert_eq!(compute_weights(&[30.0]).unwrap(), vec![1.0]);
        assert_eq!(compute_weights(&[25.0; 3]).unwrap(), vec![1.0; 3]);
        assert_eq!(compute_weights(&[10.0, -1.0]), Err(FitError::NonPositiveRange(-1.0)));
        assert_eq!(compute_weights(&[]), Err(FitError::Empty));
    }

    #[test]
    fn exact_line_is_weight_independent() {
        let t = [0.0, 1.0, 2.0];
        let r = [30.0, 28.0, 26.0];
        for w in [[1.0, 1.0, 1.0], [0.2, 3.0, 0.7]] {
            let f = weighted_line_fit(&t, &r, &w).unwrap();
            assert!((f.a1 + 2.0).abs() < 1e-12 && (f.a2 - 30.0).abs() < 1e-12);
        }
        let f = weighted_line_fit(&[3.0, 4.5, 9.0], &[20.0; 3], &[1.0; 3]).unwrap();
        assert!(f.a1.abs() < 1e-14 && (f.a2 - 20.0).abs() < 1e-12);
    }

    #[test]
    fn singular_design_rejected() {
        assert_eq!(
            weighted_line_fit(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], &[1.0; 3]),
            Err(FitError::SingularDesign)
        );
        assert_eq!(
            weighted_line_fit(&[1.0], &[1.0], &[1.0]),
            Err(FitError::TooFewSamples(1))
        );
    }

    #[test]
    fn noisy_fit_matches_derivative_free_minimizer() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let r = [30.0, 28.5, 25.8, 24.1];
        let w = compute_weights(&r).unwrap();
        let f = weighted_line_fit(&t, &r, &w).unwrap();
        let (a1, a2) = brute_force_fit(&t, &r, &w);
        assert!((f.a1 - a1).abs() < 1e-6, "{} vs {a1}", f.a1);
        assert!((f.a2 - a2).abs() < 1e-6, "{} vs {a2}", f.a2);
        // Frozen from the oracle run.
        assert!((f.a1 - -2.04174783).abs() < 1e-6, "{}", f.a1);
        assert!((f.a2 - 30.16034507).abs() < 1e-6, "{}", f.a2);
    }

    #[test]
    fn extrapolation() {
        let fit = LineFit {
            a1: -2.0,
            a2: 30.0,
            t_ref: 1.0,
            n: 3,
            weighted_sse: 0.0,
        };
        assert!((extrapolate_to_lane_change(&fit, 2.0, 2.4).unwrap() - 25.2).abs() < 1e-12);
        assert_eq!(extrapolate_to_lane_change(&fit, 2.0, 2.0).unwrap(), 26.0);
        assert!(matches!(
            extrapolate_to_lane_change(&fit, 2.0, 2.7),
            Err(FitError::StaleFrame(_))
        ));
        assert!(matches!(
            extrapolate_to_lane_change(&fit, 2.0, 1.9),
            Err(FitError::StaleFrame(_))
        ));

        let t = [0.0, 1.0, 2.0, 3.0];
        let r = [30.0, 28.5, 25.8, 24.1];
        let fit = weighted_line_fit(&t, &r, &compute_weights(&r).unwrap()).unwrap();
        let direct = fit.value_at(3.3);
        assert!((extrapolate_to_lane_change(&fit, 3.0, 3.3).unwrap() - direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn exact_recovery(a1 in -5.0..5.0_f64, a2 in 5.0..80.0_f64,
                          w in proptest::collection::vec(0.01..10.0_f64, 8)) {
            let t: Vec<f64> = (0..8).map(|i| 0.5 * i as f64).collect();
            let r: Vec<f64> = t.iter().map(|t| a1 * t + a2).collect();
            let f = weighted_line_fit(&t, &r, &w).unwrap();
            for (&ti, &ri) in t.iter().zip(&r) {
                prop_assert!((f.value_at(ti) - ri).abs() <= 1e-12 * ri.abs().max(1.0) * 10.0);
            }
        }

        #[test]
        fn weight_scale_invariance(noise in proptest::collection::vec(-1.0..1.0_f64, 9),
                                   c in 0.01..100.0_f64) {
            let t: Vec<f64> = (0..9).map(|i| 0.5 * i as f64).collect();
            let r: Vec<f64> = t.iter().zip(&noise).map(|(t, n)| 40.0 - 1.2 * t + n).collect();
            let w = compute_weights(&r).unwrap();
            let ws: Vec<f64> = w.iter().map(|x| x * c).collect();
            let f1 = weighted_line_fit(&t, &r, &w).unwrap();
            let f2 = weighted_line_fit(&t, &r, &ws).unwrap();
            prop_assert!((f1.a1 - f2.a1).abs() < 1e-10);
            prop_assert!((f1.a2 - f2.a2).abs() < 1e-9);
        }

        #[test]
        fn local_optimality(noise in proptest::collection::vec(-2.0..2.0_f64, 9)) {
            let t: Vec<f64> = (0..9).map(|i| 0.5 * i as f64).collect();
            let r: Vec<f64> = t.iter().zip(&noise).map(|(t, n)| 30.0 + 0.8 * t + n).collect();
            let w = compute_weights(&r).unwrap();
            let f = weighted_line_fit(&t, &r, &w).unwrap();
            let sse = |a1: f64, a2: f64| -> f64 {
                t.iter().zip(&r).zip(&w).map(|((t, r), w)| w * (r - a1 * t - a2).powi(2)).sum()
            };
            let best = sse(f.a1, f.a2);
            prop_assert!((best - f.weighted_sse).abs() < 1e-9);
            for (d1, d2) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
                prop_assert!(sse(f.a1 + d1, f.a2 + d2) >= best);
            }
        }

        #[test]
        fn time_shift_equivariance(noise in proptest::collection::vec(-1.0..1.0_f64, 8),
                                   tau in -100.0..100.0_f64) {
            let t: Vec<f64> = (0..8).map(|i| 0.5 * i as f64).collect();
            let r: Vec<f64> = t.iter().zip(&noise).map(|(t, n)| 25.0 - 0.5 * t + n).collect();
            let w = compute_weights(&r).unwrap();
            let ts: Vec<f64> = t.iter().map(|x| x + tau).collect();
            let f1 = weighted_line_fit(&t, &r, &w).unwrap();
            let f2 = weighted_line_fit(&ts, &r, &w).unwrap();
            for &ti in &t {
                prop_assert!((f1.value_at(ti) - f2.value_at(ti + tau)).abs() < 1e-9);
            }
        }
    }
}
