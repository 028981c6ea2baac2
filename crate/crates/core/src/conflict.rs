//! Time-to-collision, required deceleration and the warning rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::Direction;

/// Range rates smaller than this in magnitude give no projected closure.
pub const MIN_RANGE_RATE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConflictError {
    #[error("range {0} m is not positive; no braking model applies")]
    NonPositiveRange(f64),
}

/// `-R / Rdot`. Positive when closing, negative when separating and `None`
/// when the range rate is effectively zero.
pub fn time_to_collision(range: f64, range_rate: f64) -> Option<f64> {
    (range_rate.abs() >= MIN_RANGE_RATE).then(|| -range / range_rate)
}

/// Constant deceleration the POV needs to avoid closing the gap,
/// `Rdot^2 / (2 R)`; zero for non-closing pairs.
pub fn required_deceleration(range: f64, range_rate: f64) -> Result<f64, ConflictError> {
    if !(range > 0.0) {
        return Err(ConflictError::NonPositiveRange(range));
    }
    if range_rate < 0.0 {
        Ok(range_rate * range_rate / (2.0 * range))
    } else {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictAssessment {
    pub ttc: Option<f64>,
    pub d_req: f64,
    pub closing: bool,
}

pub fn assess(range: f64, range_rate: f64) -> Result<ConflictAssessment, ConflictError> {
    Ok(ConflictAssessment {
        ttc: time_to_collision(range, range_rate),
        d_req: required_deceleration(range, range_rate)?,
        closing: range_rate < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarningThresholds {
    #[serde(rename = "ttc_max_s")]
    pub ttc_max: f64,
    #[serde(rename = "d_req_min_mps2")]
    pub d_req_min: f64,
    #[serde(rename = "right_range_min_m")]
    pub right_range_min: f64,
}

impl Default for WarningThresholds {
    fn default() -> Self {
        Self {
            ttc_max: 4.0,
            d_req_min: 0.8,
            right_range_min: 12.7,
        }
    }
}

impl WarningThresholds {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("ttc_max_s", self.ttc_max),
            ("d_req_min_mps2", self.d_req_min),
            ("right_range_min_m", self.right_range_min),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("threshold {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningFlags {
    pub ttc_warning: bool,
    pub d_req_warning: bool,
    pub range_warning: bool,
}

impl WarningFlags {
    pub fn any(&self) -> bool {
        self.ttc_warning || self.d_req_warning || self.range_warning
    }
}

pub fn warning_decision(
    direction: Direction,
    range: f64,
    range_rate: f64,
    th: &WarningThresholds,
) -> Result<WarningFlags, ConflictError> {
    let d_req = required_deceleration(range, range_rate)?;
    let ttc = time_to_collision(range, range_rate);
    Ok(WarningFlags {
        ttc_warning: ttc.is_some_and(|t| t > 0.0 && t < th.ttc_max),
        d_req_warning: d_req > th.d_req_min,
        range_warning: direction == Direction::Right && range < th.right_range_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ttc_signs() {
        assert_eq!(time_to_collision(20.0, -2.0), Some(10.0));
        assert_eq!(time_to_collision(20.0, 2.0), Some(-10.0));
        assert_eq!(time_to_collision(20.0, 0.0), None);
        assert_eq!(time_to_collision(20.0, 1e-12), None);
    }

    #[test]
    fn d_req_values() {
        assert_eq!(required_deceleration(20.0, -2.0).unwrap(), 0.1);
        assert_eq!(required_deceleration(20.0, 3.0).unwrap(), 0.0);
        assert_eq!(
            required_deceleration(0.0, -1.0),
            Err(ConflictError::NonPositiveRange(0.0))
        );
    }

    #[test]
    fn warning_examples() {
        let th = WarningThresholds::default();
        let f = warning_decision(Direction::Left, 6.0, -2.0, &th).unwrap();
        assert!(f.ttc_warning);
        let f = warning_decision(Direction::Left, 4.0, -2.6, &th).unwrap();
        assert!(f.d_req_warning);
        let f = warning_decision(Direction::Right, 12.0, 1.0, &th).unwrap();
        assert_eq!(
            f,
            WarningFlags {
                ttc_warning: false,
                d_req_warning: false,
                range_warning: true
            }
        );
        let f = warning_decision(Direction::Right, 13.0, 1.0, &th).unwrap();
        assert!(!f.any());
        // Left lane changes never raise the range flag.
        assert!(!warning_decision(Direction::Left, 5.0, 1.0, &th).unwrap().any());
    }

    #[test]
    fn thresholds_json_names() {
        let th: WarningThresholds =
            serde_json::from_str(r#"{"ttc_max_s": 3.0, "d_req_min_mps2": 1.0, "right_range_min_m": 10.0}"#).unwrap();
        assert_eq!(th.ttc_max, 3.0);
        assert!(th.validate().is_ok());
        assert!(WarningThresholds { ttc_max: 0.0, ..th }.validate().is_err());
    }

    proptest! {
        #[test]
        fn both_d_req_forms_agree(r in 0.5..120.0_f64, rdot in -30.0..-0.01_f64) {
            let ttc = time_to_collision(r, rdot).unwrap();
            let d = required_deceleration(r, rdot).unwrap();
            prop_assert!((d - (-rdot / (2.0 * ttc))).abs() <= 1e-12 * d.max(1.0));
            prop_assert!((d * 2.0 * ttc + rdot).abs() <= 1e-12 * rdot.abs().max(1.0));
        }

        #[test]
        fn scale_coupling(r in 0.5..100.0_f64, rdot in -20.0..20.0_f64, c in 0.1..10.0_f64) {
            prop_assume!(rdot.abs() > 1e-3);
            let t1 = time_to_collision(r, rdot).unwrap();
            let t2 = time_to_collision(c * r, c * rdot).unwrap();
            prop_assert!((t1 - t2).abs() <= 1e-12 * t1.abs().max(1.0));
            let d1 = required_deceleration(r, rdot).unwrap();
            let d2 = required_deceleration(c * r, c * rdot).unwrap();
            prop_assert!((d2 - c * d1).abs() <= 1e-12 * d2.max(1.0));
        }

        #[test]
        fn sign_discipline(r in 0.5..100.0_f64, rdot in -20.0..20.0_f64) {
            prop_assume!(rdot.abs() > 1e-6);
            let a = assess(r, rdot).unwrap();
            if rdot < 0.0 {
                prop_assert!(a.ttc.unwrap() > 0.0 && a.closing);
            } else {
                prop_assert!(a.ttc.unwrap() < 0.0 && a.d_req == 0.0);
            }
        }

        #[test]
        fn d_req_monotone(r in 1.0..100.0_f64, rdot in -20.0..-0.1_f64, dr in 0.01..5.0_f64) {
            let base = required_deceleration(r, rdot).unwrap();
            prop_assert!(required_deceleration(r, rdot - dr).unwrap() > base);
            prop_assert!(required_deceleration(r + dr, rdot).unwrap() < base);
        }
    }
}
