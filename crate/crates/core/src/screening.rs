//! Lane-change detection and the event screening cascade: highway speed,
//! straight road, daytime, and ramp proximity.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{ChannelSeries, Direction, LaneChangeEvent};

/// 55 mph.
pub const HIGHWAY_MIN_SPEED: f64 = 24.6;
/// Maximum heading span over the event window, degrees.
pub const MAX_HEADING_SPAN: f64 = 5.0;
/// Civil dusk.
pub const MAX_DAYTIME_ZENITH: f64 = 96.0;
pub const RAMP_RADIUS_M: f64 = 500.0;
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Track window around the event used for ramp proximity.
pub const RAMP_LEAD_S: f64 = 2.0;
pub const RAMP_TRAIL_S: f64 = 5.0;
/// Offset from a lane center that marks the event boundaries.
pub const BOUNDARY_OFFSET_M: f64 = 0.1;
/// Search horizon for the event boundaries around a jump.
pub const BOUNDARY_SEARCH_S: f64 = 10.0;
/// Re-arm margin below the jump threshold.
pub const JUMP_HYSTERESIS_M: f64 = 0.3;
/// Largest channel gap tolerated inside a screening window.
pub const MAX_CHANNEL_GAP_S: f64 = 0.5;
/// Lookback of the subject-vehicle speed change.
pub const SPEED_CHANGE_WINDOW_S: f64 = 5.0;
const NEAREST_SAMPLE_TOLERANCE_S: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreeningError {
    #[error("lane-offset jump at t={t_lc} s without both boundaries within 10 s")]
    PartialManeuver { t_lc: f64, direction: Direction },
    #[error("screening indeterminate: {0}")]
    Indeterminate(String),
    #[error("event has no lane-change time")]
    MissingLaneChangeTime,
    #[error("invalid ramp database line {line}: {message}")]
    RampDatabase { line: usize, message: String },
}

/// Boundaries of one detected lane change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeBoundaries {
    pub t_start: f64,
    pub t_lc: f64,
    pub t_end: f64,
    pub direction: Direction,
}

/// Finds lane changes as re-anchoring jumps of the lane-offset channel.
///
/// A jump is a step between consecutive samples larger than half the local
/// lane width; the detector re-arms once steps fall below that threshold minus
/// [`JUMP_HYSTERESIS_M`]. `t_lc` is the first sample after the step. With the
/// offset positive to the right, a negative step is a right lane change.
pub fn detect_lane_change(ch: &ChannelSeries, lane_width: &[f64]) -> Vec<Result<LaneChangeBoundaries, ScreeningError>> {
    let off = &ch.lane_offset;
    let t = &ch.t;
    let mut out = Vec::new();
    let mut armed = true;
    for i in 1..off.len().min(t.len()).min(lane_width.len()) {
        let step = off[i] - off[i - 1];
        let threshold = lane_width[i] / 2.0;
        if armed && step.abs() > threshold {
            armed = false;
            let direction = if step < 0.0 { Direction::Right } else { Direction::Left };
            let t_lc = t[i];
            let start = (0..i)
                .rev()
                .take_while(|&j| t[j] >= t_lc - BOUNDARY_SEARCH_S)
                .find(|&j| off[j].abs() <= BOUNDARY_OFFSET_M);
            let end = (i..off.len())
                .take_while(|&j| t[j] <= t_lc + BOUNDARY_SEARCH_S)
                .find(|&j| off[j].abs() <= BOUNDARY_OFFSET_M);
            out.push(match (start, end) {
                (Some(s), Some(e)) => Ok(LaneChangeBoundaries {
                    t_start: t[s],
                    t_lc,
                    t_end: t[e],
                    direction,
                }),
                _ => Err(ScreeningError::PartialManeuver { t_lc, direction }),
            });
        } else if !armed && step.abs() < threshold - JUMP_HYSTERESIS_M {
            armed = true;
        }
    }
    out
}

fn normalize_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Solar zenith angle in degrees, without refraction.
///
/// Low-precision almanac algorithm: mean longitude and anomaly of the sun,
/// ecliptic longitude, right ascension and declination, then the local hour
/// angle from mean sidereal time. Accurate to a few hundredths of a degree
/// over several decades around 2000.
pub fn solar_zenith(lat_deg: f64, lon_deg: f64, utc: DateTime<Utc>) -> f64 {
    let unix = utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9;
    let jd = unix / 86_400.0 + 2_440_587.5;
    let n = jd - 2_451_545.0;
    let hour_ut = (unix / 3600.0).rem_euclid(24.0);

    let mean_lon = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let anomaly = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let ecl_lon = (mean_lon + 1.915 * anomaly.sin() + 0.020 * (2.0 * anomaly).sin()).to_radians();
    let obliquity = (23.439 - 0.000_000_4 * n).to_radians();

    let ra = (obliquity.cos() * ecl_lon.sin()).atan2(ecl_lon.cos());
    let dec = (obliquity.sin() * ecl_lon.sin()).asin();

    let gmst_h = (6.697_375 + 0.065_709_824_2 * n + hour_ut).rem_euclid(24.0);
    let lmst_deg = gmst_h * 15.0 + lon_deg;
    let hour_angle = normalize_degrees(lmst_deg - ra.to_degrees()).to_radians();

    let lat = lat_deg.to_radians();
    let cos_z = lat.sin() * dec.sin() + lat.cos() * dec.cos() * hour_angle.cos();
    cos_z.clamp(-1.0, 1.0).acos().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_M`], meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Intersection points of ramp lanes with through lanes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RampDatabase {
    pub points: Vec<GeoPoint>,
}

impl RampDatabase {
    /// One `lat,lon` record per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self, ScreeningError> {
        let mut points = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ScreeningError::RampDatabase { line: i + 1, message };
            let (lat, lon) = line.split_once(',').ok_or_else(|| err("expected lat,lon".into()))?;
            let lat: f64 = lat.trim().parse().map_err(|e| err(format!("{e}")))?;
            let lon: f64 = lon.trim().parse().map_err(|e| err(format!("{e}")))?;
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(err(format!("coordinate out of range ({lat}, {lon})")));
            }
            points.push(GeoPoint::new(lat, lon));
        }
        Ok(Self { points })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScreeningError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScreeningError::RampDatabase {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// True when any track point lies within [`RAMP_RADIUS_M`] of a ramp point.
pub fn ramp_proximity(track: &[GeoPoint], db: &RampDatabase) -> bool {
    if db.is_empty() {
        tracing::info!("ramp database is empty; no event is classified as ramp");
        return false;
    }
    track
        .iter()
        .any(|p| db.points.iter().any(|r| haversine_m(*p, *r) <= RAMP_RADIUS_M))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub highway: bool,
    pub straight: bool,
    pub daytime: bool,
    /// Routes the event to the ramp subset; does not fail it.
    pub ramp_region: bool,
    pub passes: bool,
}

impl ScreeningResult {
    pub fn new(highway: bool, straight: bool, daytime: bool, ramp_region: bool) -> Self {
        Self {
            highway,
            straight,
            daytime,
            ramp_region,
            passes: highway && straight && daytime,
        }
    }
}

/// Max minus min of the unwrapped heading sequence, degrees.
pub fn heading_span(headings: &[f64]) -> f64 {
    let mut iter = headings.iter();
    let Some(&first) = iter.next() else {
        return 0.0;
    };
    let (mut cur, mut lo, mut hi) = (first, first, first);
    let mut prev = first;
    for &h in iter {
        cur += normalize_degrees(h - prev);
        prev = h;
        lo = lo.min(cur);
        hi = hi.max(cur);
    }
    hi - lo
}

fn check_coverage(ch: &ChannelSeries, lo: f64, hi: f64) -> Result<std::ops::Range<usize>, ScreeningError> {
    let w = ch.window(lo, hi);
    if w.is_empty() {
        return Err(ScreeningError::Indeterminate(format!(
            "no channel samples in [{lo}, {hi}]"
        )));
    }
    let mut times = Vec::with_capacity(w.len() + 2);
    times.push(lo);
    times.extend(ch.t[w.clone()].iter().copied());
    times.push(hi);
    if let Some(g) = times.windows(2).find(|p| p[1] - p[0] > MAX_CHANNEL_GAP_S + 1e-9) {
        return Err(ScreeningError::Indeterminate(format!(
            "channel gap of {:.3} s at t={}",
            g[1] - g[0],
            g[0]
        )));
    }
    Ok(w)
}

pub fn screen_event(ev: &LaneChangeEvent, db: &RampDatabase) -> Result<ScreeningResult, ScreeningError> {
    let t_lc = ev.t_lc.ok_or(ScreeningError::MissingLaneChangeTime)?;
    let ch = &ev.channels;
    let w = check_coverage(ch, ev.t_start, ev.t_end)?;

    let min_speed = ch.speed[w.clone()].iter().copied().fold(f64::INFINITY, f64::min);
    let highway = min_speed >= HIGHWAY_MIN_SPEED;
    let straight = heading_span(&ch.heading[w]) <= MAX_HEADING_SPAN;

    let i = ch
        .nearest_index(t_lc)
        .ok_or_else(|| ScreeningError::Indeterminate("empty channels".into()))?;
    let zenith = solar_zenith(ch.lat[i], ch.lon[i], ch.utc_at(t_lc));
    let daytime = (0.0..=MAX_DAYTIME_ZENITH).contains(&zenith);

    let track: Vec<GeoPoint> = ch
        .window(ev.t_start - RAMP_LEAD_S, ev.t_end + RAMP_TRAIL_S)
        .map(|k| GeoPoint::new(ch.lat[k], ch.lon[k]))
        .collect();
    let ramp_region = ramp_proximity(&track, db);

    Ok(ScreeningResult::new(highway, straight, daytime, ramp_region))
}

/// Subject-vehicle speed at `t_lc` minus speed five seconds earlier,
/// using the nearest samples.
pub fn sv_speed_change(ch: &ChannelSeries, t_lc: f64) -> Result<f64, ScreeningError> {
    let lookup = |t: f64| {
        ch.nearest_index(t)
            .filter(|&i| (ch.t[i] - t).abs() <= NEAREST_SAMPLE_TOLERANCE_S)
            .map(|i| ch.speed[i])
            .ok_or_else(|| ScreeningError::Indeterminate(format!("no speed sample near t={t}")))
    };
    Ok(lookup(t_lc)? - lookup(t_lc - SPEED_CHANGE_WINDOW_S)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn utc(y: i32, m: u32, d: u32, h: u32, mi: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, mi, 0).unwrap()
    }

    fn channels(t: Vec<f64>, lane_offset: Vec<f64>) -> ChannelSeries {
        let n = t.len();
        ChannelSeries {
            t,
            speed: vec![26.0; n],
            heading: vec![90.0; n],
            lane_offset,
            lat: vec![42.3; n],
            lon: vec![-83.7; n],
            lane_width: None,
            utc_anchor: utc(2008, 7, 1, 17, 0),
        }
    }

    /// Right lane change: offset ramps 0 -> 1.8 over 3 s, re-anchors to
    /// -1.8 and returns to 0 over the next 3 s.
    fn ramp_trace(t0: f64) -> ChannelSeries {
        let t: Vec<f64> = (0..200).map(|k| t0 + k as f64 / 10.0).collect();
        let off = (0..200)
            .map(|k| {
                let s = k as f64 / 10.0;
                if s < 5.0 {
                    0.0
                } else if s < 8.0 {
                    1.8 * (s - 5.0) / 3.0
                } else if s < 11.0 {
                    -1.8 * (11.0 - s) / 3.0
                } else {
                    0.0
                }
            })
            .collect();
        channels(t, off)
    }

    #[test]
    fn detects_constructed_lane_change() {
        let ch = ramp_trace(0.0);
        let ev = detect_lane_change(&ch, &[3.6; 200]);
        assert_eq!(ev.len(), 1);
        let b = ev[0].clone().unwrap();
        assert_eq!(b.direction, Direction::Right);
        // Jump between samples 79 (1.78 m) and 80 (-1.8 m).
        assert_eq!(b.t_lc, 8.0);
        // |offset| <= 0.1 last holds at 5.1 s (0.06 m); 5.2 s gives 0.12 m.
        assert_eq!(b.t_start, 5.1);
        // First |offset| <= 0.1 after the jump: 10.9 s (-0.06 m).
        assert_eq!(b.t_end, 10.9);
    }

    #[test]
    fn mirrored_trace_is_left_change() {
        let mut ch = ramp_trace(0.0);
        ch.lane_offset.iter_mut().for_each(|o| *o = -*o);
        let b = detect_lane_change(&ch, &[3.6; 200])[0].clone().unwrap();
        assert_eq!(b.direction, Direction::Left);
    }

    #[test]
    fn time_translation() {
        let a = detect_lane_change(&ramp_trace(0.0), &[3.6; 200])[0].clone().unwrap();
        let b = detect_lane_change(&ramp_trace(100.0), &[3.6; 200])[0].clone().unwrap();
        assert!((b.t_lc - a.t_lc - 100.0).abs() < 1e-9);
        assert!((b.t_start - a.t_start - 100.0).abs() < 1e-9);
        assert!((b.t_end - a.t_end - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_events_on_flat_offset() {
        let ch = channels((0..100).map(|k| k as f64 / 10.0).collect(), vec![0.0; 100]);
        assert!(detect_lane_change(&ch, &[3.6; 100]).is_empty());
    }

    #[test]
    fn two_jumps_two_events() {
        let a = ramp_trace(0.0);
        let mut off = a.lane_offset.clone();
        off.extend(a.lane_offset.iter().map(|o| -o));
        // 200 samples of each, so the second event starts 20 s later. Pad to
        // get the two jumps 30 s apart.
        off.splice(200..200, std::iter::repeat_n(0.0, 100));
        let t = (0..off.len()).map(|k| k as f64 / 10.0).collect();
        let ch = channels(t, off);
        let w = vec![3.6; ch.len()];
        let ev: Vec<_> = detect_lane_change(&ch, &w).into_iter().map(Result::unwrap).collect();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].direction, Direction::Right);
        assert_eq!(ev[1].direction, Direction::Left);
        assert!((ev[1].t_lc - ev[0].t_lc - 30.0).abs() < 1e-9);
    }

    #[test]
    fn partial_maneuver_rejected() {
        // Offset never returns near the new lane center.
        let off: Vec<f64> = (0..100)
            .map(|k| {
                if k < 50 {
                    0.05 * k as f64 / 50.0 + 1.7 * (k as f64 / 50.0)
                } else {
                    -1.0
                }
            })
            .collect();
        let ch = channels((0..100).map(|k| k as f64 / 10.0).collect(), off);
        let ev = detect_lane_change(&ch, &[3.6; 100]);
        assert!(matches!(ev[0], Err(ScreeningError::PartialManeuver { .. })));
    }

    #[test]
    fn zenith_equinox_noon_equator() {
        // Equation of time is about -7.5 min on 20 March 2024, so the sun
        // transits the Greenwich meridian near 12:07:30 UTC.
        let t = Utc.with_ymd_and_hms(2024, 3, 20, 12, 7, 30).unwrap();
        assert!(solar_zenith(0.0, 0.0, t) < 1.0);
    }

    #[test]
    fn zenith_new_year_greenwich() {
        let z = solar_zenith(0.0, 0.0, utc(2000, 1, 1, 12, 0));
        assert!((z - 23.0).abs() < 0.5, "{z}");
    }

    #[test]
    fn midnight_is_night() {
        // Ann Arbor, local midnight EDT.
        let z = solar_zenith(42.28, -83.74, utc(2008, 7, 2, 4, 0));
        assert!(z > MAX_DAYTIME_ZENITH, "{z}");
    }

    #[test]
    fn haversine_properties() {
        let a = GeoPoint::new(42.3, -83.7);
        let b = GeoPoint::new(42.31, -83.65);
        assert_eq!(haversine_m(a, a), 0.0);
        assert_eq!(haversine_m(a, b), haversine_m(b, a));
        let deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let north = GeoPoint::new(a.lat + 1000.0 / deg, a.lon);
        assert!((haversine_m(a, north) - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn ramp_radius_edges() {
        let p = GeoPoint::new(42.3, -83.7);
        let near = RampDatabase {
            points: vec![GeoPoint::new(p.lat + 499.0 / 111_195.0, p.lon)],
        };
        let far = RampDatabase {
            points: vec![GeoPoint::new(p.lat + 501.0 / 111_195.0, p.lon)],
        };
        assert!(ramp_proximity(&[p], &RampDatabase { points: vec![p] }));
        assert!(ramp_proximity(&[p], &near));
        assert!(!ramp_proximity(&[p], &far));
        assert!(!ramp_proximity(&[p], &RampDatabase::default()));
    }

    #[test]
    fn ramp_db_parsing() {
        let db = RampDatabase::parse("# ramps\n42.1, -83.2\n\n42.2,-83.3\n").unwrap();
        assert_eq!(db.points.len(), 2);
        assert!(matches!(
            RampDatabase::parse("42.1 -83.2"),
            Err(ScreeningError::RampDatabase { line: 1, .. })
        ));
        assert!(RampDatabase::parse("95.0,0.0").is_err());
    }

    #[test]
    fn heading_span_wraps_and_shifts() {
        let h = [358.0, 359.0, 0.5, 1.5, 0.0];
        assert!((heading_span(&h) - 3.5).abs() < 1e-12);
        let shifted: Vec<f64> = h.iter().map(|x| (x + 90.0) % 360.0).collect();
        assert!((heading_span(&shifted) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn speed_change() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 / 10.0).collect();
        let mut ch = channels(t.clone(), vec![0.0; 100]);
        assert_eq!(sv_speed_change(&ch, 8.0).unwrap(), 0.0);
        ch.speed = t.iter().map(|s| 25.0 + 0.4 * s).collect();
        assert!((sv_speed_change(&ch, 8.0).unwrap() - 2.0).abs() < 1e-12);
        ch.speed = t.iter().map(|s| 25.0 + (1.3 * s).sin()).collect();
        let expected = ch.speed[80] - ch.speed[30];
        assert_eq!(sv_speed_change(&ch, 8.0).unwrap(), expected);
        assert!(matches!(
            sv_speed_change(&ch, 3.0),
            Err(ScreeningError::Indeterminate(_))
        ));
    }
}
