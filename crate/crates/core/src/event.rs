//! Lane-change events and the vehicle channels that come with them.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::gap::FrameAnnotation;
use crate::screening::ScreeningResult;

/// Lane change direction of the subject vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Ramp or non-ramp region, decided by proximity to ramp intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    Ramp,
    NonRamp,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Ramp => "ramp",
            Subset::NonRamp => "non-ramp",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// 10 Hz vehicle channels. Times are seconds relative to the event start;
/// `utc_anchor` is the absolute instant of `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelSeries {
    pub t: Vec<f64>,
    pub speed: Vec<f64>,
    pub heading: Vec<f64>,
    /// Offset of the truck center from the tracked lane center, meters,
    /// positive to the right.
    pub lane_offset: Vec<f64>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    /// Lane width reported by the lane tracker, when recorded.
    pub lane_width: Option<Vec<f64>>,
    pub utc_anchor: DateTime<Utc>,
}

impl ChannelSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.t.len();
        let lens = [
            ("speed", self.speed.len()),
            ("heading", self.heading.len()),
            ("lane_offset", self.lane_offset.len()),
            ("lat", self.lat.len()),
            ("lon", self.lon.len()),
            ("lane_width", self.lane_width.as_ref().map_or(n, Vec::len)),
        ];
        if let Some((name, len)) = lens.iter().find(|(_, l)| *l != n) {
            return Err(format!("channel {name} has {len} samples, expected {n}"));
        }
        if let Some(i) = self.t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(format!("channel time not strictly increasing at sample {}", i + 1));
        }
        Ok(())
    }

    pub fn utc_at(&self, t: f64) -> DateTime<Utc> {
        self.utc_anchor + Duration::microseconds((t * 1e6).round() as i64)
    }

    /// Index of the sample closest in time to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.t.is_empty() {
            return None;
        }
        let i = self.t.partition_point(|&s| s < t);
        let candidates = [i.checked_sub(1), (i < self.t.len()).then_some(i)];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (self.t[a] - t).abs().total_cmp(&(self.t[b] - t).abs()))
    }

    /// Indices of samples with `lo <= t <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.t.partition_point(|&s| s < lo);
        let b = self.t.partition_point(|&s| s <= hi);
        a..b.max(a)
    }

    /// Median tracker lane width over `[t_lc - 5 s, t_lc]`.
    pub fn reference_lane_width(&self, t_lc: f64) -> Option<f64> {
        let widths = self.lane_width.as_ref()?;
        let mut vals: Vec<f64> = self
            .window(t_lc - 5.0, t_lc)
            .map(|i| widths[i])
            .filter(|w| w.is_finite() && *w > 0.0)
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(f64::total_cmp);
        let m = vals.len() / 2;
        Some(if vals.len() % 2 == 1 {
            vals[m]
        } else {
            (vals[m - 1] + vals[m]) / 2.0
        })
    }
}

/// The five annotated feature points of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerPoints {
    pub left: [PixelPoint; 2],
    pub right: [PixelPoint; 2],
    pub pov: PixelPoint,
}

/// A captured rear-view frame, annotated or not.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub t: f64,
    pub image: Option<String>,
    pub points: Option<MarkerPoints>,
}

impl EventFrame {
    pub fn annotation(&self) -> Option<FrameAnnotation> {
        self.points.map(|p| FrameAnnotation {
            t: self.t,
            left_marker: p.left,
            right_marker: p.right,
            pov: p.pov,
            image_ref: self.image.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneChangeEvent {
    pub event_id: String,
    pub direction: Direction,
    pub t_start: f64,
    pub t_end: f64,
    pub t_lc: Option<f64>,
    /// Sorted by time.
    pub frames: Vec<EventFrame>,
    /// Camera to trailer rear, meters.
    pub trailer_length: f64,
    /// Target lane width, meters.
    pub lane_width: f64,
    pub channels: ChannelSeries,
    pub subset: Option<Subset>,
    pub scenario_label: Option<String>,
    pub marker_pattern: Option<String>,
    pub has_pov: Option<bool>,
    pub screening: Option<ScreeningResult>,
}

impl LaneChangeEvent {
    pub fn has_video(&self) -> bool {
        !self.frames.is_empty()
    }

    /// Explicit POV flag when recorded, otherwise whether any frame carries
    /// an annotation.
    pub fn has_pov(&self) -> bool {
        self.has_pov
            .unwrap_or_else(|| self.frames.iter().any(|f| f.points.is_some()))
    }

    /// Lane width used for ranging: the tracker median before the lane change
    /// when recorded, the metadata value otherwise.
    pub fn reference_lane_width(&self) -> f64 {
        self.t_lc
            .and_then(|t| self.channels.reference_lane_width(t))
            .unwrap_or(self.lane_width)
    }
}

/// Keeps ramp events whose marker pattern equals `pattern`.
pub fn filter_by_marker_pattern<'a>(
    events: &'a [LaneChangeEvent],
    pattern: &'a str,
) -> impl Iterator<Item = &'a LaneChangeEvent> + 'a {
    events
        .iter()
        .filter(move |e| e.marker_pattern.as_deref() == Some(pattern))
}
