//! Event bundles, catalogs and result export.
//!
//! An event bundle is one directory:
//!
//! ```text
//! <event>/
//!   event.json               metadata, UTC anchor, optional ground truth
//!   channels.csv             t_s,speed_mps,heading_deg,lane_offset_m,lat_deg,lon_deg[,lane_width_m]
//!   radar.csv                t_s,range_m (optional)
//!   frames/annotations.json  {"frames": [{"t_s", "image", "left", "right", "pov"}]}
//!   frames/*.png             still images (optional)
//! ```
//!
//! Times are seconds from the event start. Files written by [`save_event_bundle`]
//! are canonical: loading and saving them again reproduces every byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::camera::PixelPoint;
use crate::event::{ChannelSeries, Direction, EventFrame, LaneChangeEvent, MarkerPoints, Subset};
use crate::screening::ScreeningResult;
use crate::stats::{AppearanceRow, TimedRange};
use crate::synthetic::GroundTruth;
use crate::trajectory::GapResult;

pub const METADATA_FILE: &str = "event.json";
pub const CHANNELS_FILE: &str = "channels.csv";
pub const RADAR_FILE: &str = "radar.csv";
pub const FRAMES_DIR: &str = "frames";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const CATALOG_FILE: &str = "catalog.json";

const CHANNEL_COLUMNS: [&str; 6] = ["t_s", "speed_mps", "heading_deg", "lane_offset_m", "lat_deg", "lon_deg"];
const LANE_WIDTH_COLUMN: &str = "lane_width_m";

/// One problem found while validating a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaViolation {
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl SchemaViolation {
    fn new(file: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            file: file.into(),
            field: field.map(Into::into),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{}: {}: {}", self.file, field, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{} schema violation(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<SchemaViolation>),
    #[error("duplicate event_id {0:?} in catalog")]
    DuplicateEventId(String),
    #[error("no frame at t={0} s")]
    NoSuchFrame(f64),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

fn join_violations(v: &[SchemaViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl StoreError {
    pub fn violations(&self) -> &[SchemaViolation] {
        match self {
            StoreError::Invalid(v) => v,
            _ => &[],
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Metadata as stored in `event.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetadata {
    pub event_id: String,
    pub direction: Direction,
    pub t_lc_s: f64,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub trailer_length_m: f64,
    pub lane_width_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Subset>,
    pub utc_anchor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_pov: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

/// One entry of `frames/annotations.json`. The three point fields are
/// present together or not at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pov: Option<[f64; 2]>,
}

impl FrameRecord {
    pub fn from_frame(f: &EventFrame) -> Self {
        let uv = |p: PixelPoint| [p.u, p.v];
        Self {
            t_s: f.t,
            image: f.image.clone(),
            left: f.points.map(|p| [uv(p.left[0]), uv(p.left[1])]),
            right: f.points.map(|p| [uv(p.right[0]), uv(p.right[1])]),
            pov: f.points.map(|p| uv(p.pov)),
        }
    }

    fn to_frame(&self) -> Result<EventFrame, String> {
        let pp = |a: [f64; 2]| PixelPoint::new(a[0], a[1]);
        let points = match (self.left, self.right, self.pov) {
            (Some(l), Some(r), Some(p)) => {
                if l.iter()
                    .chain(r.iter())
                    .chain(std::iter::once(&p))
                    .flatten()
                    .any(|v| !v.is_finite())
                {
                    return Err("non-finite point coordinate".into());
                }
                Some(MarkerPoints {
                    left: [pp(l[0]), pp(l[1])],
                    right: [pp(r[0]), pp(r[1])],
                    pov: pp(p),
                })
            }
            (None, None, None) => None,
            _ => return Err("left, right and pov must be given together".into()),
        };
        Ok(EventFrame {
            t: self.t_s,
            image: self.image.clone(),
            points,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AnnotationsFile {
    frames: Vec<FrameRecord>,
}

/// A validated event with its optional radar samples and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EventBundle {
    pub event: LaneChangeEvent,
    pub radar: Option<Vec<TimedRange>>,
    pub ground_truth: Option<GroundTruth>,
}

impl EventBundle {
    pub fn metadata(&self) -> EventMetadata {
        let ev = &self.event;
        EventMetadata {
            event_id: ev.event_id.clone(),
            direction: ev.direction,
            t_lc_s: ev.t_lc.unwrap_or(f64::NAN),
            t_start_s: ev.t_start,
            t_end_s: ev.t_end,
            trailer_length_m: ev.trailer_length,
            lane_width_m: ev.lane_width,
            subset: ev.subset,
            utc_anchor: ev.channels.utc_anchor.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            scenario_label: ev.scenario_label.clone(),
            marker_pattern: ev.marker_pattern.clone(),
            has_pov: ev.has_pov,
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn frame_records(&self) -> Vec<FrameRecord> {
        self.event.frames.iter().map(FrameRecord::from_frame).collect()
    }

    /// Index of the frame at `t`, matched to within a microsecond.
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        self.event.frames.iter().position(|f| (f.t - t).abs() <= 1e-6)
    }
}

const REQUIRED_METADATA: [&str; 9] = [
    "event_id",
    "direction",
    "t_lc_s",
    "t_start_s",
    "t_end_s",
    "trailer_length_m",
    "lane_width_m",
    "utc_anchor",
    "subset",
];

fn check_metadata(v: &Value, out: &mut Vec<SchemaViolation>) -> Option<EventMetadata> {
    let Some(obj) = v.as_object() else {
        out.push(SchemaViolation::new(METADATA_FILE, None, "expected a JSON object"));
        return None;
    };
    let before = out.len();
    for field in REQUIRED_METADATA {
        // `subset` may be null when the region is still to be decided.
        if field == "subset" {
            continue;
        }
        if obj.get(field).is_none_or(Value::is_null) {
            out.push(SchemaViolation::new(
                METADATA_FILE,
                Some(field),
                "required field missing",
            ));
        }
    }
    if out.len() > before {
        return None;
    }
    let meta: EventMetadata = match serde_json::from_value(v.clone()) {
        Ok(m) => m,
        Err(e) => {
            out.push(SchemaViolation::new(METADATA_FILE, None, e.to_string()));
            return None;
        }
    };
    let mut bad = |field: &str, msg: String| out.push(SchemaViolation::new(METADATA_FILE, Some(field), msg));
    if meta.event_id.trim().is_empty() {
        bad("event_id", "must not be empty".into());
    }
    for (field, val) in [
        ("t_lc_s", meta.t_lc_s),
        ("t_start_s", meta.t_start_s),
        ("t_end_s", meta.t_end_s),
    ] {
        if !val.is_finite() {
            bad(field, format!("must be finite, got {val}"));
        }
    }
    if !(meta.t_start_s <= meta.t_lc_s && meta.t_lc_s <= meta.t_end_s) {
        bad(
            "t_lc_s",
            format!(
                "must lie in [t_start_s, t_end_s] = [{}, {}]",
                meta.t_start_s, meta.t_end_s
            ),
        );
    }
    if !(meta.trailer_length_m >= 0.0 && meta.trailer_length_m.is_finite()) {
        bad(
            "trailer_length_m",
            format!("must be non-negative, got {}", meta.trailer_length_m),
        );
    }
    if !(meta.lane_width_m > 0.0 && meta.lane_width_m.is_finite()) {
        bad("lane_width_m", format!("must be positive, got {}", meta.lane_width_m));
    }
    if DateTime::parse_from_rfc3339(&meta.utc_anchor).is_err() {
        bad(
            "utc_anchor",
            format!("not an RFC 3339 timestamp: {:?}", meta.utc_anchor),
        );
    }
    Some(meta)
}

fn parse_channels(text: &str, anchor: DateTime<Utc>, out: &mut Vec<SchemaViolation>) -> Option<ChannelSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            out.push(SchemaViolation::new(CHANNELS_FILE, None, e.to_string()));
            return None;
        }
    };
    let mut idx = Vec::with_capacity(CHANNEL_COLUMNS.len());
    for col in CHANNEL_COLUMNS {
        match headers.iter().position(|h| h == col) {
            Some(i) => idx.push(i),
            None => out.push(SchemaViolation::new(
                CHANNELS_FILE,
                Some(col),
                "required column missing",
            )),
        }
    }
    if idx.len() != CHANNEL_COLUMNS.len() {
        return None;
    }
    let width_idx = headers.iter().position(|h| h == LANE_WIDTH_COLUMN);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); CHANNEL_COLUMNS.len()];
    let mut widths = width_idx.map(|_| Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let row = line + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.push(SchemaViolation::new(CHANNELS_FILE, None, format!("row {row}: {e}")));
                return None;
            }
        };
        let num = |i: usize, name: &str| -> Result<f64, SchemaViolation> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| SchemaViolation::new(CHANNELS_FILE, Some(name), format!("row {row}: not a number")))
        };
        for (k, &i) in idx.iter().enumerate() {
            match num(i, CHANNEL_COLUMNS[k]) {
                Ok(v) => cols[k].push(v),
                Err(v) => {
                    out.push(v);
                    return None;
                }
            }
        }
        if let (Some(i), Some(w)) = (width_idx, widths.as_mut()) {
            // An empty lane-width cell means the lane tracker had no estimate.
            let cell = rec.get(i).unwrap_or("");
            w.push(if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse().unwrap_or(f64::NAN)
            });
        }
    }
    let mut it = cols.into_iter();
    let mut next = || it.next().unwrap_or_default();
    let ch = ChannelSeries {
        t: next(),
        speed: next(),
        heading: next(),
        lane_offset: next(),
        lat: next(),
        lon: next(),
        lane_width: widths,
        utc_anchor: anchor,
    };
    if ch.is_empty() {
        out.push(SchemaViolation::new(CHANNELS_FILE, None, "no samples"));
        return None;
    }
    if let Err(e) = ch.validate() {
        out.push(SchemaViolation::new(CHANNELS_FILE, Some("t_s"), e));
        return None;
    }
    Some(ch)
}

fn parse_radar(text: &str, out: &mut Vec<SchemaViolation>) -> Option<Vec<TimedRange>> {
    #[derive(Deserialize)]
    struct Row {
        t_s: f64,
        range_m: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, rec) in rdr.deserialize::<Row>().enumerate() {
        match rec {
            Ok(r) => rows.push(TimedRange::new(r.t_s, r.range_m)),
            Err(e) => {
                out.push(SchemaViolation::new(RADAR_FILE, None, format!("row {}: {e}", line + 2)));
                return None;
            }
        }
    }
    Some(rows)
}

fn parse_frames(text: &str, out: &mut Vec<SchemaViolation>) -> Option<Vec<EventFrame>> {
    let file = format!("{FRAMES_DIR}/{ANNOTATIONS_FILE}");
    let parsed: AnnotationsFile = match serde_json::from_str(text) {
        Ok(a) => a,
        Err(e) => {
            out.push(SchemaViolation::new(&file, None, e.to_string()));
            return None;
        }
    };
    let mut frames = Vec::with_capacity(parsed.frames.len());
    let before = out.len();
    for (i, rec) in parsed.frames.iter().enumerate() {
        if !rec.t_s.is_finite() {
            out.push(SchemaViolation::new(
                &file,
                Some("t_s"),
                format!("frame {i}: not finite"),
            ));
            continue;
        }
        match rec.to_frame() {
            Ok(f) => frames.push(f),
            Err(e) => out.push(SchemaViolation::new(
                &file,
                Some("frames"),
                format!("frame {i} (t_s={}): {e}", rec.t_s),
            )),
        }
    }
    for (i, w) in frames.windows(2).enumerate() {
        if w[1].t == w[0].t {
            out.push(SchemaViolation::new(
                &file,
                Some("t_s"),
                format!("duplicate frame timestamp {} at frame {}", w[1].t, i + 1),
            ));
        } else if w[1].t < w[0].t {
            out.push(SchemaViolation::new(
                &file,
                Some("t_s"),
                format!("frames out of order: {} follows {} at frame {}", w[1].t, w[0].t, i + 1),
            ));
        }
    }
    (out.len() == before).then_some(frames)
}

fn read_text(path: &Path) -> Result<Option<String>, StoreError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

/// Loads and validates the bundle in `dir`. All violations found are
/// reported together.
pub fn load_event_bundle(dir: impl AsRef<Path>) -> Result<EventBundle, StoreError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(io_err(dir, "not a directory"));
    }
    let mut out = Vec::new();

    let meta = match read_text(&dir.join(METADATA_FILE))? {
        None => {
            out.push(SchemaViolation::new(METADATA_FILE, None, "file missing"));
            None
        }
        Some(text) => match serde_json::from_str::<Value>(&text) {
            Ok(v) => check_metadata(&v, &mut out),
            Err(e) => {
                out.push(SchemaViolation::new(METADATA_FILE, None, e.to_string()));
                None
            }
        },
    };
    let anchor = meta
        .as_ref()
        .and_then(|m| DateTime::parse_from_rfc3339(&m.utc_anchor).ok())
        .map(|d| d.with_timezone(&Utc))
        .unwrap_or_default();

    let channels = match read_text(&dir.join(CHANNELS_FILE))? {
        None => {
            out.push(SchemaViolation::new(CHANNELS_FILE, None, "file missing"));
            None
        }
        Some(text) => parse_channels(&text, anchor, &mut out),
    };

    let frames = match read_text(&dir.join(FRAMES_DIR).join(ANNOTATIONS_FILE))? {
        None => Some(Vec::new()),
        Some(text) => parse_frames(&text, &mut out),
    };

    let radar = match read_text(&dir.join(RADAR_FILE))? {
        None => Some(None),
        Some(text) => parse_radar(&text, &mut out).map(Some),
    };

    let (Some(meta), Some(channels), Some(frames), Some(radar)) = (meta, channels, frames, radar) else {
        return Err(StoreError::Invalid(out));
    };
    if !out.is_empty() {
        return Err(StoreError::Invalid(out));
    }
    let event = LaneChangeEvent {
        event_id: meta.event_id,
        direction: meta.direction,
        t_start: meta.t_start_s,
        t_end: meta.t_end_s,
        t_lc: Some(meta.t_lc_s),
        frames,
        trailer_length: meta.trailer_length_m,
        lane_width: meta.lane_width_m,
        channels,
        subset: meta.subset,
        scenario_label: meta.scenario_label,
        marker_pattern: meta.marker_pattern,
        has_pov: meta.has_pov,
        screening: None,
    };
    Ok(EventBundle {
        event,
        radar,
        ground_truth: meta.ground_truth,
    })
}

fn pretty_json<T: Serialize>(v: &T) -> Result<Vec<u8>, StoreError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| StoreError::Serialize(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn channels_csv(ch: &ChannelSeries) -> String {
    let mut s = CHANNEL_COLUMNS.join(",");
    if ch.lane_width.is_some() {
        s.push(',');
        s.push_str(LANE_WIDTH_COLUMN);
    }
    s.push('\n');
    for k in 0..ch.len() {
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            ch.t[k], ch.speed[k], ch.heading[k], ch.lane_offset[k], ch.lat[k], ch.lon[k]
        );
        if let Some(w) = &ch.lane_width {
            if w[k].is_finite() {
                let _ = write!(s, ",{}", w[k]);
            } else {
                s.push(',');
            }
        }
        s.push('\n');
    }
    s
}

fn radar_csv(radar: &[TimedRange]) -> String {
    let mut s = String::from("t_s,range_m\n");
    for r in radar {
        let _ = writeln!(s, "{},{}", r.t, r.range);
    }
    s
}

/// Writes `bytes` to `path` through a synced temporary file and a rename, so
/// readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let seq = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{name}.tmp-{}-{seq}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

/// Writes the annotations file only.
pub fn save_annotations(dir: &Path, bundle: &EventBundle) -> Result<(), StoreError> {
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| io_err(&frames_dir, e))?;
    let body = pretty_json(&AnnotationsFile {
        frames: bundle.frame_records(),
    })?;
    write_atomic(&frames_dir.join(ANNOTATIONS_FILE), &body)
}

/// Writes the bundle in canonical form. Images already in `frames/` are left
/// untouched.
pub fn save_event_bundle(dir: impl AsRef<Path>, bundle: &EventBundle) -> Result<(), StoreError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_atomic(&dir.join(METADATA_FILE), &pretty_json(&bundle.metadata())?)?;
    write_atomic(
        &dir.join(CHANNELS_FILE),
        channels_csv(&bundle.event.channels).as_bytes(),
    )?;
    save_annotations(dir, bundle)?;
    let radar_path = dir.join(RADAR_FILE);
    match &bundle.radar {
        Some(r) => write_atomic(&radar_path, radar_csv(r).as_bytes())?,
        None if radar_path.exists() => fs::remove_file(&radar_path).map_err(|e| io_err(&radar_path, e))?,
        None => {}
    }
    Ok(())
}

/// Bundle directories directly under `root`, sorted by path. A path that is
/// itself a bundle is returned as is.
pub fn discover_bundles(root: impl AsRef<Path>) -> Result<Vec<PathBuf>, StoreError> {
    let root = root.as_ref();
    if root.join(METADATA_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(METADATA_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// A bundle directory and its load result.
pub type LoadedBundle = (PathBuf, Result<EventBundle, StoreError>);

/// Loads every bundle under `root`; invalid bundles are returned with their
/// errors. Duplicate event ids are rejected.
pub fn load_catalog_root(root: impl AsRef<Path>) -> Result<Vec<LoadedBundle>, StoreError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for dir in discover_bundles(root)? {
        let b = load_event_bundle(&dir);
        if let Ok(b) = &b {
            if !seen.insert(b.event.event_id.clone()) {
                return Err(StoreError::DuplicateEventId(b.event.event_id.clone()));
            }
        }
        out.push((dir, b));
    }
    Ok(out)
}

/// Directory under `root` whose bundle carries `event_id`.
pub fn find_event_dir(root: &Path, event_id: &str) -> Result<Option<PathBuf>, StoreError> {
    let direct = root.join(event_id);
    if direct.join(METADATA_FILE).is_file() && metadata_event_id(&direct).as_deref() == Some(event_id) {
        return Ok(Some(direct));
    }
    Ok(discover_bundles(root)?
        .into_iter()
        .find(|d| metadata_event_id(d).as_deref() == Some(event_id)))
}

fn metadata_event_id(dir: &Path) -> Option<String> {
    let text = fs::read_to_string(dir.join(METADATA_FILE)).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get("event_id")?.as_str().map(str::to_owned)
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRow {
    pub event_id: String,
    pub direction: Direction,
    pub subset: Option<Subset>,
    pub has_video: bool,
    pub has_pov: bool,
    pub scenario_label: Option<String>,
    pub screening: Option<ScreeningResult>,
    pub outcome: String,
    pub gap: Option<GapResult>,
}

impl AppearanceRow for CatalogRow {
    fn direction(&self) -> Direction {
        self.direction
    }
    fn has_video(&self) -> bool {
        self.has_video
    }
    fn has_pov(&self) -> bool {
        self.has_pov
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub rows: Vec<CatalogRow>,
}

impl Catalog {
    /// Rows sorted by event id; duplicates rejected.
    pub fn from_rows(mut rows: Vec<CatalogRow>) -> Result<Self, StoreError> {
        rows.sort_by(|a, b| a.event_id.cmp(&b.event_id));
        if let Some(w) = rows.windows(2).find(|w| w[0].event_id == w[1].event_id) {
            return Err(StoreError::DuplicateEventId(w[0].event_id.clone()));
        }
        Ok(Self { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let c: Catalog = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        Self::from_rows(c.rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        write_atomic(path.as_ref(), &pretty_json(self)?)
    }
}

/// One line of the results CSV. Column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub event_id: String,
    pub direction: Direction,
    pub subset: Option<Subset>,
    pub outcome: String,
    pub frames_used: Option<usize>,
    #[serde(rename = "R_lc_m")]
    pub r_lc_m: Option<f64>,
    pub rdot_mps: Option<f64>,
    pub delta_t_s: Option<f64>,
    pub ttc_s: Option<f64>,
    pub d_req_mps2: Option<f64>,
    pub ttc_warning: Option<bool>,
    pub d_req_warning: Option<bool>,
    pub range_warning: Option<bool>,
    pub sv_speed_change_mps: Option<f64>,
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "event_id",
    "direction",
    "subset",
    "outcome",
    "frames_used",
    "R_lc_m",
    "rdot_mps",
    "delta_t_s",
    "ttc_s",
    "d_req_mps2",
    "ttc_warning",
    "d_req_warning",
    "range_warning",
    "sv_speed_change_mps",
];

/// Results CSV for `rows` in the given order. Missing values are empty cells.
pub fn results_csv(rows: &[ResultRow]) -> Result<String, StoreError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)
        .map_err(|e| StoreError::Serialize(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| StoreError::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| StoreError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| StoreError::Serialize(e.to_string()))
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultRow>, StoreError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(|e| StoreError::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthesize_event, EventSpec, SyntheticScene};

    fn sample_bundle() -> EventBundle {
        let sim = synthesize_event(&EventSpec::default(), &SyntheticScene::reference(40.0)).unwrap();
        EventBundle {
            event: sim.event,
            radar: Some(sim.radar),
            ground_truth: Some(sim.truth),
        }
    }

    fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        for rel in [METADATA_FILE, CHANNELS_FILE, RADAR_FILE, "frames/annotations.json"] {
            files.push((rel.to_string(), fs::read(dir.join(rel)).unwrap()));
        }
        files
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        let bundle = sample_bundle();
        save_event_bundle(&a, &bundle).unwrap();
        let loaded = load_event_bundle(&a).unwrap();
        assert_eq!(loaded, bundle);
        save_event_bundle(&b, &loaded).unwrap();
        assert_eq!(snapshot(&a), snapshot(&b));
    }

    #[test]
    fn missing_t_lc_names_the_field() {
        let tmp = tempfile::tempdir().unwrap();
        save_event_bundle(tmp.path(), &sample_bundle()).unwrap();
        let path = tmp.path().join(METADATA_FILE);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("t_lc_s");
        fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        let err = load_event_bundle(tmp.path()).unwrap_err();
        assert_eq!(err.violations().len(), 1);
        assert_eq!(err.violations()[0].field.as_deref(), Some("t_lc_s"));
    }

    #[test]
    fn unsorted_and_duplicate_frames() {
        let tmp = tempfile::tempdir().unwrap();
        let mut bundle = sample_bundle();
        bundle.event.frames.swap(2, 3);
        save_event_bundle(tmp.path(), &bundle).unwrap();
        let err = load_event_bundle(tmp.path()).unwrap_err();
        assert!(
            err.violations().iter().any(|v| v.message.contains("out of order")),
            "{err}"
        );

        let mut bundle = sample_bundle();
        bundle.event.frames[4].t = bundle.event.frames[3].t;
        save_event_bundle(tmp.path(), &bundle).unwrap();
        let err = load_event_bundle(tmp.path()).unwrap_err();
        assert!(
            err.violations().iter().any(|v| v.message.contains("duplicate")),
            "{err}"
        );
    }

    #[test]
    fn partial_points_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        save_event_bundle(tmp.path(), &sample_bundle()).unwrap();
        let path = tmp.path().join("frames/annotations.json");
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v["frames"][0].as_object_mut().unwrap().remove("pov");
        fs::write(&path, v.to_string()).unwrap();
        let err = load_event_bundle(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("together"), "{err}");
    }

    #[test]
    fn missing_channel_column() {
        let tmp = tempfile::tempdir().unwrap();
        save_event_bundle(tmp.path(), &sample_bundle()).unwrap();
        let path = tmp.path().join(CHANNELS_FILE);
        let text = fs::read_to_string(&path).unwrap().replacen("heading_deg", "hdg", 1);
        fs::write(&path, text).unwrap();
        let err = load_event_bundle(tmp.path()).unwrap_err();
        assert_eq!(err.violations()[0].field.as_deref(), Some("heading_deg"));
    }

    #[test]
    fn results_csv_round_trip() {
        let row = ResultRow {
            event_id: "e1".into(),
            direction: Direction::Right,
            subset: Some(Subset::NonRamp),
            outcome: "ok".into(),
            frames_used: Some(9),
            r_lc_m: Some(12.25),
            rdot_mps: Some(-0.5),
            delta_t_s: Some(0.3),
            ttc_s: None,
            d_req_mps2: Some(0.0),
            ttc_warning: Some(false),
            d_req_warning: Some(false),
            range_warning: Some(true),
            sv_speed_change_mps: None,
        };
        let text = results_csv(std::slice::from_ref(&row)).unwrap();
        assert!(text.starts_with(&RESULT_COLUMNS.join(",")));
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "e1,right,non-ramp,ok,9,12.25,-0.5,0.3,,0.0,false,false,true,"
        );
        assert_eq!(read_results_csv(&text).unwrap(), vec![row]);
    }

    #[test]
    fn catalog_rejects_duplicates() {
        let row = |id: &str| CatalogRow {
            event_id: id.into(),
            direction: Direction::Left,
            subset: None,
            has_video: true,
            has_pov: false,
            scenario_label: None,
            screening: None,
            outcome: "ok".into(),
            gap: None,
        };
        let c = Catalog::from_rows(vec![row("b"), row("a")]).unwrap();
        assert_eq!(c.rows[0].event_id, "a");
        assert!(matches!(
            Catalog::from_rows(vec![row("a"), row("a")]),
            Err(StoreError::DuplicateEventId(_))
        ));
    }
}
