//! HTTP service backing the annotation workflow.
//!
//! | method | path | body / response |
//! |---|---|---|
//! | GET | `/health` | `{"status": "ok"}` |
//! | GET | `/events` | event summaries ordered by id |
//! | GET | `/events/{id}` | metadata and frame records |
//! | GET | `/events/{id}/frames/{t}/image` | image bytes |
//! | PUT | `/events/{id}/frames/{t}/points` | five role-tagged points; returns overlay and range |
//! | POST | `/events/{id}/compute` | gap result, or the outcome code with 422 |
//!
//! Point submissions for one event are serialized by a per-event lock and
//! written to disk before the response is sent.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;
use tokio::net::TcpListener;

use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::conflict::WarningThresholds;
use crate::event::{Direction, MarkerPoints, Subset};
use crate::gap::{estimate_frame_range, overlay_segments, FrameAnnotation, Overlay, RangeEstimate};
use crate::store::{
    discover_bundles, find_event_dir, load_event_bundle, save_annotations, EventBundle, EventMetadata, FrameRecord,
    StoreError, FRAMES_DIR,
};
use crate::trajectory::{process_event_gap, GapOutcome, MIN_QUALIFIED_FRAMES};

/// Point roles in click order.
pub const POINT_ROLES: [&str; 5] = ["left1", "left2", "right1", "right2", "pov"];

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    pub addr: SocketAddr,
    pub camera: CameraIntrinsics,
    pub thresholds: WarningThresholds,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("catalog root {path} is not writable: {message}")]
    StorageUnwritable { path: PathBuf, message: String },
    #[error("port busy: cannot bind {addr}: {message}")]
    PortBusy { addr: SocketAddr, message: String },
    #[error("invalid camera configuration: {0}")]
    Camera(#[from] crate::camera::CameraError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    root: PathBuf,
    camera: CameraIntrinsics,
    thresholds: WarningThresholds,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(root: PathBuf, camera: CameraIntrinsics, thresholds: WarningThresholds) -> Self {
        Self {
            root,
            camera,
            thresholds,
            locks: Mutex::new(HashMap::new()),
        }
    }

    fn event_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Invalid(v) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": "invalid event bundle", "violations": v }),
            },
            StoreError::NoSuchFrame(t) => Self::not_found(format!("no frame at t={t}")),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub event_id: String,
    pub direction: Option<Direction>,
    pub subset: Option<Subset>,
    pub has_video: bool,
    pub has_pov: bool,
    pub n_frames: usize,
    pub n_annotated: usize,
    /// At least the minimum number of annotated frames.
    pub qualifies: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDetail {
    pub metadata: EventMetadata,
    pub frames: Vec<FrameRecord>,
}

/// Response to a point submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsResponse {
    pub event_id: String,
    pub t_s: f64,
    pub points: MarkerPoints,
    pub overlay: Option<Overlay>,
    pub range: RangeEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_error: Option<String>,
}

/// Overlay and range for one annotation, exactly as the library computes
/// them for the event's reference lane width and trailer length.
pub fn annotate_frame(bundle: &EventBundle, t: f64, points: MarkerPoints, cam: &CameraIntrinsics) -> PointsResponse {
    let ev = &bundle.event;
    let fa = FrameAnnotation {
        t,
        left_marker: points.left,
        right_marker: points.right,
        pov: points.pov,
        image_ref: None,
    };
    let (overlay, geometry_error) = match overlay_segments(&fa, cam) {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e.to_string())),
    };
    PointsResponse {
        event_id: ev.event_id.clone(),
        t_s: t,
        points,
        overlay,
        range: estimate_frame_range(&fa, cam, ev.reference_lane_width(), ev.trailer_length),
        geometry_error,
    }
}

/// Parses a `{"left1": [u, v], ...}` body. The first missing or malformed
/// role is named in the error.
pub fn parse_points(body: &[u8]) -> Result<MarkerPoints, ApiError> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")))?;
    let obj: &Map<String, Value> = v
        .as_object()
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "expected a JSON object of roles"))?;
    let mut pts = [PixelPoint::new(0.0, 0.0); 5];
    for (slot, role) in pts.iter_mut().zip(POINT_ROLES) {
        let invalid = |msg: &str| ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": format!("{msg} role {role}"), "role": role }),
        };
        let val = obj.get(role).ok_or_else(|| invalid("missing"))?;
        let uv: [f64; 2] = serde_json::from_value(val.clone()).map_err(|_| invalid("malformed"))?;
        if !uv.iter().all(|c| c.is_finite()) {
            return Err(invalid("non-finite"));
        }
        *slot = PixelPoint::new(uv[0], uv[1]);
    }
    Ok(MarkerPoints {
        left: [pts[0], pts[1]],
        right: [pts[2], pts[3]],
        pov: pts[4],
    })
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_events(State(st): State<Arc<AppState>>) -> Result<Json<Vec<EventSummary>>, ApiError> {
    let mut out = Vec::new();
    for dir in discover_bundles(&st.root)? {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(match load_event_bundle(&dir) {
            Ok(b) => {
                let ev = &b.event;
                let n_annotated = ev.frames.iter().filter(|f| f.points.is_some()).count();
                EventSummary {
                    event_id: ev.event_id.clone(),
                    direction: Some(ev.direction),
                    subset: ev.subset,
                    has_video: ev.has_video(),
                    has_pov: ev.has_pov(),
                    n_frames: ev.frames.len(),
                    n_annotated,
                    qualifies: n_annotated >= MIN_QUALIFIED_FRAMES,
                    error: None,
                }
            }
            Err(e) => EventSummary {
                event_id: name,
                direction: None,
                subset: None,
                has_video: false,
                has_pov: false,
                n_frames: 0,
                n_annotated: 0,
                qualifies: false,
                error: Some(e.to_string()),
            },
        });
    }
    out.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    Ok(Json(out))
}

fn event_dir(st: &AppState, id: &str) -> Result<PathBuf, ApiError> {
    find_event_dir(&st.root, id)?.ok_or_else(|| ApiError::not_found(format!("no event {id:?}")))
}

fn parse_time(t: &str) -> Result<f64, ApiError> {
    t.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("bad frame time {t:?}")))
}

async fn get_event(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<EventDetail>, ApiError> {
    let b = load_event_bundle(event_dir(&st, &id)?)?;
    Ok(Json(EventDetail {
        metadata: b.metadata(),
        frames: b.frame_records(),
    }))
}

async fn get_image(
    State(st): State<Arc<AppState>>,
    UrlPath((id, t)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let dir = event_dir(&st, &id)?;
    let t = parse_time(&t)?;
    let b = load_event_bundle(&dir)?;
    let idx = b.frame_index(t).ok_or(StoreError::NoSuchFrame(t))?;
    let name = b.event.frames[idx]
        .image
        .clone()
        .ok_or_else(|| ApiError::not_found(format!("frame at t={t} has no image")))?;
    let frames_dir = dir.join(FRAMES_DIR);
    let path = frames_dir.join(&name);
    if Path::new(&name).components().count() != 1 {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "image path escapes the frames directory",
        ));
    }
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("image {name} missing")))?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn put_points(
    State(st): State<Arc<AppState>>,
    UrlPath((id, t)): UrlPath<(String, String)>,
    body: Bytes,
) -> Result<Json<PointsResponse>, ApiError> {
    let t = parse_time(&t)?;
    let points = parse_points(&body)?;
    let dir = event_dir(&st, &id)?;
    let lock = st.event_lock(&id);
    let _guard = lock.lock().await;
    let mut b = load_event_bundle(&dir)?;
    let idx = b.frame_index(t).ok_or(StoreError::NoSuchFrame(t))?;
    let frame_t = b.event.frames[idx].t;
    b.event.frames[idx].points = Some(points);
    save_annotations(&dir, &b)?;
    tracing::debug!(event = %id, t = frame_t, "points persisted");
    Ok(Json(annotate_frame(&b, frame_t, points, &st.camera)))
}

async fn compute(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let b = load_event_bundle(event_dir(&st, &id)?)?;
    let ev = &b.event;
    let outcome = process_event_gap(
        ev,
        &st.camera,
        ev.reference_lane_width(),
        ev.trailer_length,
        &st.thresholds,
    );
    Ok(match outcome {
        GapOutcome::Computed(r) => Json(r).into_response(),
        other => (StatusCode::UNPROCESSABLE_ENTITY, Json(other)).into_response(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/events", get(list_events))
        .route("/events/{id}", get(get_event))
        .route("/events/{id}/frames/{t}/image", get(get_image))
        .route("/events/{id}/frames/{t}/points", put(put_points))
        .route("/events/{id}/compute", post(compute))
        .with_state(state)
}

/// Fails unless `root` is a directory we can create files in.
pub fn check_storage(root: &Path) -> Result<(), ServeError> {
    let fail = |message: String| ServeError::StorageUnwritable {
        path: root.to_path_buf(),
        message,
    };
    if !root.is_dir() {
        return Err(fail("not a directory".into()));
    }
    let probe = root.join(format!(".write-probe-{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(|e| fail(e.to_string()))?;
    std::fs::remove_file(&probe).map_err(|e| fail(e.to_string()))
}

/// Validates the configuration and binds the listener.
pub async fn bind(config: &ServiceConfig) -> Result<(TcpListener, Router), ServeError> {
    config.camera.validate()?;
    check_storage(&config.root)?;
    let listener = TcpListener::bind(config.addr).await.map_err(|e| ServeError::PortBusy {
        addr: config.addr,
        message: e.to_string(),
    })?;
    let state = Arc::new(AppState::new(config.root.clone(), config.camera, config.thresholds));
    Ok((listener, router(state)))
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let (listener, app) = bind(&config).await?;
    tracing::info!(addr = %listener.local_addr()?, root = %config.root.display(), "serving");
    axum::serve(listener, app).await?;
    Ok(())
}
