//! Batch operations behind the command-line tool.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::conflict::WarningThresholds;
use crate::event::Direction;
use crate::gap::estimate_frame_range;
use crate::pipeline::{catalog_from_outputs, run_batch, PipelineError};
use crate::screening::{screen_event, RampDatabase, ScreeningResult};
use crate::stats::{
    distribution_summary, linear_regression_anova, pov_appearance_rate, radar_error_stats, DistributionSummary,
    RadarComparison, RegressionReport, StatsError, TimedRange,
};
use crate::store::{
    discover_bundles, load_event_bundle, results_csv, save_event_bundle, write_atomic, Catalog, EventBundle, ResultRow,
    StoreError, FRAMES_DIR,
};
use crate::synthetic::{derive_seed, render_frame, synthesize_event, EventSpec, SynthError, SyntheticScene};

pub const CAMERA_FILE: &str = "camera.json";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
}

/// Expands each path into the bundles it holds and loads them. The first
/// invalid bundle aborts with its violations.
pub fn load_bundles(paths: &[PathBuf]) -> Result<Vec<EventBundle>, CommandError> {
    let mut out = Vec::new();
    for p in paths {
        let dirs = discover_bundles(p)?;
        if dirs.is_empty() {
            return Err(CommandError::Input(format!("no event bundles under {}", p.display())));
        }
        for d in dirs {
            out.push(load_event_bundle(&d).map_err(|e| CommandError::Input(format!("{}: {e}", d.display())))?);
        }
    }
    Ok(out)
}

/// Reads the camera from `explicit`, else from the first `camera.json` found
/// in or beside the given bundle paths.
pub fn resolve_camera(explicit: Option<&Path>, bundle_paths: &[PathBuf]) -> Result<CameraIntrinsics, CommandError> {
    let candidates: Vec<PathBuf> = match explicit {
        Some(p) => vec![p.to_path_buf()],
        None => bundle_paths
            .iter()
            .flat_map(|p| {
                [
                    p.join(CAMERA_FILE),
                    p.parent().map(|d| d.join(CAMERA_FILE)).unwrap_or_default(),
                ]
            })
            .collect(),
    };
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| CommandError::Input("no camera configuration; pass --camera <file>".into()))?;
    CameraIntrinsics::from_json_file(path).map_err(|e| CommandError::Io {
        path: path.clone(),
        message: e.to_string(),
    })
}

pub fn load_thresholds(path: Option<&Path>) -> Result<WarningThresholds, CommandError> {
    let Some(path) = path else {
        return Ok(WarningThresholds::default());
    };
    let io = |m: String| CommandError::Io {
        path: path.to_path_buf(),
        message: m,
    };
    let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    let th: WarningThresholds = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
    th.validate().map_err(io)?;
    Ok(th)
}

pub fn load_ramp_db(path: Option<&Path>) -> Result<RampDatabase, CommandError> {
    match path {
        None => Ok(RampDatabase::default()),
        Some(p) => RampDatabase::load(p).map_err(|e| CommandError::Io {
            path: p.to_path_buf(),
            message: e.to_string(),
        }),
    }
}

pub struct EstimateOutput {
    pub csv: String,
    pub catalog: Catalog,
}

pub fn estimate(
    bundles: &[EventBundle],
    cam: &CameraIntrinsics,
    thresholds: &WarningThresholds,
    ramp_db: &RampDatabase,
) -> Result<EstimateOutput, CommandError> {
    let outputs = run_batch(bundles, cam, thresholds, ramp_db)?;
    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.result_row.clone()).collect();
    Ok(EstimateOutput {
        csv: results_csv(&rows)?,
        catalog: catalog_from_outputs(&outputs)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub event_id: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indeterminate: Option<String>,
}

pub fn screen(bundles: &[EventBundle], ramp_db: &RampDatabase) -> Vec<ScreenReport> {
    let mut out: Vec<ScreenReport> = bundles
        .iter()
        .map(|b| {
            let r = screen_event(&b.event, ramp_db);
            ScreenReport {
                event_id: b.event.event_id.clone(),
                direction: b.event.direction,
                indeterminate: r.as_ref().err().map(ToString::to_string),
                screening: r.ok(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub count: usize,
    pub seed: u64,
    pub pixel_noise_sigma: f64,
    pub trailer_length: f64,
    pub render_images: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            count: 10,
            seed: 0,
            pixel_noise_sigma: 0.0,
            trailer_length: 0.0,
            render_images: false,
        }
    }
}

/// Kinematics of synthetic event `index`, drawn from its own seed stream.
pub fn random_event_spec(seed: u64, index: usize) -> EventSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let n_frames = rng.random_range(7..=14usize);
    let lc_offset = f64::from(rng.random_range(0..5u8)) / 10.0;
    let span = 0.5 * (n_frames - 1) as f64 + lc_offset;
    let rdot = rng.random_range(-3.0..2.0);
    // Keep the gap above 3 m at the lane change.
    let r0_min = (3.0 - rdot * span).max(10.0);
    let r0 = rng.random_range(r0_min..r0_min.max(60.0) + 1.0);
    EventSpec {
        event_id: format!("sim-{index:04}"),
        direction: if rng.random_bool(0.5) {
            Direction::Left
        } else {
            Direction::Right
        },
        r0,
        rdot,
        n_frames,
        lc_offset,
        sv_speed: rng.random_range(26.0..32.0),
        sv_accel: rng.random_range(-0.05..0.05),
        heading_deg: rng.random_range(0.0..360.0),
        ..EventSpec::default()
    }
}

/// Writes `count` synthetic bundles plus `camera.json` under `out`. The
/// same options always produce the same bytes.
pub fn simulate(out: &Path, opts: &SimulateOptions) -> Result<Vec<PathBuf>, CommandError> {
    fs::create_dir_all(out).map_err(|e| CommandError::Io {
        path: out.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = SyntheticScene {
        pixel_noise_sigma: opts.pixel_noise_sigma,
        trailer_length: opts.trailer_length,
        ..SyntheticScene::reference(40.0)
    };
    let cam_json = serde_json::to_vec_pretty(&base.cam).map_err(|e| CommandError::Input(e.to_string()))?;
    write_atomic(&out.join(CAMERA_FILE), &cam_json)?;

    let mut dirs = Vec::with_capacity(opts.count);
    for i in 0..opts.count {
        let spec = random_event_spec(opts.seed, i);
        let scene = SyntheticScene {
            rng_seed: derive_seed(opts.seed ^ 0x5EED, i as u64),
            ..base.clone()
        };
        let sim = synthesize_event(&spec, &scene)?;
        let dir = out.join(&spec.event_id);
        let bundle = EventBundle {
            event: sim.event,
            radar: Some(sim.radar),
            ground_truth: Some(sim.truth),
        };
        save_event_bundle(&dir, &bundle)?;
        if opts.render_images {
            let gt = bundle.ground_truth.as_ref().expect("synthetic bundle has ground truth");
            for f in &bundle.event.frames {
                let frame_scene = SyntheticScene {
                    pov_distance: gt.range_at(f.t) + scene.trailer_length,
                    ..scene.clone()
                };
                let name = f.image.as_deref().unwrap_or("frame.png");
                let path = dir.join(FRAMES_DIR).join(name);
                let mut png = Vec::new();
                render_frame(&frame_scene)
                    .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
                    .map_err(|e| CommandError::Input(e.to_string()))?;
                write_atomic(&path, &png)?;
            }
        }
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Camera-to-POV distances from every qualified frame of `bundle`.
pub fn camera_distances(bundle: &EventBundle, cam: &CameraIntrinsics) -> Vec<TimedRange> {
    let ev = &bundle.event;
    let w = ev.reference_lane_width();
    ev.frames
        .iter()
        .filter_map(|f| f.annotation())
        .map(|fa| estimate_frame_range(&fa, cam, w, ev.trailer_length))
        .filter(|e| e.qualified)
        .map(|e| TimedRange::new(e.t, e.z_c))
        .collect()
}

/// Pools camera and radar distances over all bundles carrying radar data.
/// Samples are paired within each event only.
pub fn compare_radar(bundles: &[EventBundle], cam: &CameraIntrinsics) -> Result<RadarComparison, CommandError> {
    // Events are shifted apart in time so pairs never cross events.
    let mut cam_all = Vec::new();
    let mut radar_all = Vec::new();
    let mut offset = 0.0;
    for b in bundles {
        let Some(radar) = &b.radar else { continue };
        let c = camera_distances(b, cam);
        if c.is_empty() || radar.is_empty() {
            continue;
        }
        let span = c.iter().chain(radar).map(|r| r.t).fold(0.0_f64, f64::max) + 10.0;
        cam_all.extend(c.iter().map(|r| TimedRange::new(r.t + offset, r.range)));
        radar_all.extend(radar.iter().map(|r| TimedRange::new(r.t + offset, r.range)));
        offset += span;
    }
    Ok(radar_error_stats(&cam_all, &radar_all)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub n_events: usize,
    pub r_lc_m: Option<DistributionSummary>,
    pub rdot_mps: Option<DistributionSummary>,
    pub ttc_s: Option<DistributionSummary>,
    pub d_req_mps2: Option<DistributionSummary>,
    /// Range rate regressed on range at the lane change.
    pub rdot_vs_r_lc: Option<RegressionReport>,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub by_direction: BTreeMap<Direction, DirectionStats>,
    pub outcomes: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pov_appearance_rate: Option<BTreeMap<Direction, Option<f64>>>,
}

pub fn stats(rows: &[ResultRow], catalog: Option<&Catalog>) -> StatsReport {
    let mut outcomes = BTreeMap::new();
    for r in rows {
        *outcomes.entry(r.outcome.clone()).or_insert(0) += 1;
    }
    let by_direction = [Direction::Left, Direction::Right]
        .into_iter()
        .map(|d| {
            let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.direction == d && r.r_lc_m.is_some()).collect();
            let col = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let r_lc = col(|r| r.r_lc_m);
            let rdot = col(|r| r.rdot_mps);
            let s = DirectionStats {
                n_events: ok.len(),
                r_lc_m: distribution_summary(&r_lc).ok(),
                rdot_mps: distribution_summary(&rdot).ok(),
                ttc_s: distribution_summary(&col(|r| r.ttc_s.filter(|t| *t > 0.0))).ok(),
                d_req_mps2: distribution_summary(&col(|r| r.d_req_mps2)).ok(),
                rdot_vs_r_lc: linear_regression_anova(&r_lc, &rdot).ok(),
                warnings: ok
                    .iter()
                    .filter(|r| {
                        r.ttc_warning.unwrap_or(false)
                            || r.d_req_warning.unwrap_or(false)
                            || r.range_warning.unwrap_or(false)
                    })
                    .count(),
            };
            (d, s)
        })
        .collect();
    StatsReport {
        by_direction,
        outcomes,
        pov_appearance_rate: catalog.map(|c| pov_appearance_rate(&c.rows)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_specs_are_valid_and_reproducible() {
        for i in 0..50 {
            let a = random_event_spec(7, i);
            assert_eq!(a, random_event_spec(7, i));
            let t_lc = a.first_frame_t + 0.5 * (a.n_frames - 1) as f64 + a.lc_offset;
            assert!(a.r0 + a.rdot * (t_lc - a.first_frame_t) > 2.9, "{a:?}");
            assert!(synthesize_event(&a, &SyntheticScene::reference(40.0)).is_ok());
        }
    }

    #[test]
    fn stats_groups_by_direction() {
        let row = |d: Direction, r: f64, rdot: f64| ResultRow {
            event_id: format!("{d}-{r}"),
            direction: d,
            subset: None,
            outcome: "ok".into(),
            frames_used: Some(8),
            r_lc_m: Some(r),
            rdot_mps: Some(rdot),
            delta_t_s: Some(0.1),
            ttc_s: (rdot < 0.0).then(|| -r / rdot),
            d_req_mps2: Some(0.0),
            ttc_warning: Some(false),
            d_req_warning: Some(false),
            range_warning: Some(d == Direction::Right && r < 12.7),
            sv_speed_change_mps: None,
        };
        let rows = vec![
            row(Direction::Left, 20.0, -1.0),
            row(Direction::Left, 30.0, 0.5),
            row(Direction::Left, 25.0, -0.2),
            row(Direction::Right, 10.0, 1.0),
        ];
        let s = stats(&rows, None);
        assert_eq!(s.by_direction[&Direction::Left].n_events, 3);
        assert!(s.by_direction[&Direction::Left].rdot_vs_r_lc.is_some());
        assert_eq!(s.by_direction[&Direction::Right].warnings, 1);
        assert_eq!(s.outcomes["ok"], 4);
    }
}
