//! Ground-truth scene synthesis.
//!
//! A straight road lies in the plane `Y = 0` of a world frame whose axes
//! match the camera convention (X right, Y down, Z rearward along the lane).
//! The target lane is centered on `X = 0` with its markers at `X = ±W/2`; the
//! camera sits at height `h` above the lane centerline. Known 3D points are
//! pushed through the full camera model to fabricate annotations with known
//! ranges, and the splay-angle ranging method lives here for pitch
//! sensitivity comparisons only.
//!
//! Noise streams are seeded per frame or trial with
//! [`derive_seed`]`(base, index)`, a SplitMix64 mix of the base seed and the
//! index, so trials can run in any order or in parallel.

use chrono::{DateTime, TimeZone, Utc};
use image::{GrayImage, Luma};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, NormalizedPoint, PixelPoint};
use crate::event::{ChannelSeries, Direction, EventFrame, LaneChangeEvent, MarkerPoints};
use crate::gap::{estimate_frame_range, FrameAnnotation};
use crate::screening::{detect_lane_change, EARTH_RADIUS_M};
use crate::stats::TimedRange;

/// Closest camera depth a projected point may have.
pub const MIN_PROJECTION_DEPTH: f64 = 0.1;
pub const FRAME_INTERVAL_S: f64 = 0.5;
pub const CHANNEL_INTERVAL_S: f64 = 0.1;
/// Default mirror camera height.
pub const DEFAULT_CAMERA_HEIGHT_M: f64 = 2.3;
/// Radar detection limit.
pub const RADAR_MAX_RANGE_M: f64 = 33.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("point at camera depth {0} m is behind or too close to the camera")]
    BehindCamera(f64),
    #[error("rotation is not orthonormal")]
    NonOrthonormal,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("range {range} m at t={t} s is not positive")]
    NonPositiveRange { t: f64, range: f64 },
    #[error("ray angle {0} deg is not below the horizon; splay range undefined")]
    UndefinedRange(f64),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Extrinsics: `p_camera = rotation * p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Camera height above the road plane, meters.
    pub height: f64,
    /// Nose-up positive.
    pub pitch_deg: f64,
    pub roll_deg: f64,
    /// Positive turns the optical axis toward +X.
    pub yaw_deg: f64,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            height: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            yaw_deg: 0.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, SynthError> {
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-12 || (rotation.determinant() - 1.0).abs() > 1e-12 {
            return Err(SynthError::NonOrthonormal);
        }
        let center = -rotation.transpose() * translation;
        Ok(Self {
            rotation,
            translation,
            height: -center.y,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            yaw_deg: 0.0,
        })
    }

    /// Camera above the lane centerline at `height`, oriented by yaw, then
    /// pitch, then roll about the optical axis.
    pub fn mounted(height: f64, pitch_deg: f64, roll_deg: f64, yaw_deg: f64) -> Self {
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let (sr, cr) = roll_deg.to_radians().sin_cos();
        let yaw = Matrix3::new(cy, 0.0, -sy, 0.0, 1.0, 0.0, sy, 0.0, cy);
        let pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, sp, 0.0, -sp, cp);
        let roll = Matrix3::new(cr, sr, 0.0, -sr, cr, 0.0, 0.0, 0.0, 1.0);
        let rotation = roll * pitch * yaw;
        let center = Vector3::new(0.0, -height, 0.0);
        Self {
            rotation,
            translation: -(rotation * center),
            height,
            pitch_deg,
            roll_deg,
            yaw_deg,
        }
    }

    pub fn with_pitch_offset(&self, delta_deg: f64) -> Self {
        Self::mounted(self.height, self.pitch_deg + delta_deg, self.roll_deg, self.yaw_deg)
    }

    pub fn world_to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// World point to pixel through extrinsics, perspective division, lens
/// distortion and `K`.
pub fn project_scene_point(
    p_world: Vector3<f64>,
    pose: &CameraPose,
    cam: &CameraIntrinsics,
) -> Result<PixelPoint, SynthError> {
    let pc = pose.world_to_camera(p_world);
    if !(pc.z > MIN_PROJECTION_DEPTH) {
        return Err(SynthError::BehindCamera(pc.z));
    }
    Ok(cam.normalized_to_pixel(NormalizedPoint::new(pc.x / pc.z, pc.y / pc.z))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// True lane width, meters.
    pub lane_width: f64,
    /// Marker sample stations relative to the POV distance, meters.
    pub marker_offsets: [f64; 2],
    /// Camera-to-POV distance along the lane, meters.
    pub pov_distance: f64,
    pub trailer_length: f64,
    pub pose: CameraPose,
    pub cam: CameraIntrinsics,
    pub pixel_noise_sigma: f64,
    pub rng_seed: u64,
}

/// Camera used by the built-in scenes: 720x480 with moderate barrel
/// distortion.
pub fn reference_camera() -> CameraIntrinsics {
    CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480)
        .with_radial(-0.3, 0.1, 0.0)
        .with_tangential(0.001, -0.002)
}

impl SyntheticScene {
    /// 3.6 m lane, 2.3 m camera height, no trailer, no noise.
    pub fn reference(pov_distance: f64) -> Self {
        Self {
            lane_width: 3.6,
            marker_offsets: [-5.0, 5.0],
            pov_distance,
            trailer_length: 0.0,
            pose: CameraPose::mounted(DEFAULT_CAMERA_HEIGHT_M, 0.0, 0.0, 0.0),
            cam: reference_camera(),
            pixel_noise_sigma: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        if !(self.lane_width > 0.0) {
            return bad(format!("lane width {} must be positive", self.lane_width));
        }
        if !(self.trailer_length >= 0.0) || !(self.pov_distance > self.trailer_length) {
            return bad(format!(
                "need pov distance {} > trailer length {} >= 0",
                self.pov_distance, self.trailer_length
            ));
        }
        if !(self.pose.height > 0.0) {
            return bad(format!("camera height {} must be positive", self.pose.height));
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", self.pixel_noise_sigma));
        }
        self.cam.validate()?;
        Ok(())
    }

    pub fn true_range(&self) -> f64 {
        self.pov_distance - self.trailer_length
    }

    fn noiseless_points(&self) -> Result<MarkerPoints, SynthError> {
        let half = self.lane_width / 2.0;
        let z = self.pov_distance;
        let [o1, o2] = self.marker_offsets;
        let proj = |x: f64, zz: f64| project_scene_point(Vector3::new(x, 0.0, zz), &self.pose, &self.cam);
        Ok(MarkerPoints {
            left: [proj(-half, z + o1)?, proj(-half, z + o2)?],
            right: [proj(half, z + o1)?, proj(half, z + o2)?],
            pov: proj(0.0, z)?,
        })
    }
}

/// One annotated frame of `scene` at time `t`, with isotropic Gaussian pixel
/// noise seeded by `derive_seed(scene.rng_seed, t.to_bits())`. Returns the
/// annotation and the true gap `Z - L`.
pub fn synthesize_frame(scene: &SyntheticScene, t: f64) -> Result<(FrameAnnotation, f64), SynthError> {
    scene.validate()?;
    let mut pts = scene.noiseless_points()?;
    if scene.pixel_noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.rng_seed, t.to_bits()));
        let normal = Normal::new(0.0, scene.pixel_noise_sigma).map_err(|e| SynthError::InvalidScene(e.to_string()))?;
        let mut jitter = |p: &mut PixelPoint| {
            p.u += normal.sample(&mut rng);
            p.v += normal.sample(&mut rng);
        };
        pts.left.iter_mut().for_each(&mut jitter);
        pts.right.iter_mut().for_each(&mut jitter);
        jitter(&mut pts.pov);
    }
    Ok((
        FrameAnnotation {
            t,
            left_marker: pts.left,
            right_marker: pts.right,
            pov: pts.pov,
            image_ref: None,
        },
        scene.true_range(),
    ))
}

/// Ranging from the vertical image coordinate and camera height:
/// `Z = h / tan(atan(y) + pitch_error)`.
pub fn splay_range(y_pov: f64, height: f64, pitch_error_deg: f64) -> Result<f64, SynthError> {
    let angle = y_pov.atan() + pitch_error_deg.to_radians();
    if !(angle > 0.0 && angle < std::f64::consts::FRAC_PI_2) {
        return Err(SynthError::UndefinedRange(angle.to_degrees()));
    }
    Ok(height / angle.tan())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchSensitivity {
    /// Signed relative error of the splay-angle range.
    pub splay_rel_err: f64,
    /// Signed relative error of the lane-width range.
    pub lane_width_rel_err: f64,
}

/// Perturbs the camera pitch by `pitch_error_deg`, projects the scene without
/// noise and ranges the POV with both methods, each assuming the nominal
/// pose. Errors are relative to the true camera-to-POV distance.
pub fn pitch_sensitivity_experiment(
    scene: &SyntheticScene,
    pitch_error_deg: f64,
) -> Result<PitchSensitivity, SynthError> {
    let perturbed = SyntheticScene {
        pose: scene.pose.with_pitch_offset(pitch_error_deg),
        pixel_noise_sigma: 0.0,
        ..scene.clone()
    };
    let (fa, _) = synthesize_frame(&perturbed, 0.0)?;
    let z_true = scene.pov_distance;

    let est = estimate_frame_range(&fa, &scene.cam, scene.lane_width, 0.0);
    if !est.qualified {
        return Err(SynthError::InvalidScene("perturbed frame failed to range".into()));
    }
    let y_pov = scene.cam.pixel_to_normalized(fa.pov)?.y;
    let nominal_pitch = scene.pose.pitch_deg;
    let splay = splay_range(y_pov, scene.pose.height, nominal_pitch)?;
    Ok(PitchSensitivity {
        splay_rel_err: (splay - z_true) / z_true,
        lane_width_rel_err: (est.z_c - z_true) / z_true,
    })
}

/// Kinematics and context of a synthetic lane change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub event_id: String,
    pub direction: Direction,
    /// Gap at the first frame, meters.
    pub r0: f64,
    /// Constant range rate, m/s.
    pub rdot: f64,
    pub n_frames: usize,
    /// Lane-change time after the last frame, seconds, in `[0, 0.5)`.
    pub lc_offset: f64,
    pub first_frame_t: f64,
    /// Subject-vehicle speed at t = 0 and its constant acceleration.
    pub sv_speed: f64,
    pub sv_accel: f64,
    pub heading_deg: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub utc_anchor: DateTime<Utc>,
    /// Seconds of channel data after the lane change.
    pub tail_s: f64,
}

impl Default for EventSpec {
    fn default() -> Self {
        Self {
            event_id: "sim-0001".into(),
            direction: Direction::Left,
            r0: 40.0,
            rdot: -1.5,
            n_frames: 10,
            lc_offset: 0.3,
            first_frame_t: 6.0,
            sv_speed: 26.0,
            sv_accel: 0.0,
            heading_deg: 0.0,
            origin_lat: 42.28,
            origin_lon: -83.74,
            // Early afternoon in Michigan.
            utc_anchor: Utc.with_ymd_and_hms(2008, 7, 15, 17, 0, 0).unwrap(),
            tail_s: 8.0,
        }
    }
}

/// Ground truth carried alongside a synthetic bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub r0_m: f64,
    pub rdot_mps: f64,
    pub first_frame_t_s: f64,
    pub r_lc_m: f64,
    pub pixel_noise_sigma_px: f64,
    pub seed: u64,
    pub camera_height_m: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub yaw_deg: f64,
}

impl GroundTruth {
    pub fn range_at(&self, t: f64) -> f64 {
        self.r0_m + self.rdot_mps * (t - self.first_frame_t_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub event: LaneChangeEvent,
    pub truth: GroundTruth,
    /// Camera-to-POV distance at 10 Hz where within radar reach.
    pub radar: Vec<TimedRange>,
}

/// Builds a full lane-change event: 2 Hz annotated frames of a POV closing at
/// `spec.rdot`, 10 Hz channels with a lane-offset re-anchor at `t_lc`, and
/// radar samples of the camera-to-POV distance.
pub fn synthesize_event(spec: &EventSpec, template: &SyntheticScene) -> Result<SyntheticEvent, SynthError> {
    if spec.n_frames == 0 {
        return Err(SynthError::InvalidScene("no frames requested".into()));
    }
    if !(0.0..FRAME_INTERVAL_S).contains(&spec.lc_offset) {
        return Err(SynthError::InvalidScene(format!(
            "lane-change offset {} outside [0, 0.5)",
            spec.lc_offset
        )));
    }
    let l = template.trailer_length;
    let range_at = |t: f64| spec.r0 + spec.rdot * (t - spec.first_frame_t);

    let t_last = spec.first_frame_t + FRAME_INTERVAL_S * (spec.n_frames - 1) as f64;
    let k_lc = ((t_last + spec.lc_offset) / CHANNEL_INTERVAL_S).round() as usize;
    let t_lc = k_lc as f64 / 10.0;
    for t in [spec.first_frame_t, t_lc] {
        let r = range_at(t);
        if !(r > 0.0) {
            return Err(SynthError::NonPositiveRange { t, range: r });
        }
    }

    let mut frames = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let t = spec.first_frame_t + FRAME_INTERVAL_S * i as f64;
        let scene = SyntheticScene {
            pov_distance: range_at(t) + l,
            rng_seed: derive_seed(template.rng_seed, i as u64),
            ..template.clone()
        };
        let (fa, _) = synthesize_frame(&scene, t)?;
        frames.push(EventFrame {
            t,
            image: Some(format!("frame_{i:03}.png")),
            points: Some(MarkerPoints {
                left: fa.left_marker,
                right: fa.right_marker,
                pov: fa.pov,
            }),
        });
    }

    let channels = synthesize_channels(spec, template.lane_width, k_lc);
    let widths = channels.lane_width.clone().unwrap_or_default();
    let boundaries = detect_lane_change(&channels, &widths)
        .into_iter()
        .flatten()
        .find(|b| (b.t_lc - t_lc).abs() < 1e-9)
        .ok_or_else(|| SynthError::InvalidScene("synthesized lane change not detectable".into()))?;

    let radar = channels
        .t
        .iter()
        .filter(|&&t| t >= spec.first_frame_t - 1e-9 && t <= t_lc + 1e-9)
        .map(|&t| TimedRange::new(t, range_at(t) + l))
        .filter(|r| r.range <= RADAR_MAX_RANGE_M)
        .collect();

    let event = LaneChangeEvent {
        event_id: spec.event_id.clone(),
        direction: spec.direction,
        t_start: boundaries.t_start,
        t_end: boundaries.t_end,
        t_lc: Some(t_lc),
        frames,
        trailer_length: l,
        lane_width: template.lane_width,
        channels,
        subset: None,
        scenario_label: None,
        marker_pattern: None,
        has_pov: Some(true),
        screening: None,
    };
    let truth = GroundTruth {
        r0_m: spec.r0,
        rdot_mps: spec.rdot,
        first_frame_t_s: spec.first_frame_t,
        r_lc_m: range_at(t_lc),
        pixel_noise_sigma_px: template.pixel_noise_sigma,
        seed: template.rng_seed,
        camera_height_m: template.pose.height,
        pitch_deg: template.pose.pitch_deg,
        roll_deg: template.pose.roll_deg,
        yaw_deg: template.pose.yaw_deg,
    };
    Ok(SyntheticEvent { event, truth, radar })
}

/// Lane offset (positive right) for a 6 s maneuver centered on sample
/// `k_lc`: drift toward the crossed marker, re-anchor, settle.
fn synthesize_channels(spec: &EventSpec, lane_width: f64, k_lc: usize) -> ChannelSeries {
    let n = k_lc + (spec.tail_s / CHANNEL_INTERVAL_S).round() as usize + 1;
    let half = lane_width / 2.0;
    let sign = match spec.direction {
        Direction::Right => 1.0,
        Direction::Left => -1.0,
    };
    let ramp = 30.0;
    let t: Vec<f64> = (0..n).map(|k| k as f64 / 10.0).collect();
    let lane_offset = (0..n)
        .map(|k| {
            let d = k as f64 - k_lc as f64;
            let mag = if d < -ramp || d > ramp {
                0.0
            } else if d < 0.0 {
                half * (d + ramp) / ramp
            } else {
                -half * (ramp - d) / ramp
            };
            sign * mag
        })
        .collect();
    let speed: Vec<f64> = t.iter().map(|t| spec.sv_speed + spec.sv_accel * t).collect();
    let (sh, ch) = spec.heading_deg.to_radians().sin_cos();
    let mut lat = Vec::with_capacity(n);
    let mut lon = Vec::with_capacity(n);
    let mut dist = 0.0;
    for (k, &tk) in t.iter().enumerate() {
        if k > 0 {
            dist += 0.5 * (speed[k] + speed[k - 1]) * (tk - t[k - 1]);
        }
        let dlat = (dist * ch / EARTH_RADIUS_M).to_degrees();
        let dlon = (dist * sh / (EARTH_RADIUS_M * spec.origin_lat.to_radians().cos())).to_degrees();
        lat.push(spec.origin_lat + dlat);
        lon.push(spec.origin_lon + dlon);
    }
    ChannelSeries {
        t,
        speed,
        heading: vec![spec.heading_deg; n],
        lane_offset,
        lat,
        lon,
        lane_width: Some(vec![lane_width; n]),
        utc_anchor: spec.utc_anchor,
    }
}

/// Flat-shaded road-plane rendering of `scene`: asphalt, white markers 15 cm
/// wide, the POV shadow as a dark patch, sky above the horizon.
pub fn render_frame(scene: &SyntheticScene) -> GrayImage {
    const SKY: u8 = 200;
    const ROAD: u8 = 90;
    const MARKER: u8 = 235;
    const SHADOW: u8 = 20;
    let cam = &scene.cam;
    let rt = scene.pose.rotation.transpose();
    let center = scene.pose.center();
    let half = scene.lane_width / 2.0;
    GrayImage::from_fn(cam.image_width, cam.image_height, |u, v| {
        let px = PixelPoint::new(f64::from(u) + 0.5, f64::from(v) + 0.5);
        let Ok(n) = cam.pixel_to_normalized(px) else {
            return Luma([SKY]);
        };
        let ray = rt * Vector3::new(n.x, n.y, 1.0);
        if ray.y <= 1e-9 {
            return Luma([SKY]);
        }
        let s = -center.y / ray.y;
        let (x, z) = (center.x + s * ray.x, center.z + s * ray.z);
        let shade = if x.abs() < 0.9 && (scene.pov_distance..scene.pov_distance + 1.0).contains(&z) {
            SHADOW
        } else if (x.abs() - half).abs() < 0.075 {
            MARKER
        } else {
            ROAD
        };
        Luma([shade])
    })
}
