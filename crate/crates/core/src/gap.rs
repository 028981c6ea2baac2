//! Per-frame range estimation from the lane width at the POV row.
//!
//! The two lane markers of the target lane are straight lines on the
//! normalized image plane. The horizontal segment between them at the row of
//! the POV shadow has normalized length `w`, and with the metric lane width
//! `W` the camera-to-POV distance is `Z = W / w` by similar triangles. The gap
//! behind the trailer is `R = Z - L`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics, NormalizedPoint, PixelPoint};

/// Minimum separation of the two points that define a marker line.
pub const MIN_MARKER_SEPARATION: f64 = 1e-9;
/// Smallest normalized lane width accepted as a valid measurement.
pub const MIN_NORMALIZED_WIDTH: f64 = 1e-6;
/// Upper plausibility bound on a qualified range, meters.
pub const MAX_PLAUSIBLE_RANGE: f64 = 120.0;

const PARALLEL_EPS: f64 = 1e-12;
const OVERLAY_SAMPLES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("marker points coincide (separation {0:e})")]
    DegenerateAnnotation(f64),
    #[error("marker line is parallel to the POV row")]
    ParallelToRow,
    #[error("lane width {0} is not positive; markers crossed or mislabeled")]
    NonPositiveWidth(f64),
    #[error("invalid reference lane width {0} m")]
    InvalidLaneWidth(f64),
    #[error("invalid trailer length {0} m")]
    InvalidTrailerLength(f64),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// One rear-view frame as annotated by an operator: two points on each lane
/// marker of the target lane and the bottom edge of the POV shadow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub t: f64,
    pub left_marker: [PixelPoint; 2],
    pub right_marker: [PixelPoint; 2],
    pub pov: PixelPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

/// A line on the normalized plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2D {
    pub point: NormalizedPoint,
    /// Unit direction.
    pub direction: [f64; 2],
}

impl Line2D {
    /// x coordinate where the line crosses the row `y`.
    pub fn x_at(&self, y: f64) -> Result<f64, GeometryError> {
        let [dx, dy] = self.direction;
        if dy.abs() < PARALLEL_EPS {
            return Err(GeometryError::ParallelToRow);
        }
        Ok(self.point.x + dx * (y - self.point.y) / dy)
    }

    /// Signed distance of `p` from the line.
    pub fn signed_distance(&self, p: NormalizedPoint) -> f64 {
        let [dx, dy] = self.direction;
        (p.x - self.point.x) * dy - (p.y - self.point.y) * dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    pub t: f64,
    /// Lane width on the normalized plane at the POV row.
    pub w: f64,
    /// Camera-to-POV distance, meters.
    pub z_c: f64,
    /// Trailer-rear-to-POV gap, meters.
    pub r: f64,
    pub qualified: bool,
}

impl RangeEstimate {
    fn disqualified(t: f64) -> Self {
        Self {
            t,
            w: f64::NAN,
            z_c: f64::NAN,
            r: f64::NAN,
            qualified: false,
        }
    }
}

pub fn fit_marker_line(a: NormalizedPoint, b: NormalizedPoint) -> Result<Line2D, GeometryError> {
    let sep = a.distance(&b);
    if !(sep > MIN_MARKER_SEPARATION) {
        return Err(GeometryError::DegenerateAnnotation(sep));
    }
    Ok(Line2D {
        point: a,
        direction: [(b.x - a.x) / sep, (b.y - a.y) / sep],
    })
}

/// Horizontal distance between the right and left marker lines at row `pov_y`.
pub fn lane_width_at_pov(left: &Line2D, right: &Line2D, pov_y: f64) -> Result<f64, GeometryError> {
    let w = right.x_at(pov_y)? - left.x_at(pov_y)?;
    if w <= MIN_NORMALIZED_WIDTH {
        return Err(GeometryError::NonPositiveWidth(w));
    }
    Ok(w)
}

/// Similar-triangles range: returns `(Z_C, R)` with `Z_C = W / w` and
/// `R = Z_C - L`. `R` may come out negative when the POV overlaps the
/// trailer footprint.
pub fn range_from_width(lane_width: f64, w: f64, trailer_length: f64) -> Result<(f64, f64), GeometryError> {
    if !(lane_width > 0.0) || !lane_width.is_finite() {
        return Err(GeometryError::InvalidLaneWidth(lane_width));
    }
    if !(trailer_length >= 0.0) || !trailer_length.is_finite() {
        return Err(GeometryError::InvalidTrailerLength(trailer_length));
    }
    if !(w > 0.0) {
        return Err(GeometryError::NonPositiveWidth(w));
    }
    let z_c = lane_width / w;
    Ok((z_c, z_c - trailer_length))
}

/// Undistorted geometry of one annotated frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub left: Line2D,
    pub right: Line2D,
    pub left_points: [NormalizedPoint; 2],
    pub right_points: [NormalizedPoint; 2],
    pub pov: NormalizedPoint,
    pub w: f64,
}

pub fn frame_geometry(fa: &FrameAnnotation, cam: &CameraIntrinsics) -> Result<FrameGeometry, GeometryError> {
    let n = |p: PixelPoint| cam.pixel_to_normalized(p);
    let left_points = [n(fa.left_marker[0])?, n(fa.left_marker[1])?];
    let right_points = [n(fa.right_marker[0])?, n(fa.right_marker[1])?];
    let pov = n(fa.pov)?;
    let left = fit_marker_line(left_points[0], left_points[1])?;
    let right = fit_marker_line(right_points[0], right_points[1])?;
    let w = lane_width_at_pov(&left, &right, pov.y)?;
    Ok(FrameGeometry {
        left,
        right,
        left_points,
        right_points,
        pov,
        w,
    })
}

/// Full per-frame pipeline. Geometry failures and implausible ranges yield a
/// disqualified estimate rather than an error, so one bad frame never aborts
/// its event.
pub fn estimate_frame_range(
    fa: &FrameAnnotation,
    cam: &CameraIntrinsics,
    lane_width: f64,
    trailer_length: f64,
) -> RangeEstimate {
    let geometry = match frame_geometry(fa, cam) {
        Ok(g) => g,
        Err(e) => {
            tracing::debug!(t = fa.t, error = %e, "frame disqualified");
            return RangeEstimate::disqualified(fa.t);
        }
    };
    match range_from_width(lane_width, geometry.w, trailer_length) {
        Ok((z_c, r)) => RangeEstimate {
            t: fa.t,
            w: geometry.w,
            z_c,
            r,
            qualified: r > 0.0 && r <= MAX_PLAUSIBLE_RANGE && r.is_finite(),
        },
        Err(e) => {
            tracing::debug!(t = fa.t, error = %e, "frame disqualified");
            RangeEstimate::disqualified(fa.t)
        }
    }
}

/// Reprojected annotation overlay, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub left_marker: Vec<PixelPoint>,
    pub right_marker: Vec<PixelPoint>,
    pub width_segment: Vec<PixelPoint>,
}

fn sample_stations(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = (0..OVERLAY_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (OVERLAY_SAMPLES - 1) as f64)
        .chain(extra.iter().copied())
        .collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Marker lines and the width segment, sampled on the normalized plane and
/// mapped back into the distorted image. Marker polylines span the rows of
/// the annotated points and the POV, and include the annotated rows as
/// vertices.
pub fn overlay_segments(fa: &FrameAnnotation, cam: &CameraIntrinsics) -> Result<Overlay, GeometryError> {
    let g = frame_geometry(fa, cam)?;
    let rows = [
        g.left_points[0].y,
        g.left_points[1].y,
        g.right_points[0].y,
        g.right_points[1].y,
        g.pov.y,
    ];
    let lo = rows.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let polyline = |line: &Line2D, own: [NormalizedPoint; 2]| -> Result<Vec<PixelPoint>, GeometryError> {
        sample_stations(lo, hi, &[own[0].y, own[1].y, g.pov.y])
            .into_iter()
            .map(|y| {
                let p = NormalizedPoint::new(line.x_at(y)?, y);
                Ok(cam.normalized_to_pixel(p)?)
            })
            .collect()
    };
    let left_marker = polyline(&g.left, g.left_points)?;
    let right_marker = polyline(&g.right, g.right_points)?;

    let xl = g.left.x_at(g.pov.y)?;
    let xr = g.right.x_at(g.pov.y)?;
    let width_segment = sample_stations(xl, xr, &[])
        .into_iter()
        .map(|x| cam.normalized_to_pixel(NormalizedPoint::new(x, g.pov.y)))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Overlay {
        left_marker,
        right_marker,
        width_segment,
    })
}

/// Distance from `p` to the closest segment of a polyline.
pub fn distance_to_polyline(p: PixelPoint, polyline: &[PixelPoint]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => p.distance(only),
        _ => polyline
            .windows(2)
            .map(|s| {
                let (a, b) = (s[0], s[1]);
                let (du, dv) = (b.u - a.u, b.v - a.v);
                let len2 = du * du + dv * dv;
                let t = if len2 > 0.0 {
                    (((p.u - a.u) * du + (p.v - a.v) * dv) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                p.distance(&PixelPoint::new(a.u + t * du, a.v + t * dv))
            })
            .fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(x: f64, y: f64) -> NormalizedPoint {
        NormalizedPoint::new(x, y)
    }

    #[test]
    fn vertical_line_through_origin() {
        let l = fit_marker_line(n(0.0, 0.0), n(0.0, 1.0)).unwrap();
        assert_eq!(l.direction, [0.0, 1.0]);
        assert_eq!(l.x_at(0.7).unwrap(), 0.0);
        let l = fit_marker_line(n(-0.1, 0.2), n(-0.1, 0.5)).unwrap();
        assert_eq!(l.x_at(3.0).unwrap(), -0.1);
    }

    #[test]
    fn slanted_line_contains_both_points() {
        let a = n(0.0, 0.0);
        let b = n(0.1, 0.2);
        let l = fit_marker_line(a, b).unwrap();
        let s5 = 5.0_f64.sqrt();
        assert!((l.direction[0] - 1.0 / s5).abs() < 1e-15);
        assert!((l.direction[1] - 2.0 / s5).abs() < 1e-15);
        assert!(l.signed_distance(a).abs() < 1e-15);
        assert!(l.signed_distance(b).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_rejected() {
        assert!(matches!(
            fit_marker_line(n(0.3, 0.3), n(0.3, 0.3)),
            Err(GeometryError::DegenerateAnnotation(_))
        ));
    }

    #[test]
    fn width_between_vertical_lines() {
        let l = fit_marker_line(n(-0.05, 0.0), n(-0.05, 1.0)).unwrap();
        let r = fit_marker_line(n(0.07, 0.0), n(0.07, 1.0)).unwrap();
        let w = lane_width_at_pov(&l, &r, 0.123).unwrap();
        assert!((w - 0.12).abs() < 1e-15);
        assert!(matches!(
            lane_width_at_pov(&r, &l, 0.123),
            Err(GeometryError::NonPositiveWidth(_))
        ));
    }

    #[test]
    fn width_between_converging_lines() {
        // Both lines meet at (0, -0.5). Left passes (-0.2, 0.5), right passes
        // (0.3, 0.5): slopes dx/dy of -0.2 and 0.3, so at row y the width is
        // 0.5 (y + 0.5). Width 0.06 at y = -0.38.
        let vp = n(0.0, -0.5);
        let l = fit_marker_line(vp, n(-0.2, 0.5)).unwrap();
        let r = fit_marker_line(vp, n(0.3, 0.5)).unwrap();
        let w = lane_width_at_pov(&l, &r, -0.38).unwrap();
        assert!((w - 0.06).abs() < 1e-12, "{w}");
    }

    #[test]
    fn row_parallel_line_rejected() {
        let l = fit_marker_line(n(-0.1, 0.2), n(0.1, 0.2)).unwrap();
        let r = fit_marker_line(n(0.3, 0.0), n(0.3, 1.0)).unwrap();
        assert_eq!(lane_width_at_pov(&l, &r, 0.2), Err(GeometryError::ParallelToRow));
    }

    #[test]
    fn similar_triangles() {
        assert_eq!(range_from_width(3.0, 0.1, 0.0).unwrap(), (30.0, 30.0));
        let (z, r) = range_from_width(3.6, 0.12, 14.0).unwrap();
        assert!((z - 30.0).abs() < 1e-12 && (r - 16.0).abs() < 1e-12);
        let (z, r) = range_from_width(3.6, 0.30, 14.0).unwrap();
        assert!((z - 12.0).abs() < 1e-12 && (r + 2.0).abs() < 1e-12);
        assert!(range_from_width(3.6, 0.0, 14.0).is_err());
        assert!(range_from_width(3.6, -0.1, 0.0).is_err());
    }

    #[test]
    fn scale_invariance_and_monotonicity() {
        let (z, r) = range_from_width(3.6, 0.09, 12.0).unwrap();
        let (z2, r2) = range_from_width(3.6 * 2.5, 0.09, 12.0 * 2.5).unwrap();
        assert!((z2 - 2.5 * z).abs() < 1e-12 && (r2 - 2.5 * r).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for i in 1..100 {
            let (z, _) = range_from_width(3.6, i as f64 * 0.003, 0.0).unwrap();
            assert!(z < last);
            last = z;
        }
    }

    fn straight_annotation(cam: &CameraIntrinsics) -> FrameAnnotation {
        // Markers at X = -1.8 and +1.8 m, 2.3 m below the camera, sampled at
        // depths 25 and 35 m; POV ground point on the centerline at 30 m. The
        // vertical shift keeps the marker lines off the principal point.
        let px = |x: f64, z: f64| cam.normalized_to_pixel(n(x / z, 2.3 / z + 0.15)).unwrap();
        FrameAnnotation {
            t: 1.5,
            left_marker: [px(-1.8, 25.0), px(-1.8, 35.0)],
            right_marker: [px(1.8, 25.0), px(1.8, 35.0)],
            pov: px(0.0, 30.0),
            image_ref: None,
        }
    }

    #[test]
    fn frame_range_recovers_depth() {
        let cam = CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480).with_radial(-0.3, 0.1, 0.0);
        let fa = straight_annotation(&cam);
        let est = estimate_frame_range(&fa, &cam, 3.6, 10.0);
        assert!(est.qualified);
        assert!((est.z_c - 30.0).abs() < 1e-6, "{}", est.z_c);
        assert!((est.r - 20.0).abs() < 1e-6);
    }

    #[test]
    fn crossed_markers_disqualify() {
        let cam = CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480);
        let mut fa = straight_annotation(&cam);
        std::mem::swap(&mut fa.left_marker, &mut fa.right_marker);
        let est = estimate_frame_range(&fa, &cam, 3.6, 0.0);
        assert!(!est.qualified);
        assert_eq!(est.t, 1.5);
    }

    #[test]
    fn overlap_and_far_ranges_disqualify() {
        let cam = CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480);
        let fa = straight_annotation(&cam);
        // Trailer longer than the camera distance: R < 0.
        let est = estimate_frame_range(&fa, &cam, 3.6, 31.0);
        assert!(!est.qualified);
        assert!(est.r < 0.0);
        // Lane width so large the range exceeds the plausibility bound.
        assert!(!estimate_frame_range(&fa, &cam, 15.0, 0.0).qualified);
    }

    #[test]
    fn overlay_is_straight_without_distortion() {
        let cam = CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480);
        let fa = straight_annotation(&cam);
        let ov = overlay_segments(&fa, &cam).unwrap();
        for line in [&ov.left_marker, &ov.right_marker] {
            let (a, b) = (line[0], line[line.len() - 1]);
            for p in line.iter() {
                let cross = (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u);
                assert!(cross.abs() / a.distance(&b) < 1e-9);
            }
        }
        let seg = &ov.width_segment;
        assert!(seg.iter().all(|p| (p.v - seg[0].v).abs() < 1e-9));
    }

    #[test]
    fn overlay_passes_through_annotations_and_curves_under_distortion() {
        let cam = CameraIntrinsics::pinhole(800.0, 800.0, 360.0, 240.0, 720, 480).with_radial(-0.3, 0.0, 0.0);
        let px = |x: f64, z: f64| cam.normalized_to_pixel(n(x / z, 2.3 / z + 0.15)).unwrap();
        let fa = FrameAnnotation {
            t: 0.0,
            left_marker: [px(-1.8, 8.0), px(-1.8, 40.0)],
            right_marker: [px(1.8, 8.0), px(1.8, 40.0)],
            pov: px(0.0, 20.0),
            image_ref: None,
        };
        let ov = overlay_segments(&fa, &cam).unwrap();
        for p in fa.left_marker {
            assert!(distance_to_polyline(p, &ov.left_marker) < 1e-6);
        }
        for p in fa.right_marker {
            assert!(distance_to_polyline(p, &ov.right_marker) < 1e-6);
        }
        let line = &ov.left_marker;
        let (a, b) = (line[0], line[line.len() - 1]);
        let mid = line[line.len() / 2];
        let chord_mid_dev = {
            let cross = (b.u - a.u) * (mid.v - a.v) - (b.v - a.v) * (mid.u - a.u);
            cross.abs() / a.distance(&b)
        };
        assert!(chord_mid_dev > 0.5, "deviation {chord_mid_dev}");
    }
}
