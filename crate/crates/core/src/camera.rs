//! Intrinsic camera model.
//!
//! Points move between three spaces:
//!
//! - pixel coordinates (`PixelPoint`), origin top-left, `v` pointing down;
//! - distorted normalized coordinates, obtained by inverting the affine camera
//!   matrix `K`;
//! - ideal normalized coordinates (`NormalizedPoint`) on the plane `Z = 1`,
//!   obtained by inverting the lens distortion.
//!
//! The lens model is the five-coefficient radial (k1, k2, k3) plus tangential
//! (p1, p2) model used by the common calibration toolboxes. Skew follows the
//! same convention: it is dimensionless and the `K[0][1]` entry is `skew * fx`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Iteration budget of the inverse distortion.
pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
/// Convergence tolerance of the inverse distortion, in normalized units.
pub const UNDISTORT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid camera parameters: {0}")]
    InvalidParameters(String),
    #[error("non-finite input coordinate")]
    NonFinite,
    #[error("inverse distortion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("length mismatch: {observed} observed vs {predicted} predicted points")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("empty point set")]
    Empty,
    #[error("cannot read camera file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// A point on a normalized image plane; the implicit third coordinate is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &NormalizedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A point in the camera frame: X right, Y down, Z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFramePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraFramePoint {
    /// Perspective division onto the plane `Z = 1`. `None` when the point is
    /// not in front of the camera.
    pub fn to_normalized(&self) -> Option<NormalizedPoint> {
        (self.z > 0.0).then(|| NormalizedPoint::new(self.x / self.z, self.y / self.z))
    }
}

fn zero() -> f64 {
    0.0
}

/// Intrinsic parameters of a single camera.
///
/// Deserializes from the flat JSON camera file; distortion coefficients and
/// skew default to zero when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "zero")]
    pub skew: f64,
    #[serde(default = "zero")]
    pub k1: f64,
    #[serde(default = "zero")]
    pub k2: f64,
    #[serde(default = "zero")]
    pub k3: f64,
    #[serde(default = "zero")]
    pub p1: f64,
    #[serde(default = "zero")]
    pub p2: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    /// Distortion-free camera.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, image_width: u32, image_height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            image_width,
            image_height,
        }
    }

    pub fn with_radial(mut self, k1: f64, k2: f64, k3: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self.k3 = k3;
        self
    }

    pub fn with_tangential(mut self, p1: f64, p2: f64) -> Self {
        self.p1 = p1;
        self.p2 = p2;
        self
    }

    pub fn with_skew(mut self, skew: f64) -> Self {
        self.skew = skew;
        self
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let coeffs = [
            self.fx, self.fy, self.cx, self.cy, self.skew, self.k1, self.k2, self.k3, self.p1, self.p2,
        ];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CameraError::InvalidParameters("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidParameters(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..f64::from(self.image_width)).contains(&self.cx)
            || !(0.0..f64::from(self.image_height)).contains(&self.cy)
        {
            return Err(CameraError::InvalidParameters(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.image_width, self.image_height
            )));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, CameraError> {
        let cam: Self = serde_json::from_str(s).map_err(|e| CameraError::InvalidParameters(e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CameraError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// The camera matrix `K`, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.fx, self.skew * self.fx, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn has_distortion(&self) -> bool {
        [self.k1, self.k2, self.k3, self.p1, self.p2].iter().any(|c| *c != 0.0)
    }

    fn radial_factor(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    fn tangential(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        (
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// `K^-1 (u, v, 1)`: pixel to distorted normalized coordinates.
    pub fn pixel_to_distorted_normalized(&self, p: PixelPoint) -> Result<NormalizedPoint, CameraError> {
        if !p.is_finite() {
            return Err(CameraError::NonFinite);
        }
        let y = (p.v - self.cy) / self.fy;
        let x = (p.u - self.cx) / self.fx - self.skew * y;
        Ok(NormalizedPoint::new(x, y))
    }

    /// Forward lens distortion of an ideal normalized point.
    pub fn distort_point(&self, p: NormalizedPoint) -> Result<NormalizedPoint, CameraError> {
        if !p.is_finite() {
            return Err(CameraError::NonFinite);
        }
        Ok(self.distort_unchecked(p))
    }

    fn distort_unchecked(&self, p: NormalizedPoint) -> NormalizedPoint {
        let radial = self.radial_factor(p.x * p.x + p.y * p.y);
        let (dx, dy) = self.tangential(p.x, p.y);
        NormalizedPoint::new(p.x * radial + dx, p.y * radial + dy)
    }

    /// Inverse lens distortion by fixed-point iteration
    /// `x <- (p_d - tangential(x)) / radial(x)`.
    pub fn undistort_point(&self, pd: NormalizedPoint) -> Result<NormalizedPoint, CameraError> {
        if !pd.is_finite() {
            return Err(CameraError::NonFinite);
        }
        if !self.has_distortion() {
            return Ok(pd);
        }
        let mut p = pd;
        let mut residual = self.distort_unchecked(p).distance(&pd);
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            if residual <= UNDISTORT_TOLERANCE {
                return Ok(p);
            }
            let radial = self.radial_factor(p.x * p.x + p.y * p.y);
            let (dx, dy) = self.tangential(p.x, p.y);
            p = NormalizedPoint::new((pd.x - dx) / radial, (pd.y - dy) / radial);
            residual = self.distort_unchecked(p).distance(&pd);
            if !residual.is_finite() {
                break;
            }
        }
        if residual <= UNDISTORT_TOLERANCE {
            Ok(p)
        } else {
            Err(CameraError::NoConvergence {
                iterations: UNDISTORT_MAX_ITERATIONS,
                residual,
            })
        }
    }

    /// `K f(p_n)`: ideal normalized coordinates to pixels.
    pub fn normalized_to_pixel(&self, p: NormalizedPoint) -> Result<PixelPoint, CameraError> {
        let d = self.distort_point(p)?;
        Ok(PixelPoint::new(
            self.fx * (d.x + self.skew * d.y) + self.cx,
            self.fy * d.y + self.cy,
        ))
    }

    /// Full inverse chain `f^-1(K^-1 p)`.
    pub fn pixel_to_normalized(&self, p: PixelPoint) -> Result<NormalizedPoint, CameraError> {
        self.undistort_point(self.pixel_to_distorted_normalized(p)?)
    }

    pub fn project(&self, p: CameraFramePoint) -> Option<PixelPoint> {
        p.to_normalized().and_then(|n| self.normalized_to_pixel(n).ok())
    }
}

/// Root mean squared Euclidean residual between two point sequences, in pixels.
pub fn reprojection_rmse(observed: &[PixelPoint], predicted: &[PixelPoint]) -> Result<f64, CameraError> {
    if observed.len() != predicted.len() {
        return Err(CameraError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(CameraError::Empty);
    }
    let sum: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| {
            let du = o.u - p.u;
            let dv = o.v - p.v;
            du * du + dv * dv
        })
        .sum();
    Ok((sum / observed.len() as f64).sqrt())
}
