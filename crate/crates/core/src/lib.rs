//! Rearward gap estimation for truck lane changes from mirror-camera frames.
//!
//! An operator marks two points on each lane marker of the target lane and
//! the shadow edge of the following vehicle (POV) in each rear-view frame.
//! With calibrated intrinsics and the known lane width, the horizontal lane
//! width at the POV row gives the camera-to-POV distance by similar
//! triangles. A weighted line fit over at least seven consecutive frames is
//! extrapolated to the lane-change instant, yielding the gap, range rate,
//! time to collision and required deceleration.
//!
//! | module | contents |
//! |---|---|
//! | [`camera`] | intrinsics, lens distortion, iterative undistortion |
//! | [`gap`] | per-frame range from lane width, reprojected overlays |
//! | [`trajectory`] | weighted fit, extrapolation, per-event processing |
//! | [`conflict`] | TTC, required deceleration, warning rule |
//! | [`event`] | events and vehicle channels |
//! | [`screening`] | lane-change detection, highway/straight/daytime/ramp filters |
//! | [`stats`] | summaries, regression with ANOVA, radar comparison |
//! | [`synthetic`] | ground-truth scenes and events, splay-angle ranging |
//! | [`store`] | bundle, catalog and result file formats |
//! | [`pipeline`] | screening through result rows, batch runs |
//! | [`commands`] | batch operations behind the `reargap` binary |
//! | [`service`] | HTTP API for annotation clients |
//!
//! The `examples/` directory has one runnable program per capability, e.g.
//! `cargo run --example frame_range`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod commands;
pub mod conflict;
pub mod event;
pub mod gap;
pub mod pipeline;
pub mod screening;
pub mod service;
pub mod stats;
pub mod store;
pub mod synthetic;
pub mod trajectory;

pub use camera::{CameraIntrinsics, PixelPoint};
pub use conflict::{WarningFlags, WarningThresholds};
pub use event::{Direction, LaneChangeEvent};
pub use gap::{estimate_frame_range, FrameAnnotation, RangeEstimate};
pub use pipeline::run_pipeline;
pub use store::{load_event_bundle, save_event_bundle, EventBundle};
pub use trajectory::{process_event_gap, GapOutcome, GapResult};
