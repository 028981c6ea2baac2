//! Distort and undistort pixels through a calibrated camera.
//!
//! `cargo run --example undistort [camera.json]`

use reargap::camera::{CameraIntrinsics, NormalizedPoint, PixelPoint};
use reargap::synthetic::reference_camera;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cam = match std::env::args().nth(1) {
        Some(path) => CameraIntrinsics::from_json_file(path)?,
        None => reference_camera(),
    };
    println!("K = {:?}", cam.matrix());
    println!(
        "distortion: k1={} k2={} k3={} p1={} p2={}",
        cam.k1, cam.k2, cam.k3, cam.p1, cam.p2
    );

    for (u, v) in [(360.0, 240.0), (600.0, 400.0), (20.0, 30.0), (700.0, 470.0)] {
        let px = PixelPoint::new(u, v);
        let n = cam.pixel_to_normalized(px)?;
        let back = cam.normalized_to_pixel(n)?;
        println!(
            "pixel ({u:>5.1}, {v:>5.1}) -> undistorted ({:+.6}, {:+.6}) -> pixel error {:.2e}",
            n.x,
            n.y,
            px.distance(&back)
        );
    }

    let ideal = NormalizedPoint::new(0.3, -0.2);
    let distorted = cam.distort_point(ideal)?;
    println!(
        "ideal (0.3, -0.2) lands at distorted ({:+.6}, {:+.6})",
        distorted.x, distorted.y
    );
    Ok(())
}
