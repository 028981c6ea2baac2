//! Range one annotated frame from the lane width at the POV row.
//!
//! `cargo run --example frame_range [distance_m] [trailer_m]`

use reargap::gap::{estimate_frame_range, frame_geometry, overlay_segments};
use reargap::synthetic::{synthesize_frame, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>());
    let distance = args.next().transpose()?.unwrap_or(30.0);
    let trailer = args.next().transpose()?.unwrap_or(16.2);

    let scene = SyntheticScene {
        trailer_length: trailer.min(distance - 1.0),
        ..SyntheticScene::reference(distance)
    };
    let (fa, truth) = synthesize_frame(&scene, 0.0)?;
    println!("annotation:");
    println!("  left  {:?}", fa.left_marker);
    println!("  right {:?}", fa.right_marker);
    println!("  pov   {:?}", fa.pov);

    let g = frame_geometry(&fa, &scene.cam)?;
    let est = estimate_frame_range(&fa, &scene.cam, scene.lane_width, scene.trailer_length);
    println!("normalized lane width at POV row: {:.6}", g.w);
    println!("camera-to-POV distance: {:.3} m", est.z_c);
    println!(
        "gap behind trailer: {:.3} m (truth {truth:.3} m, qualified {})",
        est.r, est.qualified
    );

    let ov = overlay_segments(&fa, &scene.cam)?;
    println!(
        "overlay: {} + {} marker vertices, width segment from ({:.1}, {:.1}) to ({:.1}, {:.1})",
        ov.left_marker.len(),
        ov.right_marker.len(),
        ov.width_segment[0].u,
        ov.width_segment[0].v,
        ov.width_segment.last().unwrap().u,
        ov.width_segment.last().unwrap().v
    );
    Ok(())
}
