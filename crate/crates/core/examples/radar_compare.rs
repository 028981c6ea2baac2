//! Camera distances against radar on a synthetic noisy event.

use reargap::commands::camera_distances;
use reargap::stats::{radar_error_stats, TimedRange};
use reargap::store::EventBundle;
use reargap::synthetic::{synthesize_event, EventSpec, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let camera = [TimedRange::new(0.0, 20.0), TimedRange::new(0.5, 30.0)];
    let radar = [TimedRange::new(0.02, 21.0), TimedRange::new(0.49, 29.0)];
    println!("hand pair: {:?}", radar_error_stats(&camera, &radar)?);

    let spec = EventSpec {
        r0: 32.0,
        rdot: -1.0,
        n_frames: 12,
        ..EventSpec::default()
    };
    let scene = SyntheticScene {
        pixel_noise_sigma: 0.75,
        rng_seed: 11,
        ..SyntheticScene::reference(40.0)
    };
    let sim = synthesize_event(&spec, &scene)?;
    let bundle = EventBundle {
        event: sim.event,
        radar: Some(sim.radar),
        ground_truth: Some(sim.truth),
    };
    let cam = camera_distances(&bundle, &scene.cam);
    let cmp = radar_error_stats(&cam, bundle.radar.as_deref().unwrap_or_default())?;
    println!(
        "synthetic: {} pairs, error {:+.3} +/- {:.3} m ({:+.2} +/- {:.2} %)",
        cmp.n_pairs, cmp.mean_err_m, cmp.std_err_m, cmp.mean_err_pct, cmp.std_err_pct
    );
    Ok(())
}
