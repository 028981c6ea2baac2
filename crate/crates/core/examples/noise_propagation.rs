//! Monte Carlo spread of the range under pixel noise.
//!
//! `cargo run --release --example noise_propagation [sigma_px] [trials]`

use reargap::gap::estimate_frame_range;
use reargap::stats::distribution_summary;
use reargap::synthetic::{derive_seed, synthesize_frame, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let sigma: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.75);
    let trials: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1000);

    for z in [10.0, 20.0, 30.0, 40.0, 60.0] {
        let mut errs = Vec::with_capacity(trials as usize);
        for k in 0..trials {
            let scene = SyntheticScene {
                pixel_noise_sigma: sigma,
                rng_seed: derive_seed(42, k),
                ..SyntheticScene::reference(z)
            };
            let (fa, truth) = synthesize_frame(&scene, 0.0)?;
            let est = estimate_frame_range(&fa, &scene.cam, scene.lane_width, 0.0);
            if est.qualified {
                errs.push((est.r - truth) / truth);
            }
        }
        let s = distribution_summary(&errs)?;
        println!(
            "Z = {z:>4.0} m: {} trials, relative error mean {:+.3}% std {:.3}%",
            s.n,
            100.0 * s.mean,
            100.0 * s.std
        );
    }
    Ok(())
}
