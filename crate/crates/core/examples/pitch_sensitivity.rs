//! Pitch errors: splay-angle ranging against lane-width ranging.

use reargap::synthetic::{pitch_sensitivity_experiment, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>9} {:>12} {:>12}", "Z (m)", "pitch", "splay err", "width err");
    for z in [20.0, 50.0] {
        let scene = SyntheticScene::reference(z);
        for pitch in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            match pitch_sensitivity_experiment(&scene, pitch) {
                Ok(s) => println!(
                    "{z:>8.0} {pitch:>8.1}° {:>11.1}% {:>11.2}%",
                    100.0 * s.splay_rel_err,
                    100.0 * s.lane_width_rel_err
                ),
                Err(e) => println!("{z:>8.0} {pitch:>8.1}° {e}"),
            }
        }
    }
    Ok(())
}
