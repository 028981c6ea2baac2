//! Weighted line fit over frame ranges and extrapolation to the lane change.

use reargap::trajectory::{compute_weights, extrapolate_to_lane_change, weighted_line_fit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let times = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
    let ranges = [30.4, 29.1, 28.8, 27.2, 26.9, 25.6, 25.1, 23.9];
    let weights = compute_weights(&ranges)?;
    let fit = weighted_line_fit(&times, &ranges, &weights)?;
    println!(
        "weights: {:?}",
        weights.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>()
    );
    println!("range rate a1 = {:.4} m/s, intercept a2 = {:.4} m", fit.a1, fit.a2);

    let t_n = *times.last().unwrap();
    for dt in [0.0, 0.2, 0.4, 0.6] {
        let r_lc = extrapolate_to_lane_change(&fit, t_n, t_n + dt)?;
        println!("t_lc = t_n + {dt:.1} s -> R_lc = {r_lc:.3} m");
    }
    match extrapolate_to_lane_change(&fit, t_n, t_n + 0.8) {
        Ok(r) => println!("unexpected: {r}"),
        Err(e) => println!("t_lc = t_n + 0.8 s -> {e}"),
    }
    Ok(())
}
