//! Time to collision, required deceleration and the warning rule.

use reargap::conflict::{assess, warning_decision, WarningThresholds};
use reargap::event::Direction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let th = WarningThresholds::default();
    println!("thresholds: {}", serde_json::to_string(&th)?);
    println!(
        "{:>6} {:>7} {:>6} {:>9} {:>8} {:>5} {:>5} {:>5}",
        "dir", "R", "Rdot", "TTC", "D_req", "ttc", "dreq", "range"
    );
    let cases = [
        (Direction::Left, 30.0, -2.0),
        (Direction::Left, 8.0, -2.5),
        (Direction::Left, 4.0, -2.6),
        (Direction::Right, 12.0, 0.5),
        (Direction::Right, 40.0, 1.0),
        (Direction::Right, 15.0, 0.0),
    ];
    for (dir, r, rdot) in cases {
        let a = assess(r, rdot)?;
        let w = warning_decision(dir, r, rdot, &th)?;
        let ttc = a.ttc.map_or("-".to_string(), |t| format!("{t:.2}"));
        println!(
            "{:>6} {r:>7.1} {rdot:>6.1} {ttc:>9} {:>8.3} {:>5} {:>5} {:>5}",
            dir, a.d_req, w.ttc_warning, w.d_req_warning, w.range_warning
        );
    }
    Ok(())
}
