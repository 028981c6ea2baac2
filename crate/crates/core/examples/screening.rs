//! Lane-change detection and event screening on synthetic channels.

use chrono::Duration;
use reargap::screening::{detect_lane_change, heading_span, screen_event, solar_zenith, GeoPoint, RampDatabase};
use reargap::synthetic::{synthesize_event, EventSpec, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = synthesize_event(&EventSpec::default(), &SyntheticScene::reference(40.0))?;
    let ev = &sim.event;
    let widths = ev.channels.lane_width.clone().unwrap_or_default();
    for b in detect_lane_change(&ev.channels, &widths) {
        match b {
            Ok(b) => println!(
                "lane change {}: start {:.1} s, crossing {:.1} s, end {:.1} s",
                b.direction, b.t_start, b.t_lc, b.t_end
            ),
            Err(e) => println!("rejected: {e}"),
        }
    }

    let t_lc = ev.t_lc.unwrap_or_default();
    let i = ev.channels.nearest_index(t_lc).unwrap_or(0);
    let (lat, lon) = (ev.channels.lat[i], ev.channels.lon[i]);
    let utc = ev.channels.utc_at(t_lc);
    println!("position {lat:.5}, {lon:.5} at {utc}");
    for h in [0, 6, 12] {
        let z = solar_zenith(lat, lon, utc + Duration::hours(h));
        println!("  zenith +{h:>2} h: {z:.2} deg");
    }
    println!("heading span: {:.2} deg", heading_span(&ev.channels.heading));

    let far = RampDatabase::default();
    let near = RampDatabase {
        points: vec![GeoPoint::new(lat, lon)],
    };
    println!("screening, no ramps:   {:?}", screen_event(ev, &far)?);
    println!("screening, ramp at LC: {:?}", screen_event(ev, &near)?);
    Ok(())
}
