//! Write one synthetic event bundle to disk and read it back.
//!
//! `cargo run --example simulate_bundle <dir>`

use std::path::Path;

use reargap::store::{load_event_bundle, save_event_bundle, EventBundle, FRAMES_DIR};
use reargap::synthetic::{render_frame, synthesize_event, EventSpec, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "sim-bundle".into());
    let scene = SyntheticScene::reference(40.0);
    let sim = synthesize_event(&EventSpec::default(), &scene)?;
    let bundle = EventBundle {
        event: sim.event,
        radar: Some(sim.radar),
        ground_truth: Some(sim.truth.clone()),
    };
    save_event_bundle(&dir, &bundle)?;
    for f in &bundle.event.frames {
        let frame_scene = SyntheticScene {
            pov_distance: sim.truth.range_at(f.t) + scene.trailer_length,
            ..scene.clone()
        };
        let name = f.image.as_deref().unwrap_or("frame.png");
        render_frame(&frame_scene).save(Path::new(&dir).join(FRAMES_DIR).join(name))?;
    }
    let back = load_event_bundle(&dir)?;
    let ev = &back.event;
    println!(
        "{}: {} frames, direction {}, t_lc {:?}, {} channel samples, {} radar samples",
        ev.event_id,
        ev.frames.len(),
        ev.direction,
        ev.t_lc,
        ev.channels.len(),
        back.radar.as_ref().map_or(0, Vec::len)
    );
    println!("round trip equal: {}", back == bundle);
    Ok(())
}
