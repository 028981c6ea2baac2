//! Full pipeline over a few synthetic events, printed as results CSV.

use reargap::conflict::WarningThresholds;
use reargap::event::Direction;
use reargap::pipeline::run_batch;
use reargap::screening::RampDatabase;
use reargap::store::{results_csv, EventBundle};
use reargap::synthetic::{synthesize_event, EventSpec, SyntheticScene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = SyntheticScene {
        trailer_length: 16.2,
        pixel_noise_sigma: 0.5,
        ..SyntheticScene::reference(40.0)
    };
    let specs = [
        EventSpec {
            event_id: "closing".into(),
            r0: 40.0,
            rdot: -1.5,
            ..EventSpec::default()
        },
        EventSpec {
            event_id: "fast-closing".into(),
            r0: 20.0,
            rdot: -4.0,
            n_frames: 8,
            ..EventSpec::default()
        },
        EventSpec {
            event_id: "right-tight".into(),
            direction: Direction::Right,
            r0: 12.0,
            rdot: 0.3,
            ..EventSpec::default()
        },
        EventSpec {
            event_id: "too-short".into(),
            n_frames: 6,
            ..EventSpec::default()
        },
        EventSpec {
            event_id: "slow".into(),
            sv_speed: 18.0,
            ..EventSpec::default()
        },
    ];
    let bundles = specs
        .iter()
        .map(|s| {
            synthesize_event(s, &scene).map(|sim| EventBundle {
                event: sim.event,
                radar: Some(sim.radar),
                ground_truth: Some(sim.truth),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = run_batch(
        &bundles,
        &scene.cam,
        &WarningThresholds::default(),
        &RampDatabase::default(),
    )?;
    let rows: Vec<_> = out.iter().map(|o| o.result_row.clone()).collect();
    print!("{}", results_csv(&rows)?);
    Ok(())
}
