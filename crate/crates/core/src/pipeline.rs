//! Per-event orchestration: screening, gap processing, conflict metrics and
//! serialization into catalog and result rows.

use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics};
use crate::conflict::WarningThresholds;
use crate::event::Subset;
use crate::screening::{screen_event, sv_speed_change, RampDatabase, ScreeningError};
use crate::store::{Catalog, CatalogRow, EventBundle, ResultRow, StoreError};
use crate::trajectory::{process_event_gap, GapOutcome};

pub const OUTCOME_SCREENED_OUT: &str = "screened_out";
pub const OUTCOME_SCREENING_INDETERMINATE: &str = "screening_indeterminate";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid camera configuration: {0}")]
    Camera(#[from] CameraError),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub catalog_row: CatalogRow,
    pub result_row: ResultRow,
    pub outcome: Option<GapOutcome>,
}

/// Runs one validated bundle through the whole chain. Events that fail
/// screening or gap processing still produce rows, tagged with an outcome
/// code.
pub fn run_pipeline(
    bundle: &EventBundle,
    cam: &CameraIntrinsics,
    thresholds: &WarningThresholds,
    ramp_db: &RampDatabase,
) -> Result<PipelineOutput, PipelineError> {
    cam.validate()?;
    thresholds.validate().map_err(PipelineError::Thresholds)?;
    let ev = &bundle.event;

    let screening = screen_event(ev, ramp_db);
    let subset = ev.subset.or_else(|| {
        screening
            .as_ref()
            .ok()
            .map(|s| if s.ramp_region { Subset::Ramp } else { Subset::NonRamp })
    });
    let sv_change = ev.t_lc.and_then(|t| sv_speed_change(&ev.channels, t).ok());

    let outcome = match &screening {
        Ok(s) if s.passes => Some(process_event_gap(
            ev,
            cam,
            ev.reference_lane_width(),
            ev.trailer_length,
            thresholds,
        )),
        _ => None,
    };
    let code = match (&screening, &outcome) {
        (_, Some(o)) => o.code().to_string(),
        (Ok(_), None) => OUTCOME_SCREENED_OUT.to_string(),
        (Err(ScreeningError::MissingLaneChangeTime), None) => "malformed_event".to_string(),
        (Err(_), None) => OUTCOME_SCREENING_INDETERMINATE.to_string(),
    };
    if let Err(e) = &screening {
        tracing::info!(event = %ev.event_id, error = %e, "screening indeterminate");
    }
    let gap = outcome.as_ref().and_then(GapOutcome::result);

    let result_row = ResultRow {
        event_id: ev.event_id.clone(),
        direction: ev.direction,
        subset,
        outcome: code.clone(),
        frames_used: gap.map(|g| g.frames_used),
        r_lc_m: gap.map(|g| g.r_lc),
        rdot_mps: gap.map(|g| g.rdot),
        delta_t_s: gap.map(|g| g.delta_t),
        ttc_s: gap.and_then(|g| g.ttc),
        d_req_mps2: gap.map(|g| g.d_req),
        ttc_warning: gap.map(|g| g.warning.ttc_warning),
        d_req_warning: gap.map(|g| g.warning.d_req_warning),
        range_warning: gap.map(|g| g.warning.range_warning),
        sv_speed_change_mps: sv_change,
    };
    let catalog_row = CatalogRow {
        event_id: ev.event_id.clone(),
        direction: ev.direction,
        subset,
        has_video: ev.has_video(),
        has_pov: ev.has_pov(),
        scenario_label: ev.scenario_label.clone(),
        screening: screening.ok(),
        outcome: code,
        gap: gap.cloned(),
    };
    Ok(PipelineOutput {
        catalog_row,
        result_row,
        outcome,
    })
}

/// Runs every bundle, spreading events over the available cores. Output is
/// sorted by event id regardless of scheduling.
pub fn run_batch(
    bundles: &[EventBundle],
    cam: &CameraIntrinsics,
    thresholds: &WarningThresholds,
    ramp_db: &RampDatabase,
) -> Result<Vec<PipelineOutput>, PipelineError> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(bundles.len().max(1));
    let chunk = bundles.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<PipelineOutput>, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = bundles
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|b| run_pipeline(b, cam, thresholds, ramp_db))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(bundles.len());
    for r in results {
        out.extend(r?);
    }
    out.sort_by(|a, b| a.result_row.event_id.cmp(&b.result_row.event_id));
    Ok(out)
}

pub fn catalog_from_outputs(outputs: &[PipelineOutput]) -> Result<Catalog, PipelineError> {
    Ok(Catalog::from_rows(
        outputs.iter().map(|o| o.catalog_row.clone()).collect(),
    )?)
}
