mod common;

use std::fs;

use reargap::event::Direction;
use reargap::store::{load_catalog_root, load_event_bundle, save_event_bundle, StoreError};
use reargap::synthetic::{synthesize_event, EventSpec, SyntheticScene};
use serde_json::Value;

#[test]
fn shipped_fixture_parses() {
    let b = load_event_bundle(common::fixture_dir()).unwrap();
    assert_eq!(b.event.frames.len(), 10);
    assert_eq!(b.event.direction, Direction::Left);
    assert_eq!(b.event.t_lc, Some(10.8));
    assert!(b.event.frames.iter().all(|f| f.points.is_some()));
    let gt = b.ground_truth.as_ref().unwrap();
    assert_eq!((gt.r0_m, gt.rdot_mps), (40.0, -1.5));
}

#[test]
fn shipped_fixture_matches_its_generator() {
    let sim = synthesize_event(&EventSpec::default(), &SyntheticScene::reference(40.0)).unwrap();
    let b = load_event_bundle(common::fixture_dir()).unwrap();
    assert_eq!(b.event, sim.event);
    assert_eq!(b.radar.unwrap(), sim.radar);
    assert_eq!(b.ground_truth.unwrap(), sim.truth);
}

#[test]
fn fixture_is_canonical() {
    let tmp = tempfile::tempdir().unwrap();
    let b = load_event_bundle(common::fixture_dir()).unwrap();
    common::copy_dir(&common::fixture_dir(), tmp.path());
    save_event_bundle(tmp.path(), &b).unwrap();
    assert_eq!(
        common::tree_bytes(tmp.path()),
        common::tree_bytes(&common::fixture_dir())
    );
}

#[test]
fn missing_t_lc_in_fixture_copy() {
    let tmp = tempfile::tempdir().unwrap();
    common::copy_dir(&common::fixture_dir(), tmp.path());
    let path = tmp.path().join("event.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("t_lc_s");
    v.as_object_mut().unwrap().remove("utc_anchor");
    fs::write(&path, v.to_string()).unwrap();
    let err = load_event_bundle(tmp.path()).unwrap_err();
    let fields: Vec<_> = err.violations().iter().filter_map(|v| v.field.as_deref()).collect();
    assert_eq!(fields, ["t_lc_s", "utc_anchor"]);
    assert!(err.to_string().contains("t_lc_s"));
}

#[test]
fn catalog_root_rejects_duplicate_ids() {
    let tmp = tempfile::tempdir().unwrap();
    common::copy_dir(&common::fixture_dir(), &tmp.path().join("a"));
    let listed = load_catalog_root(tmp.path()).unwrap();
    assert_eq!(listed.len(), 1);
    assert!(listed[0].1.is_ok());
    common::copy_dir(&common::fixture_dir(), &tmp.path().join("b"));
    assert!(matches!(load_catalog_root(tmp.path()), Err(StoreError::DuplicateEventId(id)) if id == "sim-0001"));
}

#[test]
fn invalid_bundle_is_reported_not_dropped() {
    let tmp = tempfile::tempdir().unwrap();
    common::copy_dir(&common::fixture_dir(), &tmp.path().join("good"));
    common::copy_dir(&common::fixture_dir(), &tmp.path().join("bad"));
    fs::write(tmp.path().join("bad/channels.csv"), "t_s,speed_mps\n0,1\n").unwrap();
    let listed = load_catalog_root(tmp.path()).unwrap();
    assert_eq!(listed.len(), 2);
    let bad = listed.iter().find(|(p, _)| p.ends_with("bad")).unwrap();
    assert!(bad.1.as_ref().unwrap_err().violations().len() >= 4);
}
