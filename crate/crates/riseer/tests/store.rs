mod common;

use std::fs;

use riseer::store::{read_manifest, run_pipeline, sha256_hex, verify, RunInputs, RunOutcome, Store, MANIFEST_FILE};
use riseer_core::artifacts::ArtifactKind;

use common::{small_config, small_inputs};

fn entries(dir: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn run_writes_every_artifact_with_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = small_inputs();
    let RunOutcome::Written(m) = run_pipeline(&dir, &inputs, false).unwrap() else {
        panic!("fresh store must be written");
    };
    assert_eq!(m.artifacts.len(), 7);
    for kind in ArtifactKind::ALL {
        let e = &m.artifacts[kind.as_str()];
        assert_eq!(e.schema, kind.schema_id());
        let bytes = fs::read(dir.join(&e.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), e.sha256);
        assert_eq!(bytes.len() as u64, e.bytes);
    }
    assert_eq!(read_manifest(&dir).unwrap(), m);
    assert_eq!(m.dataset_id, format!("ds-{}", &m.input_hash[..16]));
    // no staging directories left behind
    assert_eq!(entries(tmp.path()), vec!["store".to_string()]);

    let store = Store::open(&dir).unwrap();
    assert_eq!(store.analysis.records, inputs.records);
}

#[test]
fn rerun_is_a_noop_and_forced_rerun_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = small_inputs();
    let first = run_pipeline(&dir, &inputs, false).unwrap();
    let manifest_bytes = fs::read(dir.join(MANIFEST_FILE)).unwrap();
    let again = run_pipeline(&dir, &inputs, false).unwrap();
    assert!(matches!(again, RunOutcome::Unchanged(_)));
    assert_eq!(again.manifest(), first.manifest());
    assert_eq!(fs::read(dir.join(MANIFEST_FILE)).unwrap(), manifest_bytes);

    let forced = run_pipeline(&dir, &inputs, true).unwrap();
    assert!(matches!(forced, RunOutcome::Written(_)));
    assert_eq!(forced.manifest().content_hashes(), first.manifest().content_hashes());
    assert_eq!(entries(tmp.path()), vec!["store".to_string()]);
}

#[test]
fn config_change_rebuilds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = small_inputs();
    let first = run_pipeline(&dir, &inputs, false).unwrap();
    let mut cfg = small_config();
    cfg.projection.seed += 1;
    let changed = RunInputs::new(inputs.records.clone(), 0, cfg).unwrap();
    let second = run_pipeline(&dir, &changed, false).unwrap();
    assert!(matches!(second, RunOutcome::Written(_)));
    assert_ne!(second.manifest().config_hash, first.manifest().config_hash);
    assert_eq!(second.manifest().input_hash, first.manifest().input_hash);
    assert_ne!(second.manifest().artifacts["projection"], first.manifest().artifacts["projection"]);
    assert_eq!(second.manifest().artifacts["clusters"], first.manifest().artifacts["clusters"]);
}

#[test]
fn failed_run_leaves_previous_store_intact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = small_inputs();
    let good = run_pipeline(&dir, &inputs, false).unwrap();
    let mut cfg = small_config();
    cfg.forecast.model.initial_years = 30;
    let bad = RunInputs::new(inputs.records.clone(), 0, cfg).unwrap();
    let err = run_pipeline(&dir, &bad, false).unwrap_err();
    assert!(err.to_string().contains("forecast"), "{err}");
    assert_eq!(&read_manifest(&dir).unwrap(), good.manifest());
    verify(&dir, good.manifest()).unwrap();
    assert_eq!(entries(tmp.path()), vec!["store".to_string()]);
}

#[test]
fn empty_dataset_aborts_at_ingest_without_a_store() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = RunInputs::new(Vec::new(), 0, small_config()).unwrap();
    let err = run_pipeline(&dir, &inputs, false).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("ingest") && msg.contains("degenerate dataset"), "{msg}");
    assert!(!dir.exists());
}

#[test]
fn tampered_artifact_is_rejected_and_rebuilt() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("store");
    let inputs = small_inputs();
    let first = run_pipeline(&dir, &inputs, false).unwrap();
    fs::write(dir.join("paths.json"), b"{}").unwrap();
    assert!(Store::open(&dir).is_err());
    let again = run_pipeline(&dir, &inputs, false).unwrap();
    assert!(matches!(again, RunOutcome::Written(_)));
    assert_eq!(again.manifest().content_hashes(), first.manifest().content_hashes());
}
