mod common;

use std::path::Path;
use std::process::{Command, Output};

use riseer_core::artifacts::ArtifactKind;

fn riseer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riseer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = riseer(args);
    assert!(out.status.success(), "riseer {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_commands_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, serde_json::to_vec(&common::two_blob_scenario(3)).unwrap()).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_vec(&common::small_config()).unwrap()).unwrap();
    let data = dir.path().join("data/records.csv");
    ok(&["synth", "--scenario", s(&scenario), "--out", s(&data)]);
    assert!(dir.path().join("data/records.truth.json").exists());

    let cases = [
        ("ingest", vec![ArtifactKind::Snapshots]),
        ("segment", vec![ArtifactKind::Snapshots, ArtifactKind::Segments]),
        (
            "paths",
            vec![
                ArtifactKind::Snapshots,
                ArtifactKind::Segments,
                ArtifactKind::Clusters,
                ArtifactKind::Paths,
                ArtifactKind::Indicators,
            ],
        ),
        ("forecast", vec![ArtifactKind::Snapshots, ArtifactKind::Forecast]),
        ("project", vec![ArtifactKind::Snapshots, ArtifactKind::Projection]),
    ];
    for (cmd, kinds) in cases {
        let out = dir.path().join(cmd);
        let printed = ok(&["--config", s(&config), cmd, "--input", s(&data), "--out", s(&out)]);
        for kind in ArtifactKind::ALL {
            let file = out.join(kind.file_name());
            assert_eq!(file.exists(), kinds.contains(&kind), "{cmd}: {}", file.display());
            if kinds.contains(&kind) {
                assert!(printed.contains(s(&file)));
                serde_json::from_slice::<serde_json::Value>(&std::fs::read(&file).unwrap()).unwrap();
            }
        }
    }
}

#[test]
fn run_reports_unchanged_store() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, serde_json::to_vec(&common::two_blob_scenario(4)).unwrap()).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_vec(&common::small_config()).unwrap()).unwrap();
    let data = dir.path().join("records.csv");
    let store = dir.path().join("store");
    ok(&["synth", "--scenario", s(&scenario), "--out", s(&data)]);
    let run = ["--config", s(&config), "run", "--input", s(&data), "--out", s(&store)];
    assert!(ok(&run).starts_with("wrote"));
    assert!(ok(&run).starts_with("unchanged"));
    let mut forced = run.to_vec();
    forced.push("--force");
    assert!(ok(&forced).starts_with("wrote"));
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = riseer(&["run", "--input", s(&dir.path().join("missing.csv")), "--out", s(&dir.path().join("store"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!dir.path().join("store").exists());

    let config = dir.path().join("bad.json");
    std::fs::write(&config, b"{\"forecast\": ").unwrap();
    let out = riseer(&["--config", s(&config), "ingest", "--input", "x.csv", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
