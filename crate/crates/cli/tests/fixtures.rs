//! Pins the bundled fixture files to the code that defines them. Run
//! `cargo test --test fixtures -- --ignored` after changing the scenario
//! format or the reference topology to rewrite them.

use std::path::PathBuf;

use tracelab_cli::commands;
use tracelab_cli::scenario::{Experiment, Scenario};
use tracelab_core::topology::build_fig10_topology;

fn scenario_text() -> String {
    Scenario {
        topology: build_fig10_topology(),
        experiment: Experiment { packet_seed: Some(7), ..Experiment::default() },
    }
    .save()
}

fn scenario_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig10.topo"))
}

fn golden_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/fig10_transcript.txt"))
}

#[test]
fn bundled_scenario_matches_the_generator() {
    let bundled = std::fs::read_to_string(scenario_path()).unwrap();
    assert_eq!(bundled, scenario_text());
}

#[test]
fn golden_transcript_matches_a_fresh_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.txt");
    commands::spie_trace(&scenario_path(), &out).unwrap();
    let fresh = std::fs::read(&out).unwrap();
    let golden = std::fs::read(golden_path()).unwrap();
    assert_eq!(fresh, golden, "bundled golden transcript is stale");
}

#[test]
#[ignore = "rewrites the bundled fixture files"]
fn regenerate_fixtures() {
    std::fs::create_dir_all(scenario_path().parent().unwrap()).unwrap();
    std::fs::write(scenario_path(), scenario_text()).unwrap();
    std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
    commands::spie_trace(&scenario_path(), &golden_path()).unwrap();
}
