//! Replays the fuzz corpus seeds through the parsers with the same round-trip
//! properties the fuzz targets assert, so the seeds double as regression inputs.

use std::fs;
use std::path::PathBuf;

use gcl::config::RunConfig;
use gcl::io::{
    parse_affinity_grid, parse_checkpoint, parse_dataset, parse_metrics, parse_trials, write_affinity_grid,
    write_checkpoint, write_dataset, write_trials,
};

/// Seeds that must be rejected; every other seed must parse.
const INVALID: &[&str] = &[
    "config/duplicate-key",
    "config/unknown-key",
    "trials/bad-label",
    "checkpoint/huge-tensor",
    "dataset/short-row",
    "dataset/header-only",
    "affinity_grid/ragged",
];

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            let name = format!("{target}/{}", path.file_name().unwrap().to_string_lossy());
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn replay<T, E: std::fmt::Debug>(target: &str, parse: impl Fn(&str) -> Result<T, E>, round_trip: impl Fn(&T)) {
    for (name, text) in seeds(target) {
        match parse(&text) {
            Ok(value) => {
                assert!(!INVALID.contains(&name.as_str()), "{name} should be rejected");
                round_trip(&value);
            }
            Err(e) => assert!(INVALID.contains(&name.as_str()), "{name}: {e:?}"),
        }
    }
}

#[test]
fn config_seeds() {
    replay("config", RunConfig::parse, |c| assert_eq!(&RunConfig::parse(&c.to_text()).unwrap(), c));
}

#[test]
fn affinity_grid_seeds() {
    replay("affinity_grid", parse_affinity_grid, |a| {
        assert_eq!(&parse_affinity_grid(&write_affinity_grid(a)).unwrap(), a)
    });
}

#[test]
fn trial_seeds() {
    replay("trials", parse_trials, |t| assert_eq!(&parse_trials(&write_trials(t)).unwrap(), t));
}

#[test]
fn checkpoint_seeds() {
    replay("checkpoint", parse_checkpoint, |c| {
        assert_eq!(&parse_checkpoint(&write_checkpoint(c)).unwrap(), c)
    });
}

#[test]
fn dataset_seeds() {
    replay("dataset", parse_dataset, |d| assert_eq!(&parse_dataset(&write_dataset(d)).unwrap(), d));
}

#[test]
fn metrics_seeds() {
    replay("metrics", parse_metrics, |_| {});
}
