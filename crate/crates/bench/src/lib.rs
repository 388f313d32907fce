//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use dpc_core::io::{load_scenario, Scenario};

/// Loads one of the bundled scenarios from `scenarios/`.
pub fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    load_scenario(&path, None).expect("bundled scenario loads")
}
