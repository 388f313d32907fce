#![allow(dead_code)]

use std::path::PathBuf;

use dpc_core::io::{self, Scenario};
use dpc_core::noise::NoiseSchedule;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    io::load_scenario(&scenario_path(name), None).expect("bundled scenario loads")
}

/// Same scenario with every agent's noise switched off.
pub fn silent(mut s: Scenario) -> Scenario {
    let n = s.config.schedules.len();
    s.config.schedules = vec![NoiseSchedule::exponential(0.0, 0.9).unwrap(); n];
    s
}
