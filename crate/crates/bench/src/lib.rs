//! Shared fixtures for the benchmarks.

use costchart::{ChartModel, ChartPolicy, Scenario};

/// A bundled scenario's model with its grid resized to `v_count` states,
/// keeping the covered distance range.
pub fn model(name: &str, v_count: usize) -> ChartModel {
    let mut m = Scenario::bundled(name).expect("bundled scenario").model();
    let range = m.grid.delta_step * (m.grid.v_count - 1) as f64;
    m.grid.v_count = v_count;
    m.grid.delta_step = range / (v_count - 1) as f64;
    m
}

/// Reported optimum of each bundled scenario.
pub fn policy(name: &str) -> ChartPolicy {
    match name {
        "ldl" => ChartPolicy { h: 56.57, k: 0.143 },
        _ => ChartPolicy { h: 0.38, k: 1.14 },
    }
}
