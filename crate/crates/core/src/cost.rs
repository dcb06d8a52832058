//! Long-run cost of a chart policy under the stationary distribution.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainArtifacts, ChartPolicy, DiscretisationGrid};
use crate::distributions::{self, ShiftLaw};
use crate::error::{Error, Result};

/// Unit costs and the weight `p` of the expected cost in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Cost per successful sampling.
    pub c_s: f64,
    /// Out-of-control cost per squared distance per unit time.
    pub c_o: f64,
    /// Base repair cost.
    pub c_rb: f64,
    /// Repair cost per squared distance.
    pub c_rs: f64,
    /// Weight of the expected cost in `G`.
    pub p: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("costs.c_s", self.c_s),
            ("costs.c_o", self.c_o),
            ("costs.c_rb", self.c_rb),
            ("costs.c_rs", self.c_rs),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::violation(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::violation("costs.p", format!("must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

/// A policy together with its cost summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub policy: ChartPolicy,
    pub expected_cost: f64,
    pub cost_std: f64,
    pub objective: f64,
    pub alarm_mass: f64,
}

impl DesignPoint {
    pub fn from_artifacts(artifacts: &ChainArtifacts, costs: &CostModel) -> Self {
        let expected_cost = expected_cost(artifacts, costs);
        let cost_std = cost_std(artifacts, costs);
        DesignPoint {
            policy: artifacts.policy,
            expected_cost,
            cost_std,
            objective: objective(expected_cost, cost_std, costs.p),
            alarm_mass: artifacts.alarm_mass(),
        }
    }
}

/// `A²_i = Σ_j E_h(H²_{Δ'(j)}) M_ij`: expected squared distance over the
/// interval that follows a sampling in state `i`.
pub fn a_squared(
    repair_start: &Array2<f64>,
    law: &ShiftLaw,
    policy: ChartPolicy,
    grid: &DiscretisationGrid,
) -> Vec<f64> {
    let per_start: Vec<f64> = (0..grid.v_count)
        .map(|j| distributions::sq_distance(law, grid.distance(j), policy.h))
        .collect();
    repair_start
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&per_start).map(|(m, e)| m * e).sum())
        .collect()
}

fn repair_cost(costs: &CostModel, grid: &DiscretisationGrid, v: usize) -> f64 {
    let d = grid.distance(v);
    costs.c_rb + costs.c_rs * d * d
}

/// Cost per unit time attributed to each recurrent state: sampling, repair
/// (alarm states only) and out-of-control operation over the next interval.
pub fn state_costs(artifacts: &ChainArtifacts, costs: &CostModel) -> Vec<f64> {
    let n = artifacts.grid.v_count;
    let h = artifacts.policy.h;
    (0..artifacts.stationary.len())
        .map(|i| {
            let mut c = costs.c_s * artifacts.sampling[i] / h + costs.c_o * artifacts.a_sq[i];
            if i >= n - 1 {
                c += repair_cost(costs, &artifacts.grid, i - (n - 1) + 1) / h;
            }
            c
        })
        .collect()
}

/// `E(C) = c_s (T'·P) / h + Σ_v (c_rb + c_rs Δ'(v)²) P_r(v) / h + c_o (A²·P)`.
pub fn expected_cost(artifacts: &ChainArtifacts, costs: &CostModel) -> f64 {
    let n = artifacts.grid.v_count;
    let h = artifacts.policy.h;
    let p = &artifacts.stationary;
    let sampling: f64 = artifacts.sampling.iter().zip(p).map(|(t, p)| t * p).sum();
    let repair: f64 = (1..n)
        .map(|v| repair_cost(costs, &artifacts.grid, v) * p[n - 1 + v - 1])
        .sum();
    let drift: f64 = artifacts.a_sq.iter().zip(p).map(|(a, p)| a * p).sum();
    costs.c_s * sampling / h + repair / h + costs.c_o * drift
}

/// Standard deviation of the per-state cost under the stationary distribution.
pub fn cost_std(artifacts: &ChainArtifacts, costs: &CostModel) -> f64 {
    let per_state = state_costs(artifacts, costs);
    let mean: f64 = per_state.iter().zip(&artifacts.stationary).map(|(c, p)| c * p).sum();
    let var: f64 = per_state
        .iter()
        .zip(&artifacts.stationary)
        .map(|(c, p)| p * (c - mean) * (c - mean))
        .sum();
    // the centred form cannot go negative beyond rounding
    var.max(0.0).sqrt()
}

/// `G = p E(C) + (1 - p) σ(C)`.
pub fn objective(expected_cost: f64, cost_std: f64, p: f64) -> f64 {
    p * expected_cost + (1.0 - p) * cost_std
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::RepairTable;
    use crate::distributions::{RepairLaw, SamplingLaw};
    use crate::model::{ChartModel, ProcessModel};

    fn model() -> ChartModel {
        ChartModel {
            process: ProcessModel {
                mu0: 0.0,
                sigma: 1.0,
                shift_rate: 0.2,
                shift_mean: 2.0,
            },
            repair: RepairLaw { alpha: 1.0, beta: 3.0 },
            sampling: SamplingLaw::BetaState { a: 0.01, b: 1.0, zeta: 1.0 },
            costs: CostModel {
                c_s: 1.0,
                c_o: 20.0,
                c_rb: 10.0,
                c_rs: 10.0,
                p: 0.9,
            },
            grid: DiscretisationGrid::new(0.25, 30).unwrap(),
        }
    }

    #[test]
    fn objective_endpoints() {
        assert_eq!(objective(3.0, 7.0, 1.0), 3.0);
        assert_eq!(objective(3.0, 7.0, 0.0), 7.0);
        assert!((objective(0.477, 0.418, 0.9) - 0.4711).abs() < 1e-12);
    }

    #[test]
    fn zero_costs_give_zero() {
        let m = model();
        let art = ChainArtifacts::build(&m, ChartPolicy::new(0.5, 1.0).unwrap()).unwrap();
        let zero = CostModel {
            c_s: 0.0,
            c_o: 0.0,
            c_rb: 0.0,
            c_rs: 0.0,
            p: 0.5,
        };
        assert_eq!(expected_cost(&art, &zero), 0.0);
        assert_eq!(cost_std(&art, &zero), 0.0);
    }

    #[test]
    fn formula_matches_state_average() {
        let m = model();
        let art = ChainArtifacts::build(&m, ChartPolicy::new(0.5, 1.0).unwrap()).unwrap();
        let direct = expected_cost(&art, &m.costs);
        let averaged: f64 = state_costs(&art, &m.costs)
            .iter()
            .zip(&art.stationary)
            .map(|(c, p)| c * p)
            .sum();
        assert!((direct - averaged).abs() < 1e-12 * direct);
    }

    #[test]
    fn out_of_control_rows_use_unchanged_distance() {
        let m = model();
        let repair = RepairTable::new(&m.repair, &m.grid).unwrap();
        let mm = crate::chain::repair_start_matrix(&repair, &m.grid);
        let policy = ChartPolicy::new(0.4, 1.0).unwrap();
        let a = a_squared(&mm, &m.shift_law(), policy, &m.grid);
        for v in 1..m.grid.v_count {
            let e = distributions::sq_distance(&m.shift_law(), m.grid.distance(v), 0.4);
            assert!((a[v - 1] - e).abs() < 1e-14);
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut c = model().costs;
        c.p = 1.5;
        match c.validate() {
            Err(Error::InvariantViolation { field, .. }) => assert_eq!(field, "costs.p"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
