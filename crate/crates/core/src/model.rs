use serde::{Deserialize, Serialize};

use crate::chain::DiscretisationGrid;
use crate::cost::CostModel;
use crate::distributions::{RepairLaw, SamplingLaw, ShiftLaw};
use crate::error::{Error, Result};

/// Measurement process: target, noise and drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessModel {
    /// Target value.
    pub mu0: f64,
    /// Measurement standard deviation.
    pub sigma: f64,
    /// Expected number of shifts per unit time.
    pub shift_rate: f64,
    /// Mean of the exponential shift size.
    pub shift_mean: f64,
}

impl ProcessModel {
    pub fn shift_law(&self) -> ShiftLaw {
        ShiftLaw {
            rate: self.shift_rate,
            mean_size: self.shift_mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu0.is_finite() {
            return Err(Error::violation("process.mu0", "must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::violation("process.sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if !(self.shift_rate.is_finite() && self.shift_rate > 0.0) {
            return Err(Error::violation(
                "process.shift_rate",
                format!("must be > 0, got {}", self.shift_rate),
            ));
        }
        if !(self.shift_mean.is_finite() && self.shift_mean > 0.0) {
            return Err(Error::violation(
                "process.shift_mean",
                format!("must be > 0, got {}", self.shift_mean),
            ));
        }
        Ok(())
    }
}

/// Everything needed to evaluate a chart policy: the stochastic laws, the
/// costs, and the discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartModel {
    pub process: ProcessModel,
    pub repair: RepairLaw,
    pub sampling: SamplingLaw,
    pub costs: CostModel,
    pub grid: DiscretisationGrid,
}

impl ChartModel {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.repair
            .validate()
            .map_err(|e| Error::violation("repair", e.to_string()))?;
        self.sampling
            .validate()
            .map_err(|e| Error::violation("sampling", e.to_string()))?;
        self.costs.validate()?;
        self.grid
            .validate()
            .map_err(|e| Error::violation("grid", e.to_string()))?;
        Ok(())
    }

    pub fn shift_law(&self) -> ShiftLaw {
        self.process.shift_law()
    }
}
