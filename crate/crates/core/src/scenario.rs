//! Scenario files (TOML), bundled scenarios and report/CSV emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{ChartPolicy, DiscretisationGrid};
use crate::cost::{CostModel, DesignPoint};
use crate::distributions::{RepairLaw, SamplingLaw};
use crate::error::{Error, Result};
use crate::model::{ChartModel, ProcessModel};
use crate::optimizer::{MinimizeReport, SearchBox};

/// Unit labels; no conversion is ever applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub time: String,
    pub measurement: String,
    pub currency: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub units: Units,
    pub process: ProcessModel,
    pub repair: RepairLaw,
    pub sampling: SamplingLaw,
    pub costs: CostModel,
    pub grid: DiscretisationGrid,
    pub search: SearchBox,
}

pub const LDL: &str = include_str!("../scenarios/ldl.scenario");
pub const SENS24: &str = include_str!("../scenarios/sens24.scenario");

/// Names of the scenarios compiled into the library.
pub const BUNDLED: &[&str] = &["ldl", "sens24"];

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// A bundled scenario by name.
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "ldl" => Self::parse(LDL),
            "sens24" => Self::parse(SENS24),
            other => Err(Error::invalid(format!(
                "no bundled scenario `{other}`; available: {}",
                BUNDLED.join(", ")
            ))),
        }
    }

    /// A path to a scenario file, or `bundled:<name>`. A path that does not
    /// exist but names a bundled scenario (`ldl.scenario`) resolves to it.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("bundled:") {
            return Self::bundled(name);
        }
        let path = Path::new(spec);
        if !path.exists() {
            let stem = spec.strip_suffix(".scenario").unwrap_or(spec);
            if BUNDLED.contains(&stem) {
                return Self::bundled(stem);
            }
        }
        Self::load(path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::violation("name", "must not be empty"));
        }
        self.model().validate()?;
        self.search.validate()
    }

    pub fn model(&self) -> ChartModel {
        ChartModel {
            process: self.process,
            repair: self.repair,
            sampling: self.sampling,
            costs: self.costs,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub evaluations: usize,
    pub converged: bool,
}

/// JSON report for `design` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub scenario: String,
    pub policy: ChartPolicy,
    pub expected_cost: f64,
    pub cost_std: f64,
    pub objective: f64,
    pub alarm_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub optimizer: Option<OptimizerSummary>,
}

impl DesignReport {
    pub fn from_point(scenario: &str, point: &DesignPoint) -> Self {
        DesignReport {
            scenario: scenario.to_string(),
            policy: point.policy,
            expected_cost: point.expected_cost,
            cost_std: point.cost_std,
            objective: point.objective,
            alarm_mass: point.alarm_mass,
            optimizer: None,
        }
    }

    pub fn from_minimize(scenario: &str, report: &MinimizeReport) -> Self {
        DesignReport {
            optimizer: Some(OptimizerSummary {
                evaluations: report.evaluations,
                converged: report.converged,
            }),
            ..Self::from_point(scenario, &report.best)
        }
    }
}

/// Column order of every design-point CSV.
pub const DESIGN_COLUMNS: [&str; 6] = ["h", "k", "expected_cost", "cost_std", "objective", "alarm_mass"];

pub fn write_design_csv<W: Write>(out: W, points: &[DesignPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DESIGN_COLUMNS)?;
    for p in points {
        w.write_record(
            [p.policy.h, p.policy.k, p.expected_cost, p.cost_std, p.objective, p.alarm_mass].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}
