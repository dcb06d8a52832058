//! Cost-optimal control charts for drifting processes with random shift
//! sizes, imperfect repair and unreliable sampling.
//!
//! The sampling-time behaviour is discretised into a Markov chain whose
//! stationary distribution gives the long-run expected cost and cost standard
//! deviation of a `(h, k)` policy; [`optimizer`] searches for the policy
//! minimising `p E(C) + (1 - p) σ(C)`.

pub mod baseline;
pub mod chain;
pub mod cost;
pub mod distributions;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod quadrature;
pub mod scenario;
pub mod simulator;
pub mod special;

pub use baseline::BaselineModel;
pub use chain::{ChainArtifacts, ChartPolicy, DiscretisationGrid, RepairTable};
pub use cost::{CostModel, DesignPoint};
pub use distributions::{RepairLaw, SamplingLaw, ShiftLaw};
pub use error::{Error, Result};
pub use model::{ChartModel, ProcessModel};
pub use optimizer::{Evaluator, MinimizeReport, SearchBox};
pub use simulator::{AlarmRule, SimConfig, SimReport};
pub use scenario::{DesignReport, Scenario};
