//! Policy search: single evaluations, multi-start Nelder–Mead over the
//! `(h, k)` box, Cartesian sweeps and one-factor sensitivity studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainArtifacts, ChartPolicy, RepairTable};
use crate::cost::DesignPoint;
use crate::distributions::SamplingLaw;
use crate::error::{Error, Result};
use crate::model::ChartModel;

/// Box constraints and starting point for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub h_min: f64,
    pub h_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub h_init: f64,
    pub k_init: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    8
}

impl SearchBox {
    pub fn validate(&self) -> Result<()> {
        let all = [self.h_min, self.h_max, self.k_min, self.k_max, self.h_init, self.k_init];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::violation("search", "bounds and start must be finite"));
        }
        if !(self.h_min > 0.0) {
            return Err(Error::violation("search.h_min", "must be > 0"));
        }
        if !(self.h_min < self.h_max) {
            return Err(Error::violation("search.h_max", "must exceed h_min"));
        }
        if !(self.k_min >= 0.0) {
            return Err(Error::violation("search.k_min", "must be >= 0"));
        }
        if !(self.k_min < self.k_max) {
            return Err(Error::violation("search.k_max", "must exceed k_min"));
        }
        if !(self.h_min..=self.h_max).contains(&self.h_init) {
            return Err(Error::violation("search.h_init", "must lie inside [h_min, h_max]"));
        }
        if !(self.k_min..=self.k_max).contains(&self.k_init) {
            return Err(Error::violation("search.k_init", "must lie inside [k_min, k_max]"));
        }
        if self.restarts == 0 {
            return Err(Error::violation("search.restarts", "must be >= 1"));
        }
        Ok(())
    }

    fn to_policy(&self, u: [f64; 2]) -> ChartPolicy {
        ChartPolicy {
            h: self.h_min + u[0].clamp(0.0, 1.0) * (self.h_max - self.h_min),
            k: self.k_min + u[1].clamp(0.0, 1.0) * (self.k_max - self.k_min),
        }
    }

    fn to_unit(&self, p: ChartPolicy) -> [f64; 2] {
        [
            (p.h - self.h_min) / (self.h_max - self.h_min),
            (p.k - self.k_min) / (self.k_max - self.k_min),
        ]
    }

    pub fn contains(&self, p: ChartPolicy) -> bool {
        (self.h_min..=self.h_max).contains(&p.h) && (self.k_min..=self.k_max).contains(&p.k)
    }

    /// The configured start followed by Halton points filling the box.
    pub fn starts(&self) -> Vec<ChartPolicy> {
        let mut out = vec![ChartPolicy {
            h: self.h_init,
            k: self.k_init,
        }];
        for i in 1..self.restarts {
            out.push(self.to_policy([halton(i, 2), halton(i, 3)]));
        }
        out
    }
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Evaluates policies for one model, reusing the policy-independent repair table.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    model: &'a ChartModel,
    repair: RepairTable,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a ChartModel) -> Result<Self> {
        model.validate()?;
        let repair = RepairTable::new(&model.repair, &model.grid)?;
        Ok(Evaluator { model, repair })
    }

    pub fn model(&self) -> &ChartModel {
        self.model
    }

    pub fn artifacts(&self, policy: ChartPolicy) -> Result<ChainArtifacts> {
        ChainArtifacts::build_with(self.model, policy, &self.repair)
    }

    pub fn evaluate(&self, policy: ChartPolicy) -> Result<DesignPoint> {
        let artifacts = self.artifacts(policy)?;
        Ok(DesignPoint::from_artifacts(&artifacts, &self.model.costs))
    }
}

/// Builds the chain for `policy`, solves it and summarises the costs.
pub fn evaluate(model: &ChartModel, policy: ChartPolicy) -> Result<DesignPoint> {
    Evaluator::new(model)?.evaluate(policy)
}

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone, Serialize)]
pub struct StartOutcome {
    pub start: ChartPolicy,
    pub start_objective: Option<f64>,
    pub best: Option<DesignPoint>,
    pub evaluations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeReport {
    pub best: DesignPoint,
    pub evaluations: usize,
    /// True when the winning start met the simplex-size tolerance.
    pub converged: bool,
    pub starts: Vec<StartOutcome>,
}

/// Simplex-diameter tolerance in unit-box coordinates.
pub const SIMPLEX_TOL: f64 = 1e-4;
/// Evaluation budget per start.
pub const MAX_EVALS_PER_START: usize = 500;

fn better(a: &DesignPoint, b: &DesignPoint) -> bool {
    ordering(a, b) == std::cmp::Ordering::Less
}

/// Lexicographic `(G, h, k)` order used to merge results deterministically.
fn ordering(a: &DesignPoint, b: &DesignPoint) -> std::cmp::Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then(a.policy.h.total_cmp(&b.policy.h))
        .then(a.policy.k.total_cmp(&b.policy.k))
}

struct Vertex {
    u: [f64; 2],
    value: f64,
    point: Option<DesignPoint>,
}

fn nelder_mead(eval: &Evaluator, search: &SearchBox, start: ChartPolicy) -> StartOutcome {
    let evaluations = std::cell::Cell::new(0usize);
    let first_error: std::cell::RefCell<Option<String>> = Default::default();
    let probe = |u: [f64; 2]| -> Vertex {
        let u = [u[0].clamp(0.0, 1.0), u[1].clamp(0.0, 1.0)];
        evaluations.set(evaluations.get() + 1);
        match eval.evaluate(search.to_policy(u)) {
            Ok(dp) if dp.objective.is_finite() => Vertex {
                u,
                value: dp.objective,
                point: Some(dp),
            },
            Ok(_) => Vertex {
                u,
                value: f64::INFINITY,
                point: None,
            },
            Err(e) => {
                first_error.borrow_mut().get_or_insert_with(|| e.to_string());
                Vertex {
                    u,
                    value: f64::INFINITY,
                    point: None,
                }
            }
        }
    };

    let u0 = search.to_unit(start);
    let step = 0.1;
    let offset = |x: f64| if x + step <= 1.0 { x + step } else { x - step };
    let mut simplex = vec![
        probe(u0),
        probe([offset(u0[0]), u0[1]]),
        probe([u0[0], offset(u0[1])]),
    ];
    let start_objective = simplex[0].point.map(|p| p.objective);
    let mut converged = false;

    loop {
        simplex.sort_by(|a, b| a.value.total_cmp(&b.value));
        let diameter = simplex
            .iter()
            .flat_map(|a| simplex.iter().map(move |b| dist(a.u, b.u)))
            .fold(0.0, f64::max);
        if diameter < SIMPLEX_TOL {
            converged = true;
            break;
        }
        if evaluations.get() >= MAX_EVALS_PER_START {
            break;
        }
        let centroid = [
            0.5 * (simplex[0].u[0] + simplex[1].u[0]),
            0.5 * (simplex[0].u[1] + simplex[1].u[1]),
        ];
        let worst = simplex[2].u;
        let along = |t: f64| [centroid[0] + t * (centroid[0] - worst[0]), centroid[1] + t * (centroid[1] - worst[1])];

        let reflected = probe(along(1.0));
        if reflected.value < simplex[0].value {
            let expanded = probe(along(2.0));
            simplex[2] = if expanded.value < reflected.value { expanded } else { reflected };
            continue;
        }
        if reflected.value < simplex[1].value {
            simplex[2] = reflected;
            continue;
        }
        let contracted = if reflected.value < simplex[2].value {
            probe(along(0.5))
        } else {
            probe(along(-0.5))
        };
        if contracted.value < simplex[2].value.min(reflected.value) {
            simplex[2] = contracted;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].u;
        for i in 1..3 {
            let u = simplex[i].u;
            simplex[i] = probe([best[0] + 0.5 * (u[0] - best[0]), best[1] + 0.5 * (u[1] - best[1])]);
        }
    }

    let best = simplex
        .iter()
        .filter_map(|v| v.point)
        .min_by(ordering);
    StartOutcome {
        start,
        start_objective,
        best,
        evaluations: evaluations.get(),
        converged,
        error: if best.is_none() { first_error.into_inner() } else { None },
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Multi-start Nelder–Mead minimisation of `G` over the search box.
pub fn minimize(model: &ChartModel, search: &SearchBox) -> Result<MinimizeReport> {
    search.validate()?;
    let eval = Evaluator::new(model)?;
    minimize_with(&eval, search)
}

pub fn minimize_with(eval: &Evaluator, search: &SearchBox) -> Result<MinimizeReport> {
    search.validate()?;
    let starts: Vec<StartOutcome> = search
        .starts()
        .into_par_iter()
        .map(|s| nelder_mead(eval, search, s))
        .collect();
    let evaluations = starts.iter().map(|s| s.evaluations).sum();
    let winner = starts
        .iter()
        .filter_map(|s| s.best.map(|b| (b, s.converged)))
        .fold(None, |acc: Option<(DesignPoint, bool)>, cand| match acc {
            Some(cur) if !better(&cand.0, &cur.0) => Some(cur),
            _ => Some(cand),
        });
    match winner {
        Some((best, converged)) => Ok(MinimizeReport {
            best,
            evaluations,
            converged,
            starts,
        }),
        None => {
            let reasons: Vec<String> = starts
                .iter()
                .map(|s| {
                    format!(
                        "start (h={}, k={}): {}",
                        s.start.h,
                        s.start.k,
                        s.error.as_deref().unwrap_or("no finite objective")
                    )
                })
                .collect();
            Err(Error::OptimizerFailure(reasons.join("; ")))
        }
    }
}

/// Evaluates every `(h, k)` pair, `h`-major.
pub fn sweep(model: &ChartModel, h_grid: &[f64], k_grid: &[f64]) -> Result<Vec<DesignPoint>> {
    if h_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let eval = Evaluator::new(model)?;
    let cells: Vec<ChartPolicy> = h_grid
        .iter()
        .flat_map(|&h| k_grid.iter().map(move |&k| ChartPolicy { h, k }))
        .collect();
    cells
        .into_par_iter()
        .map(|p| {
            p.validate()?;
            eval.evaluate(p)
        })
        .collect()
}

/// Writes `k`, `v` or `h:k` style ranges: `start:end:count` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Scalar model fields that [`sensitivity`] can vary.
pub const PARAMETERS: &[&str] = &[
    "process.mu0",
    "process.sigma",
    "process.shift_rate",
    "process.shift_mean",
    "repair.alpha",
    "repair.beta",
    "sampling.q",
    "sampling.z",
    "sampling.a",
    "sampling.b",
    "sampling.zeta",
    "costs.c_s",
    "costs.c_o",
    "costs.c_rb",
    "costs.c_rs",
    "costs.p",
];

fn canonical(name: &str) -> Option<&'static str> {
    let alias = match name {
        "mu0" => "process.mu0",
        "sigma" => "process.sigma",
        "s" | "shift_rate" => "process.shift_rate",
        "delta" | "shift_mean" => "process.shift_mean",
        "alpha" => "repair.alpha",
        "beta" => "repair.beta",
        "q" => "sampling.q",
        "z" => "sampling.z",
        "a" => "sampling.a",
        "b" => "sampling.b",
        "zeta" => "sampling.zeta",
        "c_s" => "costs.c_s",
        "c_o" => "costs.c_o",
        "c_rb" => "costs.c_rb",
        "c_rs" => "costs.c_rs",
        "p" => "costs.p",
        other => other,
    };
    PARAMETERS.iter().copied().find(|p| *p == alias)
}

/// Sets a named scalar field of `model`.
pub fn set_parameter(model: &mut ChartModel, name: &str, value: f64) -> Result<()> {
    let key = canonical(name).ok_or_else(|| {
        Error::invalid(format!("unknown parameter `{name}`; expected one of {}", PARAMETERS.join(", ")))
    })?;
    let mismatch = || Error::invalid(format!("parameter `{key}` does not apply to the configured sampling law"));
    match key {
        "process.mu0" => model.process.mu0 = value,
        "process.sigma" => model.process.sigma = value,
        "process.shift_rate" => model.process.shift_rate = value,
        "process.shift_mean" => model.process.shift_mean = value,
        "repair.alpha" => model.repair.alpha = value,
        "repair.beta" => model.repair.beta = value,
        "costs.c_s" => model.costs.c_s = value,
        "costs.c_o" => model.costs.c_o = value,
        "costs.c_rb" => model.costs.c_rb = value,
        "costs.c_rs" => model.costs.c_rs = value,
        "costs.p" => model.costs.p = value,
        _ => match (&mut model.sampling, key) {
            (SamplingLaw::Logistic { q, .. }, "sampling.q") => *q = value,
            (SamplingLaw::Logistic { z, .. }, "sampling.z") => *z = value,
            (SamplingLaw::BetaState { a, .. }, "sampling.a") => *a = value,
            (SamplingLaw::BetaState { b, .. }, "sampling.b") => *b = value,
            (SamplingLaw::BetaState { zeta, .. }, "sampling.zeta") => *zeta = value,
            _ => return Err(mismatch()),
        },
    }
    model.validate()
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub value: f64,
    pub optimum: DesignPoint,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Constant,
    Nondecreasing,
    Nonincreasing,
    Mixed,
}

/// Direction of a sequence; steps smaller than `rel_tol` (relative) are ignored.
pub fn trend(values: &[f64], rel_tol: f64) -> Trend {
    let mut up = false;
    let mut down = false;
    for w in values.windows(2) {
        let scale = w[0].abs().max(w[1].abs()).max(f64::MIN_POSITIVE);
        let d = (w[1] - w[0]) / scale;
        if d > rel_tol {
            up = true;
        } else if d < -rel_tol {
            down = true;
        }
    }
    match (up, down) {
        (false, false) => Trend::Constant,
        (true, false) => Trend::Nondecreasing,
        (false, true) => Trend::Nonincreasing,
        (true, true) => Trend::Mixed,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityTrends {
    pub h: Trend,
    pub k: Trend,
    pub expected_cost: Trend,
    pub cost_std: Trend,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub parameter: String,
    pub rows: Vec<SensitivityRow>,
    pub trends: SensitivityTrends,
}

/// Relative step below which a trend step counts as flat.
pub const TREND_TOL: f64 = 1e-3;

/// Re-optimises the model for each value of one parameter.
pub fn sensitivity(model: &ChartModel, search: &SearchBox, parameter: &str, values: &[f64]) -> Result<SensitivityReport> {
    let key = canonical(parameter).ok_or_else(|| Error::invalid(format!("unknown parameter `{parameter}`")))?;
    if values.is_empty() {
        return Err(Error::invalid("sensitivity needs at least one value"));
    }
    search.validate()?;
    let rows = values
        .iter()
        .map(|&value| {
            let mut m = model.clone();
            set_parameter(&mut m, key, value)?;
            let report = minimize(&m, search)?;
            Ok(SensitivityRow {
                value,
                optimum: report.best,
                evaluations: report.evaluations,
                converged: report.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&DesignPoint) -> f64| -> Vec<f64> { rows.iter().map(|r| f(&r.optimum)).collect() };
    let trends = SensitivityTrends {
        h: trend(&column(|d| d.policy.h), TREND_TOL),
        k: trend(&column(|d| d.policy.k), TREND_TOL),
        expected_cost: trend(&column(|d| d.expected_cost), TREND_TOL),
        cost_std: trend(&column(|d| d.cost_std), TREND_TOL),
    };
    Ok(SensitivityReport {
        parameter: key.to_string(),
        rows,
        trends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DiscretisationGrid;
    use crate::cost::CostModel;
    use crate::distributions::RepairLaw;
    use crate::model::ProcessModel;

    fn small() -> ChartModel {
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
            grid: DiscretisationGrid::new(0.25, 40).unwrap(),
        }
    }

    fn search() -> SearchBox {
        SearchBox {
            h_min: 0.05,
            h_max: 3.0,
            k_min: 0.0,
            k_max: 4.0,
            h_init: 0.5,
            k_init: 1.0,
            restarts: 4,
        }
    }

    #[test]
    fn halton_sequence() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn search_box_validation() {
        let mut b = search();
        b.h_init = 10.0;
        assert!(b.validate().is_err());
        let mut b = search();
        b.h_min = 0.0;
        assert!(b.validate().is_err());
        let mut b = search();
        b.restarts = 0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn evaluate_is_deterministic() {
        let m = small();
        let p = ChartPolicy::new(0.4, 1.1).unwrap();
        let a = evaluate(&m, p).unwrap();
        let b = evaluate(&m, p).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.cost_std.to_bits(), b.cost_std.to_bits());
    }

    #[test]
    fn minimum_stays_in_box_and_beats_starts() {
        let m = small();
        let b = search();
        let r = minimize(&m, &b).unwrap();
        assert!(b.contains(r.best.policy));
        for s in &r.starts {
            if let Some(g) = s.start_objective {
                assert!(r.best.objective <= g);
            }
        }
    }

    #[test]
    fn single_cell_sweep_is_evaluate() {
        let m = small();
        let cells = sweep(&m, &[0.4], &[1.1]).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0], evaluate(&m, ChartPolicy::new(0.4, 1.1).unwrap()).unwrap());
        assert!(sweep(&m, &[], &[1.0]).is_err());
    }

    #[test]
    fn parameter_names() {
        let mut m = small();
        set_parameter(&mut m, "c_o", 5.0).unwrap();
        assert_eq!(m.costs.c_o, 5.0);
        set_parameter(&mut m, "sampling.a", 0.02).unwrap();
        assert!(set_parameter(&mut m, "z", 3.0).is_err());
        assert!(matches!(set_parameter(&mut m, "bogus", 1.0), Err(Error::InvalidArgument(_))));
        assert!(set_parameter(&mut m, "sigma", -1.0).is_err());
    }

    #[test]
    fn trend_classification() {
        assert_eq!(trend(&[1.0, 1.0, 1.0], 1e-3), Trend::Constant);
        assert_eq!(trend(&[1.0, 2.0, 2.0], 1e-3), Trend::Nondecreasing);
        assert_eq!(trend(&[3.0, 2.0, 1.0], 1e-3), Trend::Nonincreasing);
        assert_eq!(trend(&[1.0, 2.0, 1.0], 1e-3), Trend::Mixed);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(20.0, 120.0, 21);
        assert_eq!(v.len(), 21);
        assert_eq!(v[0], 20.0);
        assert_eq!(v[20], 120.0);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }
}
