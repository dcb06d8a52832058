//! Monte Carlo simulation of the monitored process between sampling instants.
//!
//! The distance from target evolves continuously: shifts arrive as a Poisson
//! process with exponential sizes and the squared distance is integrated
//! exactly between events. One record is kept per sampling instant, carrying
//! the chain state reached there and the cost attributed to that state (the
//! sampling that produced it, the repair it triggers and the drift over the
//! following interval), mirroring the analytic per-state costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainArtifacts, ChartPolicy};
use crate::distributions;
use crate::error::{Error, Result};
use crate::model::ChartModel;

/// Alarm trigger applied to each successful observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlarmRule {
    /// Alarm when the observation exceeds `k`.
    LimitOnly,
    /// Additionally alarm after `count` consecutive observations above `fraction·k`.
    Runs { count: usize, fraction: f64 },
}

impl AlarmRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlarmRule::LimitOnly => Ok(()),
            AlarmRule::Runs { count, fraction } => {
                if count == 0 {
                    return Err(Error::violation("rule.count", "must be >= 1"));
                }
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::violation("rule.fraction", format!("must lie in (0, 1], got {fraction}")));
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for AlarmRule {
    type Err = Error;

    /// `limit`, or `runs:<count>:<fraction>` where fraction may be `a/b`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "limit" || s == "limit-only" {
            return Ok(AlarmRule::LimitOnly);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 && parts[0] == "runs" {
            let count = parts[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad run count `{}`", parts[1])))?;
            let fraction = parse_fraction(parts[2])?;
            let rule = AlarmRule::Runs { count, fraction };
            rule.validate()?;
            return Ok(rule);
        }
        Err(Error::Parse(format!("unknown alarm rule `{s}`; use `limit` or `runs:<count>:<fraction>`")))
    }
}

fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("bad fraction `{s}`"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.parse().map_err(|_| bad())?;
            let d: f64 = d.parse().map_err(|_| bad())?;
            Ok(n / d)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub intervals: usize,
    pub burn_in: usize,
    /// Every `thinning`-th record enters the cost standard deviation.
    pub thinning: usize,
    pub seed: u64,
    pub rule: AlarmRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            intervals: 50_000,
            burn_in: 100,
            thinning: 30,
            seed: 0x5eed,
            rule: AlarmRule::LimitOnly,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals <= self.burn_in {
            return Err(Error::violation("intervals", "must exceed burn_in"));
        }
        if self.thinning == 0 {
            return Err(Error::violation("thinning", "must be >= 1"));
        }
        self.rule.validate()
    }
}

/// One sampling instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub interval: usize,
    pub distance: f64,
    pub state_index: usize,
    pub sampled: bool,
    pub observation: Option<f64>,
    pub alarm: bool,
    /// Cost attributed to this record, per unit time.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Records after burn-in.
    pub recorded: usize,
    /// Long-run cost per unit time.
    pub mean_cost: f64,
    /// Standard deviation of the per-unit-time record cost over every `thinning`-th record.
    pub thinned_cost_std: f64,
    pub alarm_proportion: f64,
    pub true_alarms: usize,
    pub false_alarms: usize,
    pub missed_samplings: usize,
    /// Records still at distance zero (outside the recurrent class).
    pub in_control_records: usize,
    /// Frequencies over the recurrent states, in the chain's order
    /// (no-alarm `1..V_d`, then alarm `1..V_d`).
    pub state_frequencies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

struct Laws {
    shifts: Option<Poisson<f64>>,
    size: Exp<f64>,
    repair: Beta<f64>,
    noise: Normal<f64>,
}

fn sample_count(laws: &Laws, rng: &mut ChaCha8Rng) -> usize {
    laws.shifts.as_ref().map_or(0, |p| p.sample(rng) as usize)
}

/// Advances `x` over `[0, h]`; returns the new distance and `∫ x(t)² dt`.
fn drift(laws: &Laws, x: f64, h: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = sample_count(laws, rng);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * h).collect();
    times.sort_by(f64::total_cmp);
    let mut x = x;
    let mut last = 0.0;
    let mut area = 0.0;
    for t in times {
        area += x * x * (t - last);
        x += laws.size.sample(rng);
        last = t;
    }
    area += x * x * (h - last);
    (x, area)
}

/// Runs one replicate; `stream` selects an independent ChaCha stream for `seed`.
pub fn simulate_stream(
    model: &ChartModel,
    policy: ChartPolicy,
    config: &SimConfig,
    stream: u64,
    keep_trace: bool,
) -> Result<SimReport> {
    model.validate()?;
    policy.validate()?;
    config.validate()?;
    let grid = model.grid;
    let n = grid.v_count;
    let h = policy.h;
    let costs = model.costs;
    let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("simulation law: {e}"));
    let rate = model.process.shift_rate * h;
    let laws = Laws {
        shifts: if rate > 0.0 { Some(Poisson::new(rate).map_err(|e| bad(&e))?) } else { None },
        size: Exp::new(1.0 / model.process.shift_mean).map_err(|e| bad(&e))?,
        repair: Beta::new(model.repair.alpha, model.repair.beta).map_err(|e| bad(&e))?,
        noise: Normal::new(0.0, model.process.sigma).map_err(|e| bad(&e))?,
    };
    let sampling: Vec<f64> = (0..n)
        .map(|v| distributions::sampling_prob_unchecked(&model.sampling, h, v, n))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut counts = vec![0usize; 2 * (n - 1)];
    let mut in_control = 0usize;
    let (mut true_alarms, mut false_alarms, mut missed) = (0usize, 0usize, 0usize);
    let mut total = 0.0;
    let mut thinned: Vec<f64> = Vec::new();
    let mut trace = keep_trace.then(Vec::new);
    let mut run = 0usize;

    // state at the first sampling instant: in control, nothing sampled yet
    let mut x = 0.0f64;
    let mut alarm = false;
    let mut sampled = false;
    let mut observation = None;

    for interval in 0..config.intervals {
        let v = grid.index_of(x);
        let mut cost = if sampled { costs.c_s } else { 0.0 };
        if alarm && x > 0.0 {
            cost += costs.c_rb + costs.c_rs * x * x;
            x *= laws.repair.sample(&mut rng);
        }
        let record_alarm = alarm;
        let (next, area) = drift(&laws, x, h, &mut rng);
        cost = cost / h + costs.c_o * area / h;

        if interval >= config.burn_in {
            total += cost;
            if (interval - config.burn_in) % config.thinning == 0 {
                thinned.push(cost);
            }
            if v == 0 {
                in_control += 1;
            } else {
                counts[v - 1 + if record_alarm { n - 1 } else { 0 }] += 1;
            }
            if record_alarm {
                if v == 0 {
                    false_alarms += 1;
                } else {
                    true_alarms += 1;
                }
            }
            if !sampled {
                missed += 1;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                interval,
                distance: x,
                state_index: v,
                sampled,
                observation,
                alarm: record_alarm,
                cost,
            });
        }

        // next sampling instant
        x = next;
        if alarm {
            run = 0;
        }
        sampled = rng.random::<f64>() < sampling[grid.index_of(x)];
        alarm = false;
        observation = None;
        if sampled {
            let y = x + laws.noise.sample(&mut rng);
            observation = Some(y);
            let k = policy.k;
            alarm = y > k;
            if let AlarmRule::Runs { count, fraction } = config.rule {
                run = if y > fraction * k { run + 1 } else { 0 };
                alarm |= run >= count;
            }
        }
    }

    let recorded = config.intervals - config.burn_in;
    let recurrent: usize = counts.iter().sum();
    let state_frequencies = counts
        .iter()
        .map(|&c| if recurrent > 0 { c as f64 / recurrent as f64 } else { 0.0 })
        .collect();
    Ok(SimReport {
        recorded,
        mean_cost: total / recorded as f64,
        thinned_cost_std: sample_std(&thinned),
        alarm_proportion: (true_alarms + false_alarms) as f64 / recorded as f64,
        true_alarms,
        false_alarms,
        missed_samplings: missed,
        in_control_records: in_control,
        state_frequencies,
        trace,
    })
}

/// Runs a single replicate on stream 0.
pub fn simulate(model: &ChartModel, policy: ChartPolicy, config: &SimConfig) -> Result<SimReport> {
    simulate_stream(model, policy, config, 0, false)
}

/// Independent replicates on streams `0..count`, run in parallel.
pub fn simulate_replicates(
    model: &ChartModel,
    policy: ChartPolicy,
    config: &SimConfig,
    count: usize,
) -> Result<Vec<SimReport>> {
    (0..count as u64)
        .into_par_iter()
        .map(|s| simulate_stream(model, policy, config, s, false))
        .collect()
}

/// Writes a per-interval trace with a fixed header.
pub fn write_trace_csv<W: std::io::Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["interval", "distance", "state_index", "sampled", "observation", "alarm", "cost"])?;
    for r in rows {
        w.write_record([
            r.interval.to_string(),
            r.distance.to_string(),
            r.state_index.to_string(),
            r.sampled.to_string(),
            r.observation.map(|o| o.to_string()).unwrap_or_default(),
            r.alarm.to_string(),
            r.cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Unbiased sample standard deviation (0 for fewer than two values).
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    /// Total-variation distance between empirical and stationary state frequencies.
    pub tv_distance: f64,
    pub analytic_cost: f64,
    pub empirical_cost: f64,
    /// `(empirical - analytic) / analytic`.
    pub cost_gap: f64,
    pub analytic_alarm_mass: f64,
    pub empirical_alarm_proportion: f64,
}

pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "state spaces differ: {} vs {} states",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Divergence between a simulation and the analytic chain for the same scenario.
pub fn compare_to_analytic(report: &SimReport, artifacts: &ChainArtifacts, analytic_cost: f64) -> Result<Comparison> {
    let tv_distance = total_variation(&report.state_frequencies, &artifacts.stationary)?;
    Ok(Comparison {
        tv_distance,
        analytic_cost,
        empirical_cost: report.mean_cost,
        cost_gap: (report.mean_cost - analytic_cost) / analytic_cost,
        analytic_alarm_mass: artifacts.alarm_mass(),
        empirical_alarm_proportion: report.alarm_proportion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DiscretisationGrid;
    use crate::cost::CostModel;
    use crate::distributions::{RepairLaw, SamplingLaw};
    use crate::model::ProcessModel;

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
            grid: DiscretisationGrid::new(0.2, 50).unwrap(),
        }
    }

    fn short() -> SimConfig {
        SimConfig {
            intervals: 2_000,
            ..SimConfig::default()
        }
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let m = model();
        let p = ChartPolicy::new(0.4, 1.1).unwrap();
        let a = simulate(&m, p, &short()).unwrap();
        let b = simulate(&m, p, &short()).unwrap();
        assert_eq!(a, b);
        let c = simulate_stream(&m, p, &short(), 1, false).unwrap();
        assert_ne!(a.mean_cost, c.mean_cost);
    }

    #[test]
    fn frequencies_sum_to_one() {
        let r = simulate(&model(), ChartPolicy::new(0.4, 1.1).unwrap(), &short()).unwrap();
        let s: f64 = r.state_frequencies.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(r.state_frequencies.len(), 2 * 49);
    }

    #[test]
    fn no_shifts_means_sampling_and_false_alarms_only() {
        let mut m = model();
        m.process.shift_rate = 1e-300;
        m.sampling = SamplingLaw::Always;
        let p = ChartPolicy::new(1.0, 10.0).unwrap();
        let r = simulate(&m, p, &short()).unwrap();
        assert_eq!(r.true_alarms, 0);
        assert_eq!(r.alarm_proportion, 0.0);
        assert!((r.mean_cost - m.costs.c_s / p.h).abs() < 1e-12);
    }

    #[test]
    fn trace_matches_report() {
        let m = model();
        let cfg = SimConfig {
            intervals: 300,
            burn_in: 0,
            ..SimConfig::default()
        };
        let r = simulate_stream(&m, ChartPolicy::new(0.4, 1.1).unwrap(), &cfg, 0, true).unwrap();
        let t = r.trace.as_ref().unwrap();
        assert_eq!(t.len(), 300);
        let mean = t.iter().map(|row| row.cost).sum::<f64>() / 300.0;
        assert!((mean - r.mean_cost).abs() < 1e-9 * mean);
        assert!(t.iter().all(|row| row.sampled == row.observation.is_some()));
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("limit".parse::<AlarmRule>().unwrap(), AlarmRule::LimitOnly);
        match "runs:3:2/3".parse::<AlarmRule>().unwrap() {
            AlarmRule::Runs { count, fraction } => {
                assert_eq!(count, 3);
                assert!((fraction - 2.0 / 3.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!("runs:0:0.5".parse::<AlarmRule>().is_err());
        assert!("runs:2:1.5".parse::<AlarmRule>().is_err());
        assert!("sometimes".parse::<AlarmRule>().is_err());
    }

    #[test]
    fn sample_std_of_known_values() {
        assert_eq!(sample_std(&[1.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tv_rejects_mismatched_spaces() {
        assert!(total_variation(&[0.5, 0.5], &[1.0]).is_err());
        assert_eq!(total_variation(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        c.burn_in = c.intervals;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.thinning = 0;
        assert!(c.validate().is_err());
    }
}
