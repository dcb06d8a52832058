//! The discretised sampling-time Markov chain.
//!
//! States are `(distance index v, alarm flag)` for `v = 0..V_d`. The first
//! `V_d` indices are the no-alarm states, the last `V_d` the alarm states.
//! Distance index `v >= 1` stands for distances in `((v-1)Δ, vΔ]`,
//! represented by the midpoint `Δ'(v) = vΔ - Δ/2`.
//!
//! A repair after a true alarm at index `u` leaves the remaining proportion
//! `R` of `Δ'(u)`. The repaired distance `R Δ'(u)` lies in `[mΔ, (m+1)Δ)` with
//! probability `R(u-1, m)`, which maps to index `m + 1`; a repaired process
//! therefore never returns to index 0.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cost;
use crate::distributions::{self, ShiftPmf};
use crate::error::{Error, Result};
use crate::model::ChartModel;
use crate::special;

/// Grid of `v_count` distance states spaced `delta_step` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretisationGrid {
    pub delta_step: f64,
    pub v_count: usize,
}

impl DiscretisationGrid {
    pub fn new(delta_step: f64, v_count: usize) -> Result<Self> {
        let grid = DiscretisationGrid { delta_step, v_count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_step.is_finite() && self.delta_step > 0.0) {
            return Err(Error::invalid(format!("grid step must be > 0, got {}", self.delta_step)));
        }
        if self.v_count < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 states, got {}", self.v_count)));
        }
        Ok(())
    }

    /// Grid whose top state sits at the `quantile` of the shift accumulated
    /// over `h_max`.
    pub fn covering(law: &distributions::ShiftLaw, h_max: f64, v_count: usize, quantile: f64) -> Result<Self> {
        if !(0.0 < quantile && quantile < 1.0) {
            return Err(Error::invalid("quantile must lie in (0, 1)"));
        }
        if v_count < 2 {
            return Err(Error::invalid("grid needs at least 2 states"));
        }
        let target = 1.0 - quantile;
        let mut hi = law.mean_size;
        while distributions::shift_sf(law, h_max, hi)? > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if distributions::shift_sf(law, h_max, mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        DiscretisationGrid::new(hi / (v_count - 1) as f64, v_count)
    }

    /// Representative distance of index `v`: 0 for `v = 0`, else `vΔ - Δ/2`.
    pub fn distance(&self, v: usize) -> f64 {
        if v == 0 {
            0.0
        } else {
            (v as f64 - 0.5) * self.delta_step
        }
    }

    /// Index of the state holding continuous distance `x`.
    pub fn index_of(&self, x: f64) -> usize {
        if x <= 0.0 {
            0
        } else {
            let i = (x / self.delta_step).ceil() as usize;
            i.clamp(1, self.v_count - 1)
        }
    }

    pub fn state_count(&self) -> usize {
        2 * self.v_count
    }

    /// Number of states in the recurrent class (index 0 excluded in both halves).
    pub fn recurrent_count(&self) -> usize {
        2 * (self.v_count - 1)
    }
}

/// Time between samplings `h` and control limit `k` (distance above target).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPolicy {
    pub h: f64,
    pub k: f64,
}

impl ChartPolicy {
    pub fn new(h: f64, k: f64) -> Result<Self> {
        let policy = ChartPolicy { h, k };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::invalid(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }
}

/// Discretised repair probabilities `R(l, m)` for `0 <= m <= l < V_d`.
///
/// Depends only on the repair law and grid, so it is built once and shared
/// across policy evaluations.
#[derive(Debug, Clone)]
pub struct RepairTable {
    rows: Vec<Vec<f64>>,
}

impl RepairTable {
    pub fn new(law: &distributions::RepairLaw, grid: &DiscretisationGrid) -> Result<Self> {
        law.validate()?;
        grid.validate()?;
        let rows = (0..grid.v_count)
            .map(|l| {
                if l == 0 {
                    return vec![1.0];
                }
                let width = l as f64 + 0.5;
                let cdf: Vec<f64> = (0..=l + 1)
                    .map(|m| law.cdf((m as f64 / width).min(1.0)))
                    .collect();
                cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
            })
            .collect();
        Ok(RepairTable { rows })
    }

    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.rows[l][m]
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.rows[l]
    }
}

/// Per-policy quantities that feed the transition weights.
#[derive(Debug, Clone)]
pub struct ChainContext<'a> {
    pub grid: DiscretisationGrid,
    pub policy: ChartPolicy,
    shift: ShiftPmf,
    repair: &'a RepairTable,
    sampling: Vec<f64>,
    no_alarm: Vec<f64>,
    alarm: Vec<f64>,
}

impl<'a> ChainContext<'a> {
    pub fn new(model: &ChartModel, policy: ChartPolicy, repair: &'a RepairTable) -> Result<Self> {
        policy.validate()?;
        let grid = model.grid;
        let shift = ShiftPmf::new(&model.shift_law(), policy.h, &grid)?;
        let sigma = model.process.sigma;
        let mut sampling = Vec::with_capacity(grid.v_count);
        let mut no_alarm = Vec::with_capacity(grid.v_count);
        let mut alarm = Vec::with_capacity(grid.v_count);
        for v in 0..grid.v_count {
            let t = distributions::sampling_prob_unchecked(&model.sampling, policy.h, v, grid.v_count);
            let margin = policy.k - grid.distance(v);
            let stay = special::normal_cdf(margin, sigma);
            let signal = special::normal_sf(margin, sigma);
            sampling.push(t);
            no_alarm.push(t * stay + (1.0 - t));
            alarm.push(t * signal);
        }
        Ok(ChainContext {
            grid,
            policy,
            shift,
            repair,
            sampling,
            no_alarm,
            alarm,
        })
    }

    /// Successful-sampling probability `T_h(v)`.
    pub fn sampling_prob(&self, v: usize) -> f64 {
        self.sampling[v]
    }

    pub fn shift_pmf(&self) -> &ShiftPmf {
        &self.shift
    }

    fn check(&self, g: usize, v: usize, l: usize) -> Result<()> {
        let n = self.grid.v_count;
        if v >= n || g >= n || l >= n {
            return Err(Error::invalid(format!(
                "indices (g={g}, v={v}, l={l}) outside grid of {n} states"
            )));
        }
        Ok(())
    }

    /// Repair-convolved shift probability `sum_{m <= min(l, g)} q_h(g - m) R(l, m)`;
    /// at the top state `q_h` is replaced by its upper tail.
    fn convolved(&self, g: usize, v: usize, l: usize) -> f64 {
        let top = v + 1 == self.grid.v_count;
        let row = self.repair.row(l);
        (0..=l.min(g))
            .map(|m| {
                let q = if top {
                    self.shift.tail_from(g - m)
                } else {
                    self.shift.prob(g - m)
                };
                q * row[m]
            })
            .sum()
    }

    /// `S(g, v, l)`: probability of landing in no-alarm state `v` after a
    /// total discretised increase of `g` over the lowest repaired distance.
    pub fn weight_no_alarm(&self, g: usize, v: usize, l: usize) -> Result<f64> {
        self.check(g, v, l)?;
        Ok(self.no_alarm[v] * self.convolved(g, v, l))
    }

    /// `S'(g, v, l)`: as [`Self::weight_no_alarm`] for the alarm state `v`.
    pub fn weight_alarm(&self, g: usize, v: usize, l: usize) -> Result<f64> {
        self.check(g, v, l)?;
        Ok(self.alarm[v] * self.convolved(g, v, l))
    }

    /// `(g, l)` arguments for a move from source `(u, alarm)` to target distance `v`,
    /// or `None` when the target is unreachable.
    pub fn route(&self, u: usize, source_alarm: bool, v: usize) -> Option<(usize, usize)> {
        if source_alarm && u >= 1 {
            // repaired distance index ranges over 1..=u
            (v >= 1).then(|| (v - 1, u - 1))
        } else {
            (v >= u).then(|| (v - u, 0))
        }
    }

    /// Builds the `2V_d × 2V_d` row-stochastic transition matrix.
    pub fn transition(&self) -> Array2<f64> {
        let n = self.grid.v_count;
        let mut pi = Array2::zeros((2 * n, 2 * n));
        for source_alarm in [false, true] {
            for u in 0..n {
                let row = u + if source_alarm { n } else { 0 };
                for v in 0..n {
                    if let Some((g, l)) = self.route(u, source_alarm, v) {
                        let conv = self.convolved(g, v, l);
                        pi[[row, v]] = self.no_alarm[v] * conv;
                        pi[[row, n + v]] = self.alarm[v] * conv;
                    }
                }
            }
        }
        pi
    }
}

/// Builds the transition matrix for `policy` under `model`.
pub fn build_transition(model: &ChartModel, policy: ChartPolicy) -> Result<Array2<f64>> {
    let repair = RepairTable::new(&model.repair, &model.grid)?;
    Ok(ChainContext::new(model, policy, &repair)?.transition())
}

/// Indices of the recurrent states inside the full `2V_d` numbering, in
/// stationary-vector order: no-alarm `1..V_d`, then alarm `1..V_d`.
pub fn recurrent_indices(v_count: usize) -> Vec<usize> {
    (1..v_count).chain(v_count + 1..2 * v_count).collect()
}

/// Method that produced a stationary vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    Elimination,
    PowerIteration,
}

/// Stationary distribution over the recurrent class.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub probs: Vec<f64>,
    /// `‖P Π' − P‖_∞`.
    pub residual: f64,
    pub method: StationaryMethod,
}

const RESIDUAL_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 200_000;

/// Stationary distribution of the recurrent class of a chain built by
/// [`build_transition`].
pub fn stationary(transition: &Array2<f64>) -> Result<Stationary> {
    let (rows, cols) = transition.dim();
    if rows != cols || rows % 2 != 0 || rows < 4 {
        return Err(Error::invalid(format!("transition matrix has unexpected shape {rows}x{cols}")));
    }
    let idx = recurrent_indices(rows / 2);
    let reduced = Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| transition[[idx[i], idx[j]]]);
    stationary_of(reduced.view())
}

/// Stationary distribution of an irreducible row-stochastic matrix: GTH
/// elimination first, power iteration if elimination breaks down.
///
/// Entries are positive in exact arithmetic but can underflow to zero when a
/// state is reachable only through probabilities below the `f64` range (for
/// instance an alarm tens of standard deviations away).
pub fn stationary_of(matrix: ArrayView2<f64>) -> Result<Stationary> {
    if let Some(probs) = gth(matrix) {
        let residual = fixed_point_residual(matrix, &probs);
        if residual < RESIDUAL_TOL && probs.iter().all(|&p| p >= 0.0) {
            return Ok(Stationary {
                probs,
                residual,
                method: StationaryMethod::Elimination,
            });
        }
    }
    power_iteration(matrix)
}

/// Grassmann–Taksar–Heyman elimination; subtraction-free, so the result is
/// nonnegative. `None` if a pivot vanishes.
fn gth(matrix: ArrayView2<f64>) -> Option<Vec<f64>> {
    let n = matrix.nrows();
    let mut a = matrix.to_owned();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[[k, j]]).sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        for i in 0..k {
            a[[i, k]] /= s;
        }
        for i in 0..k {
            let aik = a[[i, k]];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                a[[i, j]] += aik * a[[k, j]];
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for j in 1..n {
        x[j] = (0..j).map(|i| x[i] * a[[i, j]]).sum();
    }
    let total: f64 = x.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= total);
    Some(x)
}

fn left_multiply(matrix: ArrayView2<f64>, x: &[f64]) -> Vec<f64> {
    let n = matrix.ncols();
    let mut out = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &m) in out.iter_mut().zip(matrix.row(i).iter()) {
            *o += xi * m;
        }
    }
    out
}

/// `‖x M − x‖_∞`.
pub fn fixed_point_residual(matrix: ArrayView2<f64>, x: &[f64]) -> f64 {
    left_multiply(matrix, x)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn power_iteration(matrix: ArrayView2<f64>) -> Result<Stationary> {
    let n = matrix.nrows();
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let mut next = left_multiply(matrix, &x);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if residual < 1e-15 {
            break;
        }
    }
    let residual_check = fixed_point_residual(matrix, &x);
    if residual_check < RESIDUAL_TOL && x.iter().all(|&p| p >= 0.0) {
        Ok(Stationary {
            probs: x,
            residual: residual_check,
            method: StationaryMethod::PowerIteration,
        })
    } else {
        Err(Error::numeric(
            format!("stationary distribution did not converge (last step change {residual:e})"),
            Some(residual_check),
        ))
    }
}

/// Matrix `M`: row `i` (recurrent-state order) gives the distribution of the
/// distance index right after the sampling that landed in state `i`.
pub fn repair_start_matrix(repair: &RepairTable, grid: &DiscretisationGrid) -> Array2<f64> {
    let n = grid.v_count;
    let mut m = Array2::zeros((2 * (n - 1), n));
    for u in 1..n {
        m[[u - 1, u]] = 1.0;
        let row = n - 1 + u - 1;
        for (seg, &p) in repair.row(u - 1).iter().enumerate() {
            m[[row, seg + 1]] = p;
        }
    }
    m
}

/// Everything derived from one `(model, policy)` pair.
#[derive(Debug, Clone)]
pub struct ChainArtifacts {
    pub grid: DiscretisationGrid,
    pub policy: ChartPolicy,
    pub transition: Array2<f64>,
    pub stationary: Vec<f64>,
    pub stationary_residual: f64,
    pub stationary_method: StationaryMethod,
    pub repair_start: Array2<f64>,
    pub a_sq: Vec<f64>,
    /// Successful-sampling probabilities in stationary-vector order.
    pub sampling: Vec<f64>,
}

impl ChainArtifacts {
    pub fn build(model: &ChartModel, policy: ChartPolicy) -> Result<Self> {
        let repair = RepairTable::new(&model.repair, &model.grid)?;
        Self::build_with(model, policy, &repair)
    }

    pub fn build_with(model: &ChartModel, policy: ChartPolicy, repair: &RepairTable) -> Result<Self> {
        let grid = model.grid;
        let ctx = ChainContext::new(model, policy, repair)?;
        let transition = ctx.transition();
        let st = stationary(&transition)?;
        let repair_start = repair_start_matrix(repair, &grid);
        let a_sq = cost::a_squared(&repair_start, &model.shift_law(), policy, &grid);
        let sampling = (1..grid.v_count)
            .chain(1..grid.v_count)
            .map(|v| ctx.sampling_prob(v))
            .collect();
        Ok(ChainArtifacts {
            grid,
            policy,
            transition,
            stationary: st.probs,
            stationary_residual: st.residual,
            stationary_method: st.method,
            repair_start,
            a_sq,
            sampling,
        })
    }

    /// Stationary mass of the alarm states.
    pub fn alarm_mass(&self) -> f64 {
        self.stationary[self.grid.v_count - 1..].iter().sum()
    }

    /// Stationary mass per distance index `0..V_d` (alarm flag summed out).
    pub fn distance_marginal(&self) -> Vec<f64> {
        let n = self.grid.v_count;
        let mut out = vec![0.0; n];
        for (i, p) in self.stationary.iter().enumerate() {
            out[i % (n - 1) + 1] += p;
        }
        out
    }

    /// Writes `Π`, `M` and `P` as CSV into `dir`.
    pub fn dump_csv(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let n = self.grid.v_count;
        let labels = state_labels(n);
        write_matrix(&dir.join("transition.csv"), &labels, &labels, self.transition.view())?;

        let rec: Vec<String> = recurrent_indices(n).into_iter().map(|i| labels[i].clone()).collect();
        let dist: Vec<String> = (0..n).map(|v| format!("d:{v}")).collect();
        write_matrix(&dir.join("repair_start.csv"), &rec, &dist, self.repair_start.view())?;

        let mut w = csv::Writer::from_path(dir.join("stationary.csv"))?;
        w.write_record(["state", "probability", "a_sq", "sampling_prob"])?;
        for (i, label) in rec.iter().enumerate() {
            w.write_record([
                label.clone(),
                format!("{:e}", self.stationary[i]),
                format!("{:e}", self.a_sq[i]),
                format!("{:e}", self.sampling[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ooc:v` for no-alarm states, `alarm:v` for alarm states.
pub fn state_labels(v_count: usize) -> Vec<String> {
    (0..v_count)
        .map(|v| format!("ooc:{v}"))
        .chain((0..v_count).map(|v| format!("alarm:{v}")))
        .collect()
}

fn write_matrix(path: &std::path::Path, rows: &[String], cols: &[String], m: ArrayView2<f64>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "state")?;
    for c in cols {
        write!(file, ",{c}")?;
    }
    writeln!(file)?;
    for (label, row) in rows.iter().zip(m.rows()) {
        write!(file, "{label}")?;
        for v in row {
            write!(file, ",{v:e}")?;
        }
        writeln!(file)?;
    }
    file.flush()?;
    Ok(())
}
