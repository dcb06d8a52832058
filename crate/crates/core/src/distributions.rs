//! Probability laws of the drifting process: compound Poisson shifts with
//! exponential sizes, Beta-distributed imperfect repair, and the probability
//! that a scheduled sampling actually takes place.

use serde::{Deserialize, Serialize};

use crate::chain::DiscretisationGrid;
use crate::error::{Error, Result};
use crate::quadrature::{self, QuadOptions};
use crate::special::{self, POISSON_TAIL_TOL};

/// Shift arrivals form a Poisson process with rate `rate` per unit time; each
/// shift adds an exponential increment with mean `mean_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftLaw {
    pub rate: f64,
    pub mean_size: f64,
}

impl ShiftLaw {
    pub fn new(rate: f64, mean_size: f64) -> Result<Self> {
        let law = ShiftLaw { rate, mean_size };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!("shift rate must be > 0, got {}", self.rate)));
        }
        if !(self.mean_size.is_finite() && self.mean_size > 0.0) {
            return Err(Error::invalid(format!(
                "mean shift size must be > 0, got {}",
                self.mean_size
            )));
        }
        Ok(())
    }

    /// Poisson weights for the number of shifts within `t`, truncated at a
    /// tail mass below 1e-12, plus the dropped tail.
    fn count_weights(&self, t: f64) -> (Vec<f64>, f64) {
        special::poisson_weights(t * self.rate, POISSON_TAIL_TOL)
    }
}

/// Remaining proportion of the distance from target after a repair, `R ~ Beta(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairLaw {
    pub alpha: f64,
    pub beta: f64,
}

impl RepairLaw {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let law = RepairLaw { alpha, beta };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!(
                "repair Beta parameters must be > 0, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    pub fn cdf(&self, r: f64) -> f64 {
        special::beta_cdf(r, self.alpha, self.beta)
    }
}

/// Probability that a scheduled sampling succeeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplingLaw {
    /// Every scheduled sampling happens.
    Always,
    /// `1 / (1 + exp(-q (h - z)))`: compliance grows with the sampling interval.
    Logistic { q: f64, z: f64 },
    /// `P(W_h < (v + zeta - 1/2) / (V_d + zeta))` with `W_h ~ Beta(a / h, b)`:
    /// compliance grows with the interval and with the current distance.
    BetaState { a: f64, b: f64, zeta: f64 },
}

impl SamplingLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingLaw::Always => Ok(()),
            SamplingLaw::Logistic { q, z } => {
                if !(q.is_finite() && q > 0.0) {
                    return Err(Error::invalid(format!("logistic steepness q must be > 0, got {q}")));
                }
                if !z.is_finite() {
                    return Err(Error::invalid("logistic midpoint z must be finite"));
                }
                Ok(())
            }
            SamplingLaw::BetaState { a, b, zeta } => {
                if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                    return Err(Error::invalid(format!(
                        "beta-state parameters a, b must be > 0, got ({a}, {b})"
                    )));
                }
                if !(zeta.is_finite() && zeta > 0.0) {
                    return Err(Error::invalid(format!("beta-state zeta must be > 0, got {zeta}")));
                }
                Ok(())
            }
        }
    }

    /// True when the probability does not depend on the distance state.
    pub fn is_state_free(&self) -> bool {
        !matches!(self, SamplingLaw::BetaState { .. })
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

fn check_erlang(k: u32, mean: f64, x: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("Erlang shape k must be >= 1"));
    }
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::invalid(format!("Erlang mean must be > 0, got {mean}")));
    }
    check_finite("x", x)
}

/// `sum_{n >= k} Poisson(lambda; n)`, valid when `k > lambda` so terms decay from the start.
fn poisson_upper_sum(lambda: f64, k: u32) -> f64 {
    let mut term = special::poisson_pmf(lambda, k as u64);
    let mut sum = 0.0;
    let mut n = k as f64;
    while term > 0.0 {
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        n += 1.0;
        term *= lambda / n;
    }
    sum
}

fn poisson_lower_sum(lambda: f64, k: u32) -> f64 {
    (0..k as u64).map(|n| special::poisson_pmf(lambda, n)).sum()
}

/// `(cdf, survival)` of Erlang(k) with exponential-mean `mean`, each computed
/// from the numerically favourable side.
fn erlang_pair(k: u32, mean: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let lambda = x / mean;
    if lambda < k as f64 {
        let cdf = poisson_upper_sum(lambda, k).min(1.0);
        (cdf, 1.0 - cdf)
    } else {
        let sf = poisson_lower_sum(lambda, k).min(1.0);
        (1.0 - sf, sf)
    }
}

/// CDF of the sum of `k` iid exponentials with mean `mean` at `x`.
pub fn erlang_cdf(k: u32, mean: f64, x: f64) -> Result<f64> {
    check_erlang(k, mean, x)?;
    Ok(erlang_pair(k, mean, x).0)
}

/// Survival function of the same Erlang law.
pub fn erlang_sf(k: u32, mean: f64, x: f64) -> Result<f64> {
    check_erlang(k, mean, x)?;
    Ok(erlang_pair(k, mean, x).1)
}

/// `P(lo < E <= hi)` for Erlang `E`, avoiding cancellation in either tail.
fn erlang_interval(k: u32, mean: f64, lo: f64, hi: f64) -> f64 {
    let (cdf_lo, sf_lo) = erlang_pair(k, mean, lo);
    let (cdf_hi, sf_hi) = erlang_pair(k, mean, hi);
    let mass = if hi / mean < k as f64 {
        cdf_hi - cdf_lo
    } else {
        sf_lo - sf_hi
    };
    mass.max(0.0)
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("elapsed time must be >= 0, got {t}")))
    }
}

/// CDF of the accumulated shift size after time `t`.
pub fn shift_cdf(law: &ShiftLaw, t: f64, x: f64) -> Result<f64> {
    law.validate()?;
    check_time(t)?;
    check_finite("x", x)?;
    if x < 0.0 {
        return Ok(0.0);
    }
    let (weights, _) = law.count_weights(t);
    let mut total = weights[0];
    for (k, w) in weights.iter().enumerate().skip(1) {
        total += w * erlang_pair(k as u32, law.mean_size, x).0;
    }
    Ok(total.min(1.0))
}

/// Survival function of the accumulated shift size; the truncated Poisson
/// tail is counted as exceeding `x`.
pub fn shift_sf(law: &ShiftLaw, t: f64, x: f64) -> Result<f64> {
    law.validate()?;
    check_time(t)?;
    check_finite("x", x)?;
    if x < 0.0 {
        return Ok(1.0);
    }
    Ok(shift_sf_unchecked(law, t, x))
}

fn shift_sf_unchecked(law: &ShiftLaw, t: f64, x: f64) -> f64 {
    shift_sf_tol(law, t, x, POISSON_TAIL_TOL)
}

fn shift_sf_tol(law: &ShiftLaw, t: f64, x: f64, tail_tol: f64) -> f64 {
    let (weights, tail) = special::poisson_weights(t * law.rate, tail_tol);
    let mut total = tail;
    for (k, w) in weights.iter().enumerate().skip(1) {
        total += w * erlang_pair(k as u32, law.mean_size, x).1;
    }
    total.min(1.0)
}

/// Discretised shift-size distribution over one sampling interval.
///
/// Entry `i` holds the probability that the accumulated shift falls in
/// `((i-1)Δ, iΔ]` (entry 0 is "no shift"). Mass beyond the last grid point is
/// kept separately so callers can fold it into an absorbing top state.
#[derive(Debug, Clone)]
pub struct ShiftPmf {
    probs: Vec<f64>,
    beyond: f64,
    suffix: Vec<f64>,
}

impl ShiftPmf {
    pub fn new(law: &ShiftLaw, t: f64, grid: &DiscretisationGrid) -> Result<Self> {
        law.validate()?;
        check_time(t)?;
        grid.validate()?;
        let n = grid.v_count;
        let step = grid.delta_step;
        let (weights, tail) = law.count_weights(t);
        let mut probs = vec![0.0; n];
        probs[0] = weights[0];
        for (i, p) in probs.iter_mut().enumerate().skip(1) {
            let lo = (i - 1) as f64 * step;
            let hi = i as f64 * step;
            *p = weights
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, w)| w * erlang_interval(k as u32, law.mean_size, lo, hi))
                .sum();
        }
        let top = (n - 1) as f64 * step;
        let mut beyond = tail;
        for (k, w) in weights.iter().enumerate().skip(1) {
            beyond += w * erlang_pair(k as u32, law.mean_size, top).1;
        }
        let mut suffix = vec![0.0; n + 1];
        suffix[n] = beyond;
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + probs[i];
        }
        Ok(ShiftPmf { probs, beyond, suffix })
    }

    /// Exact bucket probability for shift index `i` (no remainder folding).
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Probability that the shift index is at least `i`.
    pub fn tail_from(&self, i: usize) -> f64 {
        self.suffix[i.min(self.probs.len())]
    }

    /// Mass of shifts beyond the last grid point.
    pub fn beyond(&self) -> f64 {
        self.beyond
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// The full pmf with the remainder folded into the last entry; sums to one.
    pub fn with_remainder(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        if let Some(last) = v.last_mut() {
            *last += self.beyond;
        }
        v
    }
}

/// Single entry of the discretised shift pmf; the top index includes the
/// absorbing remainder.
pub fn shift_pmf(law: &ShiftLaw, t: f64, grid: &DiscretisationGrid, i: usize) -> Result<f64> {
    if i >= grid.v_count {
        return Err(Error::invalid(format!(
            "shift index {i} outside grid of {} states",
            grid.v_count
        )));
    }
    let pmf = ShiftPmf::new(law, t, grid)?;
    Ok(if i + 1 == grid.v_count {
        pmf.tail_from(i)
    } else {
        pmf.prob(i)
    })
}

/// Discretised repair law `P(m/(l+1/2) <= R < (m+1)/(l+1/2))`, with the
/// no-repair convention `R(0, m) = 1`.
pub fn repair_prob(law: &RepairLaw, l: usize, m: usize) -> Result<f64> {
    law.validate()?;
    if m > l {
        return Err(Error::invalid(format!("repair segment m={m} exceeds l={l}")));
    }
    Ok(repair_prob_unchecked(law, l, m))
}

pub(crate) fn repair_prob_unchecked(law: &RepairLaw, l: usize, m: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let width = l as f64 + 0.5;
    let lo = m as f64 / width;
    let hi = ((m + 1) as f64 / width).min(1.0);
    (law.cdf(hi) - law.cdf(lo)).max(0.0)
}

fn check_interval(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("time between samplings must be > 0, got {h}")))
    }
}

/// Probability of a successful sampling when the prescribed interval is `h`
/// and the process sits `v` grid units from target.
pub fn sampling_prob(law: &SamplingLaw, h: f64, v: usize, grid: &DiscretisationGrid) -> Result<f64> {
    check_interval(h)?;
    law.validate()?;
    if v >= grid.v_count {
        return Err(Error::invalid(format!(
            "distance index {v} outside grid of {} states",
            grid.v_count
        )));
    }
    Ok(sampling_prob_unchecked(law, h, v, grid.v_count))
}

pub(crate) fn sampling_prob_unchecked(law: &SamplingLaw, h: f64, v: usize, v_count: usize) -> f64 {
    match *law {
        SamplingLaw::Always => 1.0,
        SamplingLaw::Logistic { q, z } => 1.0 / (1.0 + (-q * (h - z)).exp()),
        SamplingLaw::BetaState { a, b, zeta } => {
            let denom = v_count as f64 + zeta;
            let point = (v as f64 + zeta) / denom - 1.0 / (2.0 * denom);
            special::beta_cdf(point, a / h, b)
        }
    }
}

/// Continuous-distance form of the beta-state sampling probability,
/// `P(W_h < (w + zeta*) / (V + 2 zeta*))`, where `max_distance` is `V`.
pub fn sampling_prob_continuous(
    a: f64,
    b: f64,
    zeta_star: f64,
    max_distance: f64,
    h: f64,
    w: f64,
) -> Result<f64> {
    check_interval(h)?;
    SamplingLaw::BetaState { a, b, zeta: zeta_star }.validate()?;
    if !(max_distance.is_finite() && max_distance > 0.0) {
        return Err(Error::invalid("maximum distance must be > 0"));
    }
    check_finite("w", w)?;
    let point = (w.max(0.0) + zeta_star) / (max_distance + 2.0 * zeta_star);
    Ok(special::beta_cdf(point, a / h, b))
}

/// A strictly increasing transform of the distance, with its inverse.
pub trait MonotoneTransform {
    fn apply(&self, x: f64) -> f64;
    fn inverse(&self, y: f64) -> f64;
}

/// `x ↦ x²` on the nonnegative half-line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Square;

impl MonotoneTransform for Square {
    fn apply(&self, x: f64) -> f64 {
        x * x
    }

    fn inverse(&self, y: f64) -> f64 {
        y.max(0.0).sqrt()
    }
}

/// `x ↦ x^p` for `p > 0` on the nonnegative half-line.
#[derive(Debug, Clone, Copy)]
pub struct Power(pub f64);

impl MonotoneTransform for Power {
    fn apply(&self, x: f64) -> f64 {
        x.max(0.0).powf(self.0)
    }

    fn inverse(&self, y: f64) -> f64 {
        y.max(0.0).powf(1.0 / self.0)
    }
}

/// Transform built from a pair of closures.
pub struct FnTransform<F, G> {
    pub forward: F,
    pub backward: G,
}

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64> MonotoneTransform for FnTransform<F, G> {
    fn apply(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    fn inverse(&self, y: f64) -> f64 {
        (self.backward)(y)
    }
}

/// Poisson truncation used inside the quadrature oracle, well below its target accuracy.
const QUAD_TAIL_TOL: f64 = 1e-17;

/// Smallest power-of-two multiple of the mean shift size beyond which the
/// shift survival function over `t` drops below `eps`.
fn shift_support_bound(law: &ShiftLaw, t: f64, eps: f64) -> f64 {
    let mut y = law.mean_size.max(1e-12);
    for _ in 0..200 {
        if shift_sf_tol(law, t, y, QUAD_TAIL_TOL) < eps {
            return y;
        }
        y *= 2.0;
    }
    y
}

/// Time-averaged expectation of `f(H_j)` over an interval of length `h`,
/// where `H_j` starts at distance `j` and drifts by compound Poisson shifts.
///
/// Evaluated by nested adaptive quadrature of the tail-integral identity
/// `E f(j + Y_t) = f(j) + ∫_{f(j)}^∞ P(Y_t > f⁻¹(x) - j) dx`, averaged over
/// `t ∈ [0, h]`.
pub fn expected_between_samplings<T: MonotoneTransform + ?Sized>(
    law: &ShiftLaw,
    j: f64,
    h: f64,
    f: &T,
) -> Result<f64> {
    check_interval(h)?;
    if !(j.is_finite() && j >= 0.0) {
        return Err(Error::invalid(format!("starting distance must be >= 0, got {j}")));
    }
    if !(law.rate.is_finite() && law.rate >= 0.0 && law.mean_size.is_finite() && law.mean_size > 0.0) {
        return Err(Error::invalid("shift law parameters out of range"));
    }
    let start = f.apply(j);
    if law.rate == 0.0 {
        return Ok(start);
    }
    let y_max = shift_support_bound(law, h, 1e-14);
    check_monotone(f, j, j + y_max)?;
    let x_max = f.apply(j + y_max);

    let inner_opts = QuadOptions {
        rel_tol: 1e-11,
        abs_tol: 1e-15,
        max_subdivisions: 4000,
    };
    let outer_opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15,
        max_subdivisions: 4000,
    };
    let mut inner_error = None;
    let inner = |t: f64| -> f64 {
        let excess = quadrature::integrate(
            |x| {
                let y = f.inverse(x) - j;
                if y <= 0.0 {
                    1.0 - (-t * law.rate).exp()
                } else {
                    shift_sf_tol(law, t, y, QUAD_TAIL_TOL)
                }
            },
            start,
            x_max,
            inner_opts,
        );
        match excess {
            Ok(v) => start + v,
            Err(e) => {
                inner_error.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let total = quadrature::integrate(inner, 0.0, h, outer_opts);
    if let Some(e) = inner_error {
        return Err(e);
    }
    Ok(total? / h)
}

fn check_monotone<T: MonotoneTransform + ?Sized>(f: &T, lo: f64, hi: f64) -> Result<()> {
    const PROBES: usize = 64;
    let mut prev = f.apply(lo);
    for i in 1..=PROBES {
        let x = lo + (hi - lo) * i as f64 / PROBES as f64;
        let y = f.apply(x);
        if !(y > prev) || !y.is_finite() {
            return Err(Error::numeric(
                format!("transform is not strictly increasing near x = {x}"),
                None,
            ));
        }
        let back = f.inverse(y);
        if (back - x).abs() > 1e-6 * x.abs().max(1.0) {
            return Err(Error::numeric(
                format!("transform inverse is inconsistent at x = {x}"),
                None,
            ));
        }
        prev = y;
    }
    Ok(())
}

/// Closed form of the time-averaged expected squared distance over an
/// interval of length `h` starting from distance `j`:
/// `h s δ (δ + h s δ / 3 + j) + j²`.
pub fn expected_sq_distance(law: &ShiftLaw, j: f64, h: f64) -> Result<f64> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::invalid(format!("interval length must be >= 0, got {h}")));
    }
    if !(law.rate.is_finite() && law.rate >= 0.0 && law.mean_size.is_finite() && law.mean_size > 0.0) {
        return Err(Error::invalid("shift law parameters out of range"));
    }
    if !(j.is_finite() && j >= 0.0) {
        return Err(Error::invalid(format!("starting distance must be >= 0, got {j}")));
    }
    Ok(sq_distance(law, j, h))
}

pub(crate) fn sq_distance(law: &ShiftLaw, j: f64, h: f64) -> f64 {
    let drift = h * law.rate * law.mean_size;
    drift * (law.mean_size + drift / 3.0 + j) + j * j
}
