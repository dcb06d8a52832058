//! Classical four-state chart: fixed shift size, perfect repair, every
//! sampling succeeds. States are in-control, out-of-control, false alarm and
//! true alarm, in that order.

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};

use crate::chain;
use crate::error::{Error, Result};
use crate::special;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineModel {
    pub mu0: f64,
    pub sigma: f64,
    /// Expected number of shifts per unit time.
    pub s: f64,
    /// Fixed shift size.
    pub delta_star: f64,
    pub h: f64,
    pub k: f64,
    pub c_s: f64,
    /// False-alarm cost.
    pub c_f: f64,
    /// Out-of-control cost per unit time.
    pub c_o: f64,
    /// Repair cost.
    pub c_r: f64,
}

impl BaselineModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("s", self.s),
            ("delta_star", self.delta_star),
            ("h", self.h),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::violation(name, format!("must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("c_s", self.c_s),
            ("c_f", self.c_f),
            ("c_o", self.c_o),
            ("c_r", self.c_r),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::violation(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.mu0.is_finite() && self.k.is_finite()) {
            return Err(Error::violation("k", "mu0 and k must be finite"));
        }
        Ok(())
    }
}

/// The 4×4 transition matrix.
pub fn baseline_transition(model: &BaselineModel) -> Result<Array2<f64>> {
    model.validate()?;
    let shifted = 1.0 - (-model.s * model.h).exp();
    let stay = 1.0 - shifted;
    let quiet = special::normal_cdf(model.k, model.sigma);
    let noisy = special::normal_sf(model.k, model.sigma);
    let missed = special::normal_cdf(model.k - model.delta_star, model.sigma);
    let caught = special::normal_sf(model.k - model.delta_star, model.sigma);
    let fresh = [stay * quiet, shifted * missed, stay * noisy, shifted * caught];
    Ok(array![
        fresh,
        [0.0, missed, 0.0, caught],
        fresh,
        fresh,
    ])
}

/// Expected fraction of an interval spent shifted but undetected,
/// `(hs e^{hs} - e^{hs} + 1) / (hs (e^{hs} - 1))`.
pub fn fraction_b(h: f64, s: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0 && s.is_finite() && s > 0.0) {
        return Err(Error::invalid("fraction B needs h > 0 and s > 0"));
    }
    let x = h * s;
    if x < 1e-4 {
        // series: 1/2 + x/12 - x^3/720
        return Ok(0.5 + x / 12.0 - x.powi(3) / 720.0);
    }
    if x > 700.0 {
        return Ok(1.0 - 1.0 / x);
    }
    let em1 = x.exp_m1();
    Ok((x * (em1 + 1.0) - em1) / (x * em1))
}

/// Stationary probabilities `(p1, p2, p3, p4)` over all four states.
pub fn baseline_stationary(model: &BaselineModel) -> Result<[f64; 4]> {
    let pi = baseline_transition(model)?;
    let st = chain::stationary_of(pi.view())?;
    Ok([st.probs[0], st.probs[1], st.probs[2], st.probs[3]])
}

/// Long-run cost per unit time,
/// `(c_s + p3 c_f + p4 c_r) / h + p2 c_o + p4 c_o B`.
pub fn baseline_cost(model: &BaselineModel) -> Result<f64> {
    let p = baseline_stationary(model)?;
    let b = fraction_b(model.h, model.s)?;
    Ok((model.c_s + p[2] * model.c_f + p[3] * model.c_r) / model.h + p[1] * model.c_o + p[3] * model.c_o * b)
}
