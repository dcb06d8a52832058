//! Scalar special functions shared by the probability laws.

use statrs::function::{beta, erf, gamma};

/// Poisson series are cut once the remaining upper tail drops below this.
pub const POISSON_TAIL_TOL: f64 = 1e-12;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of Normal(0, sigma) at `x`.
pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    std_normal_cdf(x / sigma)
}

/// Survival function of Normal(0, sigma) at `x`, accurate in the far upper tail.
pub fn normal_sf(x: f64, sigma: f64) -> f64 {
    0.5 * erf::erfc(x / sigma / std::f64::consts::SQRT_2)
}

/// Poisson probability mass P(N = n) for N ~ Poisson(mean).
pub fn poisson_pmf(mean: f64, n: u64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n_f = n as f64;
    (-mean + n_f * mean.ln() - gamma::ln_gamma(n_f + 1.0)).exp()
}

/// Poisson weights `P(N = n)` for `n = 0..=K`, where `K` is the smallest
/// index whose upper tail `P(N > K)` is below `tail_tol`. Also returns an
/// upper bound on that tail.
pub fn poisson_weights(mean: f64, tail_tol: f64) -> (Vec<f64>, f64) {
    let mut weights = Vec::new();
    let mut n = 0u64;
    loop {
        weights.push(poisson_pmf(mean, n));
        let next = n as f64 + 1.0;
        if next > mean {
            // P(N > n) <= pmf(n+1) / (1 - mean/(n+2)) once the terms decay geometrically
            let ratio = mean / (next + 1.0);
            let tail = poisson_pmf(mean, n + 1) / (1.0 - ratio);
            if tail < tail_tol {
                return (weights, tail);
            }
        }
        n += 1;
        if n > 1_000_000 {
            return (weights, 0.0);
        }
    }
}

/// Regularised incomplete beta function I_x(a, b), clamped to [0, 1].
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x).clamp(0.0, 1.0)
    }
}
