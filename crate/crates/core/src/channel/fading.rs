//! Path loss, Rician K-factor and outage probability.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Average path loss in dB of the urban-macro LoS/NLoS pair.
///
/// LoS: `28.0 + 22 log10(d) + 20 log10(f_c / 1 GHz)`.
/// NLoS: `max(LoS, 13.54 + 39.08 log10(d) + 20 log10(f_c / 1 GHz) − 0.6 (h_q − 1.5))`.
pub fn pathloss_db<T: Real>(d3d: T, los: bool, carrier_hz: T, gu_height: T) -> Result<T> {
    if !(d3d > T::zero()) {
        return Err(Error::Domain(format!(
            "3D distance must be positive, got {d3d}"
        )));
    }
    let f_term = T::lit(20.0) * (carrier_hz / T::lit(1e9)).log10();
    let pl_los = T::lit(28.0) + T::lit(22.0) * d3d.log10() + f_term;
    if los {
        return Ok(pl_los);
    }
    let pl_nlos = T::lit(13.54) + T::lit(39.08) * d3d.log10() + f_term
        - T::lit(0.6) * (gu_height - T::lit(1.5));
    Ok(pl_los.max(pl_nlos))
}

/// Elevation-dependent Rician factor `A1 · exp(A2 · θ)`.
#[inline]
pub fn rician_k<T: Real>(theta: T, a1: T, a2: T) -> T {
    a1 * (a2 * theta).exp()
}

/// `(A1, A2)` such that the factor spans `[k_min, k_max]` over `θ ∈ [0, π/2]`.
pub fn rician_coefficients<T: Real>(k_min: T, k_max: T) -> (T, T) {
    (k_min, (k_max / k_min).ln() / T::FRAC_PI_2())
}

/// First-order Marcum Q function `Q1(a, b)`.
pub fn marcum_q1<T: Real>(a: T, b: T) -> T {
    let a = a.abs();
    let b = b.abs();
    if b == T::zero() {
        return T::one();
    }
    let half = T::lit(0.5);
    T::one() - noncentral_cdf(half * a * a, half * b * b)
}

/// Probability that the instantaneous SNR of a unit-mean Rician(K) power
/// fade scaled by `mean_snr` falls below `threshold`:
/// `1 − Q1(√(2K), √(2(K+1)·threshold/mean_snr))`.
///
/// For `K = 0` this is the Rayleigh CDF `1 − exp(−threshold/mean_snr)`.
pub fn outage_prob<T: Real>(mean_snr: T, k_factor: T, threshold: T) -> T {
    if threshold <= T::zero() {
        return T::zero();
    }
    if mean_snr <= T::zero() {
        return T::one();
    }
    let k = k_factor.max(T::zero());
    let x = (k + T::one()) * threshold / mean_snr;
    if k == T::zero() {
        return (-(-x).exp_m1()).min(T::one()).max(T::zero());
    }
    noncentral_cdf(k, x)
}

/// `P(Z ≤ 2x)` for `Z` noncentral χ² with 2 degrees of freedom and
/// noncentrality `2λ`, i.e. `1 − Q1(√(2λ), √(2x))`.
///
/// Far tails are cut with `Q1(a,b) ≤ exp(−(b−a)²/2)` for `b > a` and
/// `1 − Q1(a,b) ≤ exp(−(a−b)²/2)/2` for `a > b`. Otherwise the CDF is summed
/// as a Poisson(λ) mixture of Gamma(j+1) CDFs, `Σ_j w_j (1 − S_j)` where
/// `S_j` is the Poisson(x) CDF at `j`.
fn noncentral_cdf<T: Real>(lambda: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if lambda <= T::zero() {
        return (-(-x).exp_m1()).min(T::one());
    }
    let two = T::lit(2.0);
    let a = (two * lambda).sqrt();
    let b = (two * x).sqrt();
    let cut = T::lit(10.0);
    if b - a > cut {
        return T::one();
    }
    if a - b > cut {
        return T::zero();
    }
    let ln_lambda = lambda.ln();
    let ln_x = x.ln();
    let tiny = T::lit(1e-18);
    let mut ln_fact = T::zero();
    let mut s = T::zero();
    let mut total = T::zero();
    let mut j = 0usize;
    loop {
        if j > 0 {
            ln_fact = ln_fact + T::lit(j as f64).ln();
        }
        let jf = T::lit(j as f64);
        s = s + (jf * ln_x - x - ln_fact).exp();
        let tail = (T::one() - s).max(T::zero());
        let w = (jf * ln_lambda - lambda - ln_fact).exp();
        total = total + w * tail;
        // Past the Poisson(λ) mode, stop once weights or remaining CDF mass are negligible.
        if jf > lambda && (w < tiny || tail < tiny) {
            break;
        }
        j += 1;
        if j > 10_000_000 {
            break;
        }
    }
    total.min(T::one()).max(T::zero())
}
