//! Site-specific downlink channel: average gain, fading outage, per-GU
//! throughput and coverage.

mod assoc;
mod fading;

pub use assoc::{associate, associate_costs, association_cost, max_cluster_size, Association};
pub use fading::{marcum_q1, outage_prob, pathloss_db, rician_coefficients, rician_k};

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::scalar::db_to_linear;
use crate::Point;

/// Link-budget parameters in linear units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub carrier_freq: f64,
    /// Total system bandwidth, split equally over the ABSs.
    pub bandwidth_hz: f64,
    /// Nominal transmit SNR of a single ABS over the full band.
    pub transmit_snr: f64,
    /// Instantaneous SNR below which a GU is in outage.
    pub snr_threshold: f64,
    /// Minimum average throughput for a GU to count as covered (bit/s).
    pub rate_threshold: f64,
    pub rician_a1: f64,
    pub rician_a2: f64,
    /// ε in the per-ABS cap `⌊(1 + ε) M / N⌋`.
    pub load_slack: f64,
}

impl ChannelParams {
    /// Builds parameters from dB-valued settings.
    #[allow(clippy::too_many_arguments)]
    pub fn from_db(
        carrier_freq: f64,
        bandwidth_hz: f64,
        transmit_snr_db: f64,
        snr_threshold_db: f64,
        rate_threshold: f64,
        k_min_db: f64,
        k_max_db: f64,
        load_slack: f64,
    ) -> Result<Self> {
        let (rician_a1, rician_a2) =
            rician_coefficients(db_to_linear(k_min_db), db_to_linear(k_max_db));
        let p = Self {
            carrier_freq,
            bandwidth_hz,
            transmit_snr: db_to_linear(transmit_snr_db),
            snr_threshold: db_to_linear(snr_threshold_db),
            rate_threshold,
            rician_a1,
            rician_a2,
            load_slack,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth_hz", self.bandwidth_hz),
            ("transmit_snr", self.transmit_snr),
            ("snr_threshold", self.snr_threshold),
            ("rate_threshold", self.rate_threshold),
            ("rician_a1", self.rician_a1),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rician_a2 >= 0.0) || !(self.load_slack >= 0.0) {
            return Err(Error::Input(
                "rician_a2 and load_slack must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn k_min(&self) -> f64 {
        self.rician_a1
    }

    pub fn k_max(&self) -> f64 {
        rician_k(std::f64::consts::FRAC_PI_2, self.rician_a1, self.rician_a2)
    }

    /// Spectral efficiency at the SNR threshold, `log2(1 + γ̄)`.
    pub fn spectral_efficiency(&self) -> f64 {
        (1.0 + self.snr_threshold).log2()
    }

    /// Average throughput `(1 − P_out) · B / (N · M_n) · log2(1 + γ̄)`.
    pub fn throughput(&self, outage: f64, n_abs: usize, cluster_size: usize) -> f64 {
        (1.0 - outage) * self.bandwidth_hz / (n_abs as f64 * cluster_size as f64)
            * self.spectral_efficiency()
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::from_db(2e9, 20e6, 115.0, 15.0, 0.83e6, 0.0, 30.0, 0.2).expect("defaults are valid")
    }
}

/// Outage probability of the link between an ABS and a GU when `n_abs`
/// ABSs share the band.
pub fn link_outage(
    env: &Environment,
    params: &ChannelParams,
    n_abs: usize,
    abs: Point,
    gu: Point,
) -> f64 {
    let dh = env.abs_altitude() - env.gu_height();
    let horiz = abs.dist(gu);
    let d3d = horiz.hypot(dh);
    let los = env.is_los(abs, gu);
    let pl = pathloss_db(d3d, los, params.carrier_freq, env.gu_height())
        .expect("d3d > 0 since h_p > h_q");
    let mean_snr = db_to_linear(-pl) * n_abs as f64 * params.transmit_snr;
    let k = if los {
        rician_k(dh.atan2(horiz), params.rician_a1, params.rician_a2)
    } else {
        0.0
    };
    outage_prob(mean_snr, k, params.snr_threshold)
}

/// Per-GU coverage outcome of one ABS placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub indicators: Vec<bool>,
    pub throughputs: Vec<f64>,
    pub outages: Vec<f64>,
    pub rate: f64,
    pub association: Association,
}

impl CoverageReport {
    pub fn covered_count(&self) -> usize {
        self.indicators.iter().filter(|&&c| c).count()
    }
}

/// Associates GUs, evaluates every serving link and thresholds throughput.
pub fn evaluate_coverage(
    env: &Environment,
    abs_pos: &[Point],
    gu_pos: &[Point],
    params: &ChannelParams,
) -> Result<CoverageReport> {
    let n = abs_pos.len();
    if n == 0 {
        return Err(Error::Input("at least one ABS is required".into()));
    }
    if let Some(p) = abs_pos.iter().find(|p| !env.abs_position_valid(**p)) {
        return Err(Error::Input(format!(
            "ABS position ({}, {}) is not valid",
            p.x, p.y
        )));
    }
    let assoc = associate(
        abs_pos,
        gu_pos,
        max_cluster_size(gu_pos.len(), n, params.load_slack),
    )?;
    Ok(coverage_from_links(assoc, params, n, |g, a| {
        link_outage(env, params, n, abs_pos[a], gu_pos[g])
    }))
}

/// Builds the coverage report for a fixed association given a per-link outage
/// lookup `outage(gu, abs)`.
pub fn coverage_from_links(
    assoc: Association,
    params: &ChannelParams,
    n_abs: usize,
    mut outage: impl FnMut(usize, usize) -> f64,
) -> CoverageReport {
    let m = assoc.gu_to_abs.len();
    let mut indicators = Vec::with_capacity(m);
    let mut throughputs = Vec::with_capacity(m);
    let mut outages = Vec::with_capacity(m);
    for (g, &a) in assoc.gu_to_abs.iter().enumerate() {
        let p = outage(g, a);
        let r = params.throughput(p, n_abs, assoc.cluster_sizes[a]);
        outages.push(p);
        throughputs.push(r);
        indicators.push(r >= params.rate_threshold);
    }
    let covered = indicators.iter().filter(|&&c| c).count();
    let rate = if m == 0 {
        0.0
    } else {
        covered as f64 / m as f64
    };
    CoverageReport {
        indicators,
        throughputs,
        outages,
        rate,
        association: assoc,
    }
}
