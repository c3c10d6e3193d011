//! Coverage predictors: per-cell coverage probabilities from an ABS pattern
//! and a GU pattern, plus thresholding and ranking metrics.

pub mod emulator;
mod oracle;

pub use emulator::Emulator;
pub use oracle::ExactOracle;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::{BinaryMask, Pattern};
use crate::scalar::Real;

/// Default output threshold η.
pub const DEFAULT_ETA: f64 = 0.5;
/// Probability clip used by [`e_bce`].
pub const BCE_CLIP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap<T> {
    pub k: usize,
    /// Row-major `k × k` probabilities.
    pub probs: Vec<T>,
}

impl<T: Real> ProbabilityMap<T> {
    pub fn filled(k: usize, v: T) -> Self {
        Self {
            k,
            probs: vec![v; k * k],
        }
    }

    pub fn to_f64(&self) -> ProbabilityMap<f64> {
        ProbabilityMap {
            k: self.k,
            probs: self.probs.iter().map(|p| p.as_f64()).collect(),
        }
    }
}

/// Thresholded CGU prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedCgu {
    pub counts: Vec<u32>,
    pub predicted_cr: f64,
}

/// Keeps the GU count of every cell whose probability exceeds `eta` (strictly).
pub fn threshold<T: Real>(
    probs: &ProbabilityMap<T>,
    gu: &Pattern,
    eta: f64,
    m: usize,
) -> Result<PredictedCgu> {
    if probs.k != gu.k {
        return Err(Error::Shape(format!(
            "probability map is {0}×{0}, GU pattern {1}×{1}",
            probs.k, gu.k
        )));
    }
    let eta = T::lit(eta);
    let counts: Vec<u32> = probs
        .probs
        .iter()
        .zip(&gu.counts)
        .map(|(&p, &c)| if p > eta { c } else { 0 })
        .collect();
    let covered: usize = counts.iter().map(|&c| c as usize).sum();
    let predicted_cr = if m == 0 {
        0.0
    } else {
        covered as f64 / m as f64
    };
    Ok(PredictedCgu {
        counts,
        predicted_cr,
    })
}

/// Mean element-wise binary cross-entropy with probabilities clipped to
/// `[BCE_CLIP, 1 − BCE_CLIP]`.
pub fn e_bce<T: Real>(probs: &ProbabilityMap<T>, label: &BinaryMask) -> Result<T> {
    if probs.k != label.k || probs.probs.len() != label.bits.len() {
        return Err(Error::Shape(
            "probability map and mask differ in size".into(),
        ));
    }
    let lo = T::lit(BCE_CLIP);
    let hi = T::one() - lo;
    let total: T = probs
        .probs
        .iter()
        .zip(&label.bits)
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            if y > 0 {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum();
    Ok(total / T::lit(probs.probs.len() as f64))
}

/// Fraction of the actual top-`k` recovered by the predicted top-`k`.
pub fn spp<I: Eq + std::hash::Hash + Clone>(
    predicted: &[I],
    actual: &[I],
    k: usize,
) -> Result<f64> {
    let uniq = |v: &[I]| v.iter().cloned().collect::<HashSet<_>>().len() == v.len();
    if !uniq(predicted) || !uniq(actual) {
        return Err(Error::Input("rankings contain duplicate ids".into()));
    }
    if k == 0 || k > predicted.len() || k > actual.len() {
        return Err(Error::Input(format!(
            "k={k} outside 1..={}",
            predicted.len().min(actual.len())
        )));
    }
    let truth: HashSet<&I> = actual[..k].iter().collect();
    let hits = predicted[..k].iter().filter(|c| truth.contains(c)).count();
    Ok(hits as f64 / k as f64)
}

/// Maps an ABS pattern and a GU pattern to per-cell coverage probabilities.
pub trait CoveragePredictor: Sync {
    fn resolution(&self) -> usize;

    fn predict(&self, abs: &Pattern, gu: &Pattern) -> Result<ProbabilityMap<f64>>;

    /// Thresholded predicted coverage rate.
    fn predicted_cr(&self, abs: &Pattern, gu: &Pattern, eta: f64) -> Result<f64> {
        let probs = self.predict(abs, gu)?;
        Ok(threshold(&probs, gu, eta, gu.total())?.predicted_cr)
    }
}

pub(crate) fn check_resolution(k: usize, abs: &Pattern, gu: &Pattern) -> Result<()> {
    if abs.k != k || gu.k != k {
        return Err(Error::Shape(format!(
            "predictor expects {k}×{k} patterns, got ABS {0}×{0} and GU {1}×{1}",
            abs.k, gu.k
        )));
    }
    Ok(())
}

/// A predictor with no information: every cell gets probability 0.5, so no
/// candidate is ever preferred over another.
#[derive(Clone, Copy, Debug)]
pub struct Blind {
    pub k: usize,
}

impl CoveragePredictor for Blind {
    fn resolution(&self) -> usize {
        self.k
    }

    fn predict(&self, abs: &Pattern, gu: &Pattern) -> Result<ProbabilityMap<f64>> {
        check_resolution(self.k, abs, gu)?;
        Ok(ProbabilityMap::filled(self.k, 0.5))
    }

    fn predicted_cr(&self, abs: &Pattern, gu: &Pattern, _eta: f64) -> Result<f64> {
        check_resolution(self.k, abs, gu)?;
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::Role;

    fn pm(k: usize, v: Vec<f64>) -> ProbabilityMap<f64> {
        ProbabilityMap { k, probs: v }
    }

    #[test]
    fn threshold_hand_example() {
        let gu = Pattern::from_rows(&[vec![2, 1], vec![0, 3]], Role::Gu).unwrap();
        let out = threshold(&pm(2, vec![1.0, 0.0, 0.0, 1.0]), &gu, 0.5, 6).unwrap();
        assert_eq!(out.counts, vec![2, 0, 0, 3]);
        assert!((out.predicted_cr - 5.0 / 6.0).abs() < 1e-15);
        let half = threshold(&pm(2, vec![0.5; 4]), &gu, 0.5, 6).unwrap();
        assert_eq!(half.counts, vec![0; 4]);
        let ones = threshold(&pm(2, vec![1.0; 4]), &gu, 0.5, 6).unwrap();
        assert_eq!(ones.predicted_cr, 1.0);
    }

    #[test]
    fn bce_values() {
        let one = BinaryMask {
            k: 1,
            bits: vec![1],
        };
        assert!((e_bce(&pm(1, vec![0.9]), &one).unwrap() - 0.105_360_5).abs() < 1e-6);
        let mask = BinaryMask {
            k: 2,
            bits: vec![0, 1, 1, 0],
        };
        assert!(
            (e_bce(&pm(2, vec![0.5; 4]), &mask).unwrap() - std::f64::consts::LN_2).abs() < 1e-12
        );
        assert!(e_bce(&pm(2, vec![0.0, 1.0, 1.0, 0.0]), &mask).unwrap() < 1e-6);
    }

    #[test]
    fn spp_footnote_examples() {
        // Candidates named by their actual rank.
        let actual: Vec<u32> = (1..=10).collect();
        assert_eq!(spp(&[1, 3, 2, 6], &actual, 4).unwrap(), 0.75);
        assert_eq!(spp(&[2, 1, 3, 4], &actual, 4).unwrap(), 1.0);
        assert!(spp(&[1, 1, 2], &actual, 2).is_err());
    }
}
