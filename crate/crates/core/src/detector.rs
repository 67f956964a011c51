//! Percentile threshold on densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub tau: f64,
    pub outlier_rate: f64,
}

impl DetectorModel {
    /// Threshold at the `outlier_rate` quantile of `densities`.
    pub fn fit(densities: &[f64], outlier_rate: f64) -> Result<Self> {
        Ok(Self {
            tau: compute_threshold(densities, outlier_rate)?,
            outlier_rate,
        })
    }

    pub fn classify(&self, density: f64) -> Label {
        classify(density, self)
    }

    pub fn classify_batch(&self, densities: &[f64]) -> Vec<Label> {
        densities.iter().map(|&f| classify(f, self)).collect()
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "outlier rate must lie in [0, 1], got {rate}"
        )));
    }
    Ok(())
}

/// The `outlier_rate` quantile of `scores`, interpolating linearly between
/// order statistics at position `outlier_rate * (n - 1)`.
pub fn compute_threshold(scores: &[f64], outlier_rate: f64) -> Result<f64> {
    check_rate(outlier_rate)?;
    if scores.is_empty() {
        return Err(Error::Empty("threshold scores"));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {i} is not finite")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = outlier_rate * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Anomaly iff `density <= tau`.
pub fn classify(density: f64, model: &DetectorModel) -> Label {
    if density <= model.tau {
        Label::Anomaly
    } else {
        Label::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        assert_eq!(compute_threshold(&[2.5; 7], 0.3).unwrap(), 2.5);
        assert_eq!(compute_threshold(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(compute_threshold(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((compute_threshold(&ten, 0.10).unwrap() - 1.9).abs() < 1e-12);
        assert!(compute_threshold(&[], 0.1).is_err());
        assert!(compute_threshold(&[1.0], 1.1).is_err());
    }

    #[test]
    fn classify_examples() {
        let m = DetectorModel {
            tau: 0.5,
            outlier_rate: 0.1,
        };
        assert_eq!(m.classify(-0.5), Label::Anomaly);
        assert_eq!(m.classify(1.5), Label::Normal);
        assert_eq!(m.classify(0.5), Label::Anomaly);
    }

    proptest! {
        #[test]
        fn flagged_fraction_tracks_rate(
            raw in prop::collection::hash_set(0u32..1_000_000, 2..200),
            rate in 0.0f64..1.0,
        ) {
            let scores: Vec<f64> = raw.into_iter().map(f64::from).collect();
            let m = DetectorModel::fit(&scores, rate).unwrap();
            let flagged = m.classify_batch(&scores).iter().filter(|l| l.is_anomaly()).count();
            let n = scores.len() as f64;
            prop_assert!((flagged as f64 / n - rate).abs() <= 1.0 / n + 1e-12);
        }

        #[test]
        fn threshold_is_permutation_invariant_and_monotone(
            mut scores in prop::collection::vec(-100.0f64..100.0, 1..50),
            rate in 0.0f64..=1.0,
            a in -100.0f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let t = compute_threshold(&scores, rate).unwrap();
            scores.reverse();
            prop_assert_eq!(t, compute_threshold(&scores, rate).unwrap());
            let m = DetectorModel { tau: t, outlier_rate: rate };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if m.classify(hi).is_anomaly() {
                prop_assert!(m.classify(lo).is_anomaly());
            }
        }
    }
}
